"""
Empirical population model from a contact network with node covariates.

A regression tree predicts each node's degree from its covariates; every
leaf becomes a population component whose distribution is the leaf's degree
histogram, weighted by leaf size.
"""

import json
import logging
import os
import re
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import networkx as nx
import numpy as np
import pandas as pd

from data.constants import MAX_DEPTH, MIN_LEAF
from distributions import Pmf, PopulationModel

logger = logging.getLogger(__name__)

EDGE_HEADERS = {('u', 'v'), ('source', 'target'), ('from', 'to'), ('src', 'dst'), ('node1', 'node2')}
SPLIT_TOLERANCE = 1e-12


class NetworkFormatError(ValueError):
    def __init__(self, path, line, message):
        self.path = str(path)
        self.line = line
        super().__init__(f"{self.path}:{line}: {message}")


@dataclass(frozen=True)
class NodeRecord:
    node_id: str
    covariates: Dict[str, object]
    degree: int


def _delimiter(path):
    with open(path, 'r') as f:
        for line in f:
            if line.strip():
                return '\t' if '\t' in line else ','
    return ','


def _read_table(path, **kwargs) -> pd.DataFrame:
    try:
        table = pd.read_csv(path, dtype=str, keep_default_na=False, skip_blank_lines=False, **kwargs)
    except pd.errors.EmptyDataError:
        return pd.DataFrame()
    except pd.errors.ParserError as exc:
        found = re.search(r'line (\d+)', str(exc))
        raise NetworkFormatError(path, int(found.group(1)) if found else None, str(exc)) from None
    # blank lines come back as NaN rows
    return table.fillna('')


def load_edges(edges_path) -> nx.Graph:
    """Undirected simple graph from a two-column edge list.

    A first row naming the columns (``u,v``, ``source,target`` ...) is
    treated as a header. Duplicate edges collapse and self-loops are dropped.
    """
    table = _read_table(edges_path, sep=_delimiter(edges_path), header=None)
    graph = nx.Graph()
    dropped = 0
    for i, row in enumerate(table.itertuples(index=False), start=1):
        fields = [v.strip() for v in row]
        if not any(fields):
            continue
        if i == 1 and len(fields) >= 2 and (fields[0].lower(), fields[1].lower()) in EDGE_HEADERS:
            continue
        if len(fields) < 2 or not fields[0] or not fields[1] or any(fields[2:]):
            raise NetworkFormatError(edges_path, i, f"expected two node ids, got {fields}")
        u, v = fields[0], fields[1]
        if u == v:
            graph.add_node(u)
            dropped += 1
            continue
        graph.add_edge(u, v)
    if dropped:
        logger.info("dropped %d self-loops from %s", dropped, edges_path)
    logger.info("loaded graph with %d nodes and %d edges", graph.number_of_nodes(), graph.number_of_edges())
    return graph


def _typed_columns(table: pd.DataFrame) -> Dict[str, list]:
    """Numeric when every value parses as a number, otherwise categorical."""
    typed = {}
    for name in table.columns[1:]:
        raw = table[name].str.strip()
        numeric = pd.to_numeric(raw, errors='coerce')
        if len(raw) and numeric.notna().all():
            typed[name] = [float(v) for v in numeric]
        else:
            typed[name] = list(raw)
    return typed


def load_network(edges_path, covariates_path=None) -> Tuple[nx.Graph, List[NodeRecord]]:
    graph = load_edges(edges_path)
    covariates: Dict[str, Dict[str, object]] = {}
    if covariates_path is not None:
        table = _read_table(covariates_path, sep=_delimiter(covariates_path))
        if table.shape[1] < 1:
            raise NetworkFormatError(covariates_path, 1, "missing header row")
        table = table[table.apply(lambda r: any(str(v).strip() for v in r), axis=1)]
        typed = _typed_columns(table)
        names = list(typed)
        for pos, (line, node) in enumerate(zip(table.index, table.iloc[:, 0].str.strip())):
            # header is line 1
            if not node:
                raise NetworkFormatError(covariates_path, line + 2, "empty node id")
            if node not in graph:
                logger.warning("covariate row for unknown node %r at %s:%d, skipped", node, covariates_path, line + 2)
                continue
            if node in covariates:
                logger.warning("duplicate covariate row for node %r at %s:%d, keeping the first",
                               node, covariates_path, line + 2)
                continue
            covariates[node] = {name: typed[name][pos] for name in names}

    records = [NodeRecord(node_id=node, covariates=covariates.get(node, {}), degree=int(graph.degree(node)))
               for node in graph.nodes]
    uncovered = sum(1 for r in records if not r.covariates)
    if covariates_path is not None and uncovered:
        logger.info("%d nodes have no covariates and go to the catch-all leaf", uncovered)
    return graph, records


@dataclass
class TreeNode:
    members: Tuple[str, ...]
    depth: int
    covariate: Optional[str] = None
    threshold: object = None
    left: Optional["TreeNode"] = None
    right: Optional["TreeNode"] = None
    leaf_id: Optional[int] = None

    def is_leaf(self):
        return self.left is None and self.right is None

    def goes_left(self, value) -> bool:
        if isinstance(self.threshold, str):
            return value == self.threshold
        return value <= self.threshold

    def rule(self, left: bool) -> str:
        if isinstance(self.threshold, str):
            return f"{self.covariate} {'==' if left else '!='} {self.threshold}"
        return f"{self.covariate} {'<=' if left else '>'} {self.threshold:g}"


@dataclass
class Partition:
    root: Optional[TreeNode]
    catch_all: Tuple[str, ...] = ()
    leaves: List[Tuple[int, str, Tuple[str, ...]]] = field(default_factory=list)

    def __post_init__(self):
        self.leaves = []
        if self.root is not None:
            self._collect(self.root, [])
        if self.catch_all:
            self.leaves.append((len(self.leaves), 'no covariates', tuple(self.catch_all)))

    def _collect(self, node, path):
        if node.is_leaf():
            node.leaf_id = len(self.leaves)
            self.leaves.append((node.leaf_id, ' & '.join(path) or 'all', node.members))
            return
        self._collect(node.left, path + [node.rule(True)])
        self._collect(node.right, path + [node.rule(False)])

    @property
    def depth(self) -> int:
        def walk(node):
            return 0 if node.is_leaf() else 1 + max(walk(node.left), walk(node.right))
        return 0 if self.root is None else walk(self.root)


def _sse(y: np.ndarray) -> float:
    return float(((y - y.mean()) ** 2).sum()) if y.size else 0.0


def candidate_splits(rows: Sequence[NodeRecord], min_leaf: int):
    """(reduction, covariate, threshold) for every admissible split of ``rows``.

    Numeric covariates split at midpoints of consecutive distinct values,
    categorical ones as one category against the rest.
    """
    y = np.array([r.degree for r in rows], dtype=np.float64)
    parent = _sse(y)
    names = sorted(set.intersection(*(set(r.covariates) for r in rows)))
    for name in names:
        values = [r.covariates[name] for r in rows]
        if all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in values):
            x = np.array(values, dtype=np.float64)
            distinct = np.unique(x)
            thresholds = [float((lo + hi) / 2) for lo, hi in zip(distinct[:-1], distinct[1:])]
            masks = [x <= t for t in thresholds]
        else:
            x = np.array([str(v) for v in values], dtype=object)
            thresholds = sorted(set(x))
            masks = [x == c for c in thresholds]
        for t, mask in zip(thresholds, masks):
            n_left = int(mask.sum())
            if n_left < min_leaf or len(rows) - n_left < min_leaf:
                continue
            yield parent - _sse(y[mask]) - _sse(y[~mask]), name, t


def best_split(rows: Sequence[NodeRecord], min_leaf: int):
    """Largest reduction; ties go to the first covariate name, then threshold."""
    best = None
    for reduction, name, t in candidate_splits(rows, min_leaf):
        if best is None or reduction > best[0] + SPLIT_TOLERANCE:
            best = (reduction, name, t)
    return best


def _grow(rows, depth, max_depth, min_leaf) -> TreeNode:
    node = TreeNode(members=tuple(r.node_id for r in rows), depth=depth)
    if depth >= max_depth or len(rows) < 2 * min_leaf:
        return node
    found = best_split(rows, min_leaf)
    if found is None or found[0] <= SPLIT_TOLERANCE * max(1.0, _sse(np.array([r.degree for r in rows], float))):
        return node
    _, node.covariate, node.threshold = found
    left = [r for r in rows if node.goes_left(r.covariates[node.covariate])]
    right = [r for r in rows if not node.goes_left(r.covariates[node.covariate])]
    logger.debug("split %d nodes on %s at depth %d", len(rows), node.rule(True), depth)
    node.left = _grow(left, depth + 1, max_depth, min_leaf)
    node.right = _grow(right, depth + 1, max_depth, min_leaf)
    return node


def fit_partition(records: Sequence[NodeRecord], max_depth: int = MAX_DEPTH, min_leaf: int = MIN_LEAF) -> Partition:
    """Greedy regression tree on degree.

    Records without covariates are kept out of the tree and form a
    catch-all leaf of their own.
    """
    if not records:
        raise ValueError("cannot partition an empty record set")
    if max_depth < 0:
        raise ValueError(f"max_depth must be non-negative, got {max_depth}")
    if min_leaf < 1:
        raise ValueError(f"min_leaf must be at least 1, got {min_leaf}")
    covered = [r for r in records if r.covariates]
    uncovered = tuple(r.node_id for r in records if not r.covariates)
    if not covered:
        return Partition(root=TreeNode(members=uncovered, depth=0))
    root = _grow(covered, 0, max_depth, min_leaf)
    partition = Partition(root=root, catch_all=uncovered)
    logger.info("partition has %d leaves (depth %d)", len(partition.leaves), partition.depth)
    return partition


def build_population(partition: Partition, records: Sequence[NodeRecord],
                     tail: int = None) -> Tuple[PopulationModel, Dict[str, Pmf]]:
    """One component per leaf: its degree histogram, weighted by leaf size.

    Degrees at or above ``tail`` are folded into the ``tail`` bucket.
    """
    if not partition.leaves:
        raise ValueError("partition has no leaves")
    degree = {r.node_id: r.degree for r in records}
    total = sum(len(members) for _, _, members in partition.leaves)
    components, node_estimates = [], {}
    for _, _, members in partition.leaves:
        pmf = Pmf.from_counts([degree[m] for m in members], tail=tail)
        components.append((len(members) / total, pmf))
        for m in members:
            node_estimates[m] = pmf
    return PopulationModel(tuple(components)), node_estimates


def leaf_summary(partition: Partition, records: Sequence[NodeRecord]) -> pd.DataFrame:
    degree = {r.node_id: r.degree for r in records}
    total = sum(len(members) for _, _, members in partition.leaves)
    return pd.DataFrame([{
        'leaf': leaf_id,
        'rule': rule,
        'size': len(members),
        'weight': len(members) / total,
        'mean_degree': float(np.mean([degree[m] for m in members])),
    } for leaf_id, rule, members in partition.leaves])


def write_population(population: PopulationModel, node_estimates: Dict[str, Pmf],
                     population_path, estimates_path=None):
    with open(population_path, 'w') as f:
        f.write(population.to_json())
        f.write('\n')
    if estimates_path is None:
        return
    index = {id(d): i for i, d in enumerate(population.pmfs)}
    payload = {
        'leaf_pmfs': [d.to_dict()['probs'] for d in population.pmfs],
        'node_leaf': {node: index[id(d)] for node, d in sorted(node_estimates.items())},
    }
    with open(estimates_path, 'w') as f:
        json.dump(payload, f, sort_keys=True, indent=2)
        f.write('\n')


def load_node_estimates(path) -> Dict[str, Pmf]:
    with open(path, 'r') as f:
        payload = json.load(f)
    leaves = [Pmf(probs) for probs in payload['leaf_pmfs']]
    return {str(node): leaves[i] for node, i in payload['node_leaf'].items()}


def synthetic_network(n_nodes: int = 300, seed: int = 0, m: int = 3, triangle_prob: float = 0.3):
    """Clustered power-law graph with covariates that track degree.

    ``hub`` is a noisy high-degree indicator, ``age`` a numeric covariate
    rising with degree and ``site`` pure noise.
    """
    if n_nodes <= m:
        raise ValueError(f"need more than {m} nodes, got {n_nodes}")
    graph = nx.powerlaw_cluster_graph(n_nodes, m, triangle_prob, seed=seed)
    graph = nx.relabel_nodes(graph, {v: str(v) for v in graph.nodes})
    rng = np.random.default_rng(seed)
    nodes = list(graph.nodes)
    degrees = np.array([graph.degree(v) for v in nodes], dtype=np.float64)
    hub = degrees >= np.median(degrees)
    flip = rng.random(len(nodes)) < 0.1
    covariates = pd.DataFrame({
        'node': nodes,
        'hub': np.where(hub ^ flip, 'yes', 'no'),
        'age': np.round(18 + 1.5 * degrees + rng.normal(0.0, 3.0, len(nodes))).astype(int),
        'site': rng.choice(['north', 'south', 'east'], size=len(nodes)),
    })
    return graph, covariates


def write_synthetic_network(graph: nx.Graph, covariates: pd.DataFrame, out_dir) -> Tuple[str, str]:
    os.makedirs(out_dir, exist_ok=True)
    edges_path = os.path.join(out_dir, 'edges.csv')
    covariates_path = os.path.join(out_dir, 'covariates.csv')
    pd.DataFrame(list(graph.edges), columns=['u', 'v']).to_csv(edges_path, index=False)
    covariates.to_csv(covariates_path, index=False)
    return edges_path, covariates_path
