"""
Planning constants and experiment defaults
"""
# Numerical tolerances
MASS_TOLERANCE = 1e-9  # |sum(probs) - 1| allowed at construction
CLAMP_TOLERANCE = 1e-12  # renormalize a PGF only if drift exceeds this

# Brute-force allocation guard (number of allocations enumerated)
MAX_ENUMERATION = 10 ** 7

# Baseline policy grid
CONST_KS = (2, 3, 5, 10)
GREEDY_ALPHAS = (0.1, 0.2, 0.5, 1.0)

# Experiment grid
GAMMAS = (0.5, 0.7, 0.9)
INITIAL_FRONTIER_SIZES = (5, 10, 15)
RUNS = 30
DEFAULT_SEED = 20240601

# Round cap = ROUND_CAP_FACTOR * total budget
ROUND_CAP_FACTOR = 10

# Population builder
MAX_DEPTH = 4
MIN_LEAF = 10

# CSV schema of episode rows
EPISODE_COLUMNS = [
    'env', 'policy', 'param', 'gamma', 'n0', 'b', 'seed', 'rounds',
    'spend', 'recruits', 'discounted_reward', 'termination',
]

TERMINATIONS = ('budget_exhausted', 'frontier_empty', 'round_cap')
