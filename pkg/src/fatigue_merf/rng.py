"""The one random-number source used across the package.

Every stream is a Philox-4x64 counter-based generator keyed by a
``SeedSequence`` over integer tuples such as ``(seed, tree_index)``, so
results are a pure function of the key and never of call order.
"""

import numpy as np


def keyed_rng(*key):
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(k) for k in key])))
