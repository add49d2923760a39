# %% [markdown]
# # Random forest regression
#
# The forest is plain CART with variance-reduction splits and bootstrap
# bagging. Each tree draws from its own generator keyed by the forest
# seed and the tree index, so results do not depend on thread count.

# %%
import numpy as np

from fatigue_merf.forest import ForestParams, RandomForest, best_split, fit_forest
from fatigue_merf.synth import SynthSpec, gen_clustered

print(best_split([[0], [1], [2], [3]], [0, 0, 10, 10]))  # (feature, threshold, gain)

X, y, _, truth = gen_clustered(SynthSpec(n_clusters=1, per_cluster=600, sigma_b=0, seed=2))
train, test = slice(0, 500), slice(500, None)
forest = fit_forest(X[train], y[train], ForestParams(n_trees=100, seed=1))
rmse = np.sqrt(np.mean((forest.predict(X[test]) - y[test]) ** 2))
print(f"held-out RMSE {rmse:.2f} (noise sd 1, response sd {y.std():.2f})")

# %% [markdown]
# Importance is the summed SSE reduction per feature, normalised to one.
# The first five columns drive the response, the last five are noise.

# %%
print(np.round(forest.importance, 3))

# %% [markdown]
# Same seed, any thread count: byte-identical serialised forests. The JSON
# document round-trips exactly.

# %%
prm = ForestParams(n_trees=20, seed=7)
a = fit_forest(X, y, prm, threads=1).dumps()
b = fit_forest(X, y, prm, threads=4).dumps()
print("identical:", a == b, "size:", len(a), "bytes")
print("round trip:", RandomForest.loads(a).dumps() == a)
