"""Winter-wheat yield regression benchmark toolkit.

From-scratch implementations of nine regressors (ridge, lasso, k-NN,
linear eps-SVR, CART, random forest, gradient boosting, a dense network,
and a two-branch 1-D CNN), temporal hold-out evaluation, hyperparameter
search, Shapley-value explanation, and Shapley-ranked feature selection,
plus a synthetic weather/soil/yield benchmark with known ground truth.
"""

__version__ = "0.1.0"

from . import dataio, explain, instkern, linmod, metrics, models, trees, tuning

__all__ = ["dataio", "explain", "instkern", "linmod", "metrics", "models",
           "trees", "tuning", "__version__"]
