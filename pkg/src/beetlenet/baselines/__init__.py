from .forest import DecisionTree, RandomForest, gini_gain, gini_impurity, rf_fit, rf_predict
from .knn import KNNModel, knn_fit, knn_predict
from .search import DEFAULT_GRIDS, FEATURE_SIDE, GridResult, expand_grid, featurize, featurize_all, grid_search
from .svm import Kernel, SVMConvergenceError, SVMModel, kkt_residuals, svm_fit, svm_predict


__all__ = [
    "DecisionTree", "RandomForest", "gini_gain", "gini_impurity", "rf_fit", "rf_predict",
    "KNNModel", "knn_fit", "knn_predict",
    "DEFAULT_GRIDS", "FEATURE_SIDE", "GridResult", "expand_grid", "featurize", "featurize_all", "grid_search",
    "Kernel", "SVMConvergenceError", "SVMModel", "kkt_residuals", "svm_fit", "svm_predict",
]
