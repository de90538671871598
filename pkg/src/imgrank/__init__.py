"""Image classification with NMF/PCA reduction and manifold-ranking 1-NN."""

from .classify import LabeledIndex, euclidean_nn_classify, rank_nn_classify
from .config import Config
from .dimred import combine, nmf_fit, nmf_transform, pca_fit, pca_transform
from .evaluation import Method, make_folds, render_report, run_method
from .graphrank import build_knn_graph, manifold_rank_closed, manifold_rank_iterative, similarity_matrix
from .imaging import Dataset, FeatureVector, ImageRecord, extract_features, load_corpus

__version__ = "0.1.0"
