"""Split conformal quantile regression with density-calibrated local adjustment."""

__version__ = "0.1.0"

from .calibrate import LambdaObjective, LambdaResult, brent_minimize, coverage_at, optimize_lambda
from .conformal_core import (ConformityScores, GlobalQuantile, conformity_score, cqr_interval,
                             cqr_intervals, empirical_quantile, fit_cqr)
from .dataset import (ColumnMeta, DataError, Dataset, SplitIndices, Standardizer, fit_standardizer,
                      load_csv, save_csv, split_dataset, standardize)
from .density import (CqrdModel, IntervalBatch, LocalContext, combined_quantile, fit_cqrd,
                      local_context, local_density, local_weight, predict_intervals)
from .neighbors import NeighborIndex, NeighborSet, build_index, knn_query, knn_query_batch
from .quantile_regression import (LearnerSpec, QuantileModel, fit_knn_quantile, fit_linear_pinball,
                                  fit_quantile_model, pinball_loss, predict_pair, predict_pairs)
from .utils import NumericalError, QuantileClampWarning
from .serialization import load_model, save_model
from .simulate import SimConfig, generate, generate_diamonds_like, run_replications
