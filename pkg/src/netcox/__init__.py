"""Relational-event Cox models on dynamic networks.

Simulation by thinning, kernel-localized likelihood fits, an L2-type
test for coefficient constancy, typed block partitions with empirical
mixing diagnostics, and prediction-error bandwidth selection. Hot
kernels run on a compiled backend when available, with a pure numpy
fallback (set NETCOX_PURE_PYTHON=1 to force the fallback).
"""

__version__ = "0.1.0"

from .backend import BACKEND, available_backends
from .bandwidth import (RHO, BandwidthCurve, prediction_error,
                        scan_bandwidths, select_bandwidth)
from .calibration import (constant_path, er_cox_instance, mc_rejections,
                          mc_variance_comparison, swing_path)
from .errors import (ConfigurationError, DataError, DegenerateVariance,
                     DomainError, FitError, InstanceTooLarge, NetcoxError,
                     NoDataInWindow, NumericError, SimulationError,
                     TestError)
from .estimate import (BOX, EPANECHNIKOV, TRIANGULAR, CoxDesign, GlobalFit,
                       Kernel, LocalFit, SigmaPath, fit_global, fit_local,
                       get_kernel, k4_constant, local_loglik,
                       local_score_hessian, pbar_hat, pbar_hat_many,
                       sigma_hat)
from .goftest import (TestResult, WeightFunction, centering_an, run_test,
                      test_statistic, variance_b, variance_b_martingale)
from .netcore import (DynamicNetwork, HubReport, PairDistanceSnapshot,
                      edge_active, grid_edge_anchor, grid_network,
                      hub_report, normalize_pair, pair_distance_snapshot)
from .partition import (BlockSums, PartitionAssignment, block_sums,
                        coordinate_partition, estimate_beta,
                        grid_chessboard, mds_partition, validate_partition)
from .simulate import (BlockModel, CovariateField, EventLog, ParameterPath,
                       TorusCovariance, TorusField, adoption_times,
                       compensator, pair_stream, sample_block_network,
                       simulate_adoption, simulate_cox, simulate_torus_ar,
                       torus_covariance)

__all__ = [name for name in dir() if not name.startswith("_")]
