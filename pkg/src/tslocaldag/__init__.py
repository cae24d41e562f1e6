"""Local causal structure learning from replicated multivariate time series.

The package learns the directed neighborhood of a target variable in a
dynamic linear model: datasets are piled into lag windows, conditional
independence is judged by a likelihood-ratio test rescaled for serial
dependence, and a two-part local search recovers parents, children and
deeper neighbors without estimating the whole graph.
"""

from .citest import (CiHypothesis, CiTestConfig, CiTestResult, ClrtTester,
                     InfiniteStatisticError, OracleCiTester, SingularityError,
                     ci_test, default_bandwidth, estimate_lambda,
                     partial_correlation)
from .data import (DataError, ParseError, PiledMatrix, SufficientStats,
                   TimeSeriesDataset, load_dataset, pile, save_dataset_csv,
                   save_dataset_json, sufficient_stats)
from .evaluate import (CalibrationReport, PrReport, precision_recall,
                       run_calibration, run_table3)
from .graph import (CyclicGraphError, Dag, GraphError, Pdag, SepsetRegistry,
                    cpdag, d_separated, find_v_structures, graph_from_json,
                    graph_to_json, load_graph_file, meek_closure, node_index,
                    node_lag, node_var)
from .learner import LearnConfig, LocalStructure, learn_local, save_local_structure
from .mmpc import MmpcConfig, PcdResult, find_pcd
from .simulate import (DynamicSem, SemSkeleton, SimConfig, SimulationError,
                       alarm_dynamic_skeleton, extend_to_dynamic,
                       generate_dataset, load_alarm, sample_coefficients,
                       sem_from_json, sem_to_json)

__version__ = "0.1.0"
