"""Dropout-based Bayesian complex-valued neural networks.

Complex layers carried as paired real arrays, Bernoulli part-mode
channel dropout for Monte-Carlo uncertainty, an evolutionary search
over per-layer dropout configurations under hardware-cost constraints,
and an analytical cost model for two hardware mapping schemes.
"""

from .errors import (ConfigError, EvaluationError, FormatError,
                     SearchInfeasible, ShapeError, TrainingDiverged)
from .tensor import (ComplexTensor, allclose, cadd, cmul, csub, czeros,
                     magnitude, read_tensor, scale, write_tensor)
from .layers import (ComplexWeights, LayerKind, LayerSpec, NetworkSpec, PartMode,
                     activation, apply_genome, bernoulli_channel_dropout,
                     complex_activation, complex_conv2d, complex_dense,
                     complex_pool, conv2d, dense, dropout, forward, init_weights,
                     pool, read_network_json, write_network_json)
from .train import (TrainConfig, backward, load_checkpoint, loss,
                    save_checkpoint, softmax_magnitude, train)
from .inference import (EvalReport, MCPrediction, accuracy, calibration_bins,
                        ece, evaluate_dataset, mc_predict)
from .search import (Constraint, FitnessRecord, MAX_ACC, MIN_ECE, MemoizedEvaluator,
                     Objective, SearchConfig, SearchResult, crossover, dropout_count,
                     enumerate_all, evaluate, genome_from_string, genome_to_string,
                     make_pipeline_evaluator, make_table_evaluator, mutate,
                     pareto_front, run_search, select, weighted)
from .hw import (CostEstimate, LayerClass, MappingScheme, NetworkCost,
                 SchemeComparison, classify_layer, compare_schemes,
                 estimate_layer, estimate_network)
from .data import (Dataset, SyntheticSpec, generate_synthetic, lift_images,
                   load_dataset, load_mnist_complex, read_idx_images,
                   read_idx_labels, save_dataset, write_idx_images,
                   write_idx_labels)

__version__ = "0.1.0"
