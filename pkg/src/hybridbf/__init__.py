"""Hybrid analog/digital precoding simulator for mmWave massive MIMO.

Channel generation (clustered multipath over uniform planar arrays),
optimal/OMP/ZF/sub-connected precoder constructions, a from-scratch MLP
autoencoder that learns analog phases, link metrics (spectral efficiency,
16-QAM BER, complexity, beam patterns), and an experiment harness.
"""

__version__ = "0.1.0"

from .channel import (ArrayGeometry, ChannelRealization, ClusterSet, RaySpec,
                      array_response, build_channel, generate_channel,
                      generate_channels, make_rng, normalize_channel,
                      sample_cluster_set)
from .config import ExperimentConfig, config_hash, load_config, serialize_config
from .estimator import PrecoderAutoencoder
from .exceptions import (ConfigError, DegenerateError, DimensionError,
                         DivergenceError, NumericalError, RankDeficiencyError,
                         SimulationError)
from .linalg import (LeastSquaresSolution, MultiplicationCounter, SvdResult,
                     frobenius_norm, herm, least_squares, matmul_counted, svd)
from .metrics import (BeamGrid, LinkBudget, beam_pattern, ber_16qam,
                      complexity_count, spectral_efficiency)
from .precoders import (AnalogStructure, CombinerPair, HybridPrecoder,
                        PrecoderDictionary, enforce_power, make_subconnected,
                        mmse_combiner, omp_hybrid_combiner, omp_hybrid_precoder,
                        optimal_combiner, optimal_precoder,
                        subconnected_hybrid_precoder, zf_hybrid_precoder)

__all__ = [name for name in dir() if not name.startswith("_")]
