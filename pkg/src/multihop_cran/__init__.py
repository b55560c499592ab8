"""Compression and routing for the multihop backhaul of uplink cloud radio access networks.

Schemes: per-RU compression with routed bit streams (:func:`optimize_mf`),
joint decompress-process-recompress at every node (:func:`optimize_dpr_opt`,
:func:`optimize_dpr_rank`, :func:`dpr_not_opt`), its decentralized variants
(:func:`optimize_ff`, :func:`optimize_ff_fb`, :func:`optimize_dec_si`) and
the two-CU extension (:func:`optimize_multi_cu`).
"""
from .channel import ChannelRealization, from_matrices, received_covariance, sample_channel
from .common import MMOptions, OptimizationRecord
from .decentralized import (EffectiveChannel, SequencingError, effective_channel, optimize_dec_si,
                            optimize_decentralized, optimize_ff, optimize_ff_fb, sideinfo_covariances,
                            waterfill_ff)
from .dpr import (DprConfig, DprSolution, dpr_backhaul_rate, dpr_backhaul_rates, dpr_not_opt, dpr_sum_rate,
                  identity_transform, optimize_dpr_opt, optimize_dpr_rank, transfer_matrices)
from .mf import MfSolution, mf_compression_rate, mf_sum_rate, optimize_mf
from .montecarlo import ExperimentResult, RunFailedError, run_monte_carlo, trial_seed
from .multicu import MultiCuSolution, multi_cu_rates, optimize_multi_cu
from .scenarios import (Scenario, cutset_upper_bound, hierarchical_scenario, multi_cu_scenario,
                        run_scheme)
from .topology import (CU, RU, ActiveEdgeSet, Edge, Node, RoutingPartition, Topology, TopologyError,
                       active_edges, depth, effective_capacity)

__version__ = "0.1.0"
