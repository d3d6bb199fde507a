"""Multistage stochastic mirror descent for sparse recovery."""
from .core import AlgoConstants, DimensionError, NumericError, RngStream, RunTrace, risk_metrics
from .models import GlrModel, TraceModel, make_sparse_instance, make_trace_instance, suggest_constants
from .prox import euclidean, l1_power, nuclear, prox_map
from .smd import StageConfig, run_stage
from .smd_sr import CusumConfig, PracticalConfig, SmdSrConfig, run_smd_sr
from .sparsify import group, low_rank, sparsify_point, vanilla

__version__ = "0.1.0"
