"""Multiple Choice Hard Thresholding Pursuit and sparse-recovery baselines."""
from .algorithms import (
    ALGORITHMS,
    AlgoConfig,
    run_ghtp,
    run_htp,
    run_mchtp,
    run_msp,
    run_sp,
)
from .problem import ProblemInstance, SignalStructure, generate_instance
from .trace import IterationRecord, RunTrace

__version__ = "0.1.0"
