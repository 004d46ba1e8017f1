"""Simultaneous Max-Cut: Lasserre-lift pipeline, biased rounding and a ratio prover."""

from simcut.errors import SimcutError
from simcut.instance import SimInstance, brute_force_opt, load_instance
from simcut.pipeline import PipelineConfig, RunReport, run
from simcut.preprocess import Params, run_preprocess
from simcut.prover import Certificate, ProverConfig, certify
from simcut.rounding import RoundingFunction

__version__ = "0.1.0"

__all__ = [
    "Certificate",
    "Params",
    "PipelineConfig",
    "ProverConfig",
    "RoundingFunction",
    "RunReport",
    "SimInstance",
    "SimcutError",
    "brute_force_opt",
    "certify",
    "load_instance",
    "run",
    "run_preprocess",
]
