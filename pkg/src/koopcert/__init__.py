"""Multilayer data-quality certificates for EDMDc system identification."""
from .acquisition import METHOD_IDS, IgpeWeights, MethodSpec, acquire, greedy_dopt, score_igpe
from .certificates import CertificateConfig, CertificateReport, full_report
from .downstream import TaskConfig, evaluate_tasks
from .edmdc import EDMDc, fit_edmdc, one_step_errors
from .exceptions import DegenerateDesignError, SimulationDivergence, UsageError
from .lifting import Dictionary, PolynomialLift, build_design
from .standardize import ActiveStandardizer, standardize
from .systems import SYSTEM_IDS, Dataset, get_system, simulate_segment

__version__ = "0.1.0"

__all__ = [
    "METHOD_IDS", "IgpeWeights", "MethodSpec", "acquire", "greedy_dopt", "score_igpe",
    "CertificateConfig", "CertificateReport", "full_report", "TaskConfig", "evaluate_tasks",
    "EDMDc", "fit_edmdc", "one_step_errors", "DegenerateDesignError", "SimulationDivergence",
    "UsageError", "Dictionary", "PolynomialLift", "build_design", "ActiveStandardizer", "standardize",
    "SYSTEM_IDS", "Dataset", "get_system", "simulate_segment",
]
