"""Risk of classifiers under algorithmic recourse: simulation, estimation and theorem checks."""
from .core import COMPLIANT, CROSS_ENTROPY, DEFIANT, ZERO_ONE, LossFunction, ResponseModel, RngSpec
from .gen_models import CirclesModel, DiscreteGridModel, MoonsModel, TwoGaussians, bayes_classifier
from .classifiers import TrainConfig, fit
from .recourse import AcceptanceFunction, CostFunction, InfeasibleRecourseError, RecoursePolicy, apply_recourse, make_searcher
from .risk import RiskReport, TheoremCheck, estimate_risk, risk_report

__version__ = "0.1.0"
