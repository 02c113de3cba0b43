"""Worst-case robust design under norm-bounded channel errors."""
from .ao import RobustResult, robust_alternating_optimize
from .blocks import Certificate, RobustData, certify
from .lemma import signal_form_coefficients
from .validate import ValidationReport, validate_by_sampling, write_violations_csv

__all__ = ["RobustResult", "robust_alternating_optimize", "Certificate", "RobustData", "certify",
           "signal_form_coefficients", "ValidationReport", "validate_by_sampling", "write_violations_csv"]
