"""
Services package - Scheme and analysis layer.

This package contains the CKKS scheme, the encrypted DFT passes, the analytic cost model
and report rendering.
"""

from services.ckks_service import CkksService
from services.cost_model_service import (
    CostModelService,
    CostReport,
    ParamProfile,
    get_cost_model_service,
    get_profile,
)
from services.hdft_service import BootstrapResult, HdftService
from services.report_service import Report, ReportService, get_report_service

__all__ = [
    "BootstrapResult",
    "CkksService",
    "CostModelService",
    "CostReport",
    "HdftService",
    "ParamProfile",
    "Report",
    "ReportService",
    "get_cost_model_service",
    "get_profile",
    "get_report_service",
]
