"""Simulated GRAM gatekeeper and job manager."""

from .callout import (
    GRAM_AUTHORIZATION,
    AuthzSystemError,
    CalloutNotConfigured,
    CalloutRegistry,
    CalloutRequest,
    dispatch_callout,
)
from .gatekeeper import Gatekeeper, IdentityRejected, NotInMapfile, gatekeeper_admit, parse_grid_mapfile
from .jobs import (
    AuthzDenied,
    InvalidTransition,
    JobManager,
    JobRecord,
    JobState,
    UnknownHandle,
    evaluate_residuals,
    next_state,
)
from .rsl import DuplicateAttribute, MappingTable, NoMapping, RSLRequest, RslSyntaxError, map_executable, parse_rsl

__all__ = [
    "GRAM_AUTHORIZATION",
    "AuthzDenied",
    "AuthzSystemError",
    "CalloutNotConfigured",
    "CalloutRegistry",
    "CalloutRequest",
    "DuplicateAttribute",
    "Gatekeeper",
    "IdentityRejected",
    "InvalidTransition",
    "JobManager",
    "JobRecord",
    "JobState",
    "MappingTable",
    "NoMapping",
    "NotInMapfile",
    "RSLRequest",
    "RslSyntaxError",
    "UnknownHandle",
    "dispatch_callout",
    "evaluate_residuals",
    "gatekeeper_admit",
    "map_executable",
    "next_state",
    "parse_grid_mapfile",
    "parse_rsl",
]
