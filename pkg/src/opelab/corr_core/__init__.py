"""Alphabets, pointwise correlation systems, V_n elements and bound templates."""

from .bounds import (
    TEMPLATES,
    BoundFormat,
    BoundReport,
    BoundRow,
    FormatEntry,
    check_bound,
    free_field_bfnnb_constant,
    worst_case,
)
from .correlations import (
    CorrelationSystem,
    FreeFieldCorrelations,
    PointConfiguration,
    as_points,
    eval_correlation,
    mixed_wick_correlation,
)
from .structure import (
    IDENTITY,
    BoundParams,
    ConstantKernel,
    Kernel,
    Label,
    OpeStructure,
    PowerLawKernel,
    ZeroKernel,
    free_field_structure,
    structure_from_document,
    wick_label,
)
from .velements import OpeElement, Term, VElement, concat, cz_element, ope_element

__all__ = [
    "IDENTITY",
    "TEMPLATES",
    "BoundFormat",
    "BoundParams",
    "BoundReport",
    "BoundRow",
    "ConstantKernel",
    "CorrelationSystem",
    "FormatEntry",
    "FreeFieldCorrelations",
    "Kernel",
    "Label",
    "OpeElement",
    "OpeStructure",
    "PointConfiguration",
    "PowerLawKernel",
    "Term",
    "VElement",
    "ZeroKernel",
    "as_points",
    "check_bound",
    "concat",
    "cz_element",
    "eval_correlation",
    "free_field_bfnnb_constant",
    "free_field_structure",
    "mixed_wick_correlation",
    "ope_element",
    "structure_from_document",
    "wick_label",
    "worst_case",
]
