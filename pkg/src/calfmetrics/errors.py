"""Exception types shared across the package.

Every loader and numerical routine raises one of these instead of a bare
ValueError so callers (and the CLI) can map failures to exit codes:
CalfMetricsError -> data/config problems, NumericalError -> solver trouble.
"""


class CalfMetricsError(Exception):
    """Base class for all package-specific errors."""


# --- raster / geometry ---------------------------------------------------

class ChannelMismatch(CalfMetricsError):
    """Operation received an image with the wrong number of channels."""


class EmptyMask(CalfMetricsError):
    """Operation requires at least one set pixel."""


class EmptyContour(CalfMetricsError):
    """Operation requires a non-empty contour."""


class DegeneratePolygon(CalfMetricsError):
    """Polygon has fewer than 3 vertices."""


# --- ingestion ------------------------------------------------------------

class SchemaError(CalfMetricsError):
    """A required column is missing from a tabular file."""

    def __init__(self, column, path=None):
        self.column = column
        self.path = path
        super().__init__(f"missing column {column!r}" + (f" in {path}" if path else ""))


class ParseError(CalfMetricsError):
    """A cell failed to parse; carries the 1-based line number."""

    def __init__(self, message, line=None, path=None):
        self.line = line
        self.path = path
        loc = "".join([f" in {path}" if path else "", f" at line {line}" if line else ""])
        super().__init__(message + loc)


class ConsistencyError(CalfMetricsError):
    """Rows are individually valid but mutually contradictory."""

    def __init__(self, message, calf_id=None):
        self.calf_id = calf_id
        super().__init__(message)


class ShapeError(CalfMetricsError):
    """Array/grid dimensions do not match what the operation requires."""

    def __init__(self, message, row=None):
        self.row = row
        super().__init__(message)


class PairMismatch(CalfMetricsError):
    """Depth map dimensions disagree with the paired color frame."""


class DuplicateLabel(CalfMetricsError):
    """More than one polygon label exists for the same frame."""


# --- segmentation / metrics -----------------------------------------------

class InvalidParams(CalfMetricsError):
    """Segmentation parameters violate their invariants."""


class NoValidDepth(CalfMetricsError):
    """Every in-mask depth pixel is a missing-data sentinel."""


# --- statistics -----------------------------------------------------------

class DegenerateInput(CalfMetricsError):
    """Statistical input has no variance or too few elements."""


class InsufficientGroups(CalfMetricsError):
    """A group comparison needs at least two groups."""


class InsufficientRows(CalfMetricsError):
    """A stratum has too few rows for the requested statistic."""

    def __init__(self, message, quartile=None):
        self.quartile = quartile
        super().__init__(message)


class LabelMismatch(CalfMetricsError):
    """Two labeled matrices do not share the same label order."""


class NumericalError(CalfMetricsError):
    """An iterative numerical routine failed to converge."""


# --- models ---------------------------------------------------------------

class RankDeficient(CalfMetricsError):
    """Design matrix is rank deficient; carries the offending column index."""

    def __init__(self, column):
        self.column = column
        super().__init__(f"design matrix is rank deficient (column {column})")


class VarianceNotIdentifiable(CalfMetricsError):
    """Random-effect variance cannot be identified (e.g. a single group)."""


class FitDiverged(CalfMetricsError):
    """Model fit produced a non-finite objective."""


# --- evaluation harness ---------------------------------------------------

class DegenerateTarget(CalfMetricsError):
    """Target vector has zero variance; R^2 undefined."""


class InvalidTarget(CalfMetricsError):
    """Target contains values outside the metric's domain (e.g. y <= 0)."""


class InvalidK(CalfMetricsError):
    """Fold count must be at least 2."""


class InsufficientSeries(CalfMetricsError):
    """A calf has too few time points for a longitudinal split."""

    def __init__(self, calf_id, message=None):
        self.calf_id = calf_id
        super().__init__(message or f"calf {calf_id!r} has too few observations")


# --- generation / config ---------------------------------------------------

class ConfigError(CalfMetricsError):
    """Configuration values are inconsistent or reference missing paths."""


class HarnessError(CalfMetricsError):
    """A model failed inside a cross-validation job; carries the job context."""

    def __init__(self, context, cause):
        self.context = context
        self.cause = cause
        super().__init__(f"{context}: {cause}")
