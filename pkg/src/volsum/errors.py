"""Exception taxonomy shared across the package."""


class VolsumError(Exception):
    """Base class for all package errors."""


class DimensionMismatch(VolsumError):
    """Paired arrays (rgb/depth, pred/gt, ...) do not share dimensions."""


class UnreadableFile(VolsumError):
    """A file could not be opened or decoded."""


class NegativeDepth(VolsumError):
    """Depth raster contains negative or non-finite values."""


class MalformedManifest(VolsumError):
    """Dataset manifest line failed to parse; message names the line."""

    def __init__(self, line_no, message):
        self.line_no = line_no
        super().__init__(f"manifest line {line_no}: {message}")


class InsufficientPoints(VolsumError):
    """Fewer valid 3-D points than a neighborhood operation requires."""


class DegenerateWindow(VolsumError):
    """A texture window produced no in-bounds pixel pairs."""


class TooFewValidPixels(VolsumError):
    """Image has fewer valid pixels than requested superpixels."""


class SingularCovariance(VolsumError):
    """Covariance is singular beyond the regularization floor."""


class EmptyComponent(VolsumError):
    """A mixture component lost all responsibility mass twice."""


class InsufficientData(VolsumError):
    """Too few observations to fit the requested mixture."""


class DegenerateRegion(VolsumError):
    """Region geometry is too degenerate for the requested statistic."""


class EmptySegment(VolsumError):
    """A segment mask selects no pixels."""


class ImageTooSmall(VolsumError):
    """Image is smaller than the descriptor grid requires."""


class CorpusTooSmall(VolsumError):
    """Descriptor corpus smaller than the requested vocabulary."""


class SingularGram(VolsumError):
    """Regularized least-squares normal matrix is singular."""


class EmptyBoundary(VolsumError):
    """A labeling has no boundary pixels (single region)."""


class ClassifierError(VolsumError):
    """An external classifier plug-in misbehaved."""
