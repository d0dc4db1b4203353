"""Exception hierarchy shared across the package."""


class GeolabError(Exception):
    """Base class for all package-specific errors."""


# geometry
class DegeneratePose(GeolabError):
    """Relative pose with (near-)zero translation: F would vanish."""


class ZeroMatrix(GeolabError):
    """Matrix with (near-)zero Frobenius norm cannot be normalized."""


class InvalidCrop(GeolabError):
    """Crop window exceeds the resized image bounds."""


# metrics
class DegenerateLine(GeolabError):
    """Both epipolar line directions of a point are numerically zero."""


class LengthMismatch(GeolabError):
    """Paired vectors/lists have different lengths."""


# differentiable engine
class ShapeMismatch(GeolabError):
    """Operands have incompatible shapes for the requested layer."""


class MissingGradient(GeolabError):
    """Optimizer step requested on a parameter without a gradient."""


# models
class ConfigUnsatisfiable(GeolabError):
    """Fusion configuration cannot be realized with the given features."""


class DepthOutOfRange(GeolabError):
    """Freeze depth outside [0, number of encoder stages]."""


# data
class FormatError(GeolabError):
    """Binary/text file violates the declared format."""


class ShapeError(GeolabError):
    """File records carry inconsistent tensor shapes."""


class EmptyInlierSet(GeolabError):
    """No correspondence survived the inlier threshold."""


class SizeExceedsDataset(GeolabError):
    """Requested subset size larger than the dataset."""


# classical baseline
class DegenerateSet(GeolabError):
    """Point set without enough spread to condition."""


class TooFewPoints(GeolabError):
    """Fewer correspondences than the minimal sample size."""


class DegenerateConfiguration(GeolabError):
    """Rank-deficient design matrix (e.g. coplanar scene)."""


class ConsensusFailure(GeolabError):
    """No RANSAC sample produced a usable consensus set."""


# experiments
class DegenerateVariance(GeolabError):
    """Paired t-test on differences with zero variance."""


class TaskMismatch(GeolabError):
    """Checkpoint and dataset belong to different tasks."""


class ConfigError(GeolabError):
    """Invalid or unknown experiment configuration."""


class DataError(GeolabError):
    """Dataset missing or malformed."""
