"""Exception hierarchy shared by the kernel, the codecs and the CLI."""


class BriError(ValueError):
    """Base class for every failure raised by this package"""


class NodeError(BriError):
    """Non-finite, duplicate or otherwise unusable interpolation node"""


class NodeCollisionError(NodeError):
    """Source and worker nodes cannot be kept apart by the required gap"""


class DegreeError(BriError):
    """Blending degree outside 0 <= d <= n"""


class ShapeMismatchError(BriError):
    """Blocks, vectors or results with incompatible shapes"""


class InsufficientResultsError(BriError):
    """Fewer worker results than the scheme's recovery threshold"""

    def __init__(self, needed, got, scheme="LCC"):
        self.needed = needed
        self.got = got
        self.scheme = scheme
        super().__init__(f"{scheme} needs at least {needed} results, got {got}")


class UnsupportedRegimeError(BriError):
    """Parameters outside the hypotheses of an error bound"""


class ConfigError(BriError):
    """Invalid experiment configuration; key_path points at the offending key"""

    def __init__(self, key_path, message):
        self.key_path = key_path
        super().__init__(f"{key_path}: {message}")


class DatasetError(BriError):
    """Malformed dataset file; line is 1-based"""

    def __init__(self, line, message):
        self.line = line
        super().__init__(f"line {line}: {message}")
