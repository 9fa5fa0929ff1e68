"""Exception types raised across the engine.

Every error carries enough context (field, offset, row, ...) to name the
offending input, which the CLI relies on for its exit messages.
"""


class StreamridgeError(Exception):
    """Base class for all engine errors."""


# ---- embedding store ----

class BadMagic(StreamridgeError):
    def __init__(self, found: bytes):
        super().__init__(f"bad magic {found!r}, expected b'FLYE'")
        self.found = found


class VersionMismatch(StreamridgeError):
    def __init__(self, found: int, expected: int):
        super().__init__(f"unsupported format version {found}, expected {expected}")
        self.found = found
        self.expected = expected


class TruncatedFile(StreamridgeError):
    def __init__(self, offset: int, needed: int, available: int):
        super().__init__(
            f"truncated file: at offset {offset} needed {needed} bytes, "
            f"only {available} available")
        self.offset = offset


class NonFiniteValue(StreamridgeError):
    def __init__(self, row: int):
        super().__init__(f"non-finite feature value at row {row}")
        self.row = row


class EmptyDataset(StreamridgeError):
    pass


class UnknownClass(StreamridgeError):
    def __init__(self, class_index: int):
        super().__init__(f"manifest references class {class_index} not present in dataset")
        self.class_index = class_index


class OverlappingTasks(StreamridgeError):
    def __init__(self, class_index: int):
        super().__init__(f"class {class_index} appears in more than one task")
        self.class_index = class_index


class ClassTooSmall(StreamridgeError):
    def __init__(self, class_index: int, count: int):
        super().__init__(
            f"class {class_index} has only {count} sample(s); need at least 2 to split")
        self.class_index = class_index


# ---- projection / activation ----

class InvalidShape(StreamridgeError):
    pass


class DimensionMismatch(StreamridgeError):
    def __init__(self, expected, got, what: str = "input"):
        super().__init__(f"{what} dimension mismatch: expected {expected}, got {got}")


class InvalidK(StreamridgeError):
    def __init__(self, k: int, m: int):
        super().__init__(f"k={k} outside valid range [1, {m}]")
        self.k = k
        self.m = m


# ---- ridge engine ----

class DegenerateInput(StreamridgeError):
    pass


class NotPositiveDefinite(StreamridgeError):
    pass


class Unsolved(StreamridgeError):
    def __init__(self):
        super().__init__("prototype matrix not solved yet; train or solve first")


# ---- baseline ----

class EmptyBank(StreamridgeError):
    pass


class ZeroVector(StreamridgeError):
    pass


# ---- analysis ----

class EmptyTestSet(StreamridgeError):
    pass


class NegativeTime(StreamridgeError):
    def __init__(self, total: float, extraction: float):
        super().__init__(f"extraction time {extraction} exceeds total {total}")


class ZeroVariance(StreamridgeError):
    def __init__(self, which: int):
        super().__init__(f"vector {which} has zero variance; correlation undefined")
        self.which = which


# ---- synthetic data ----

class TooManyClasses(StreamridgeError):
    def __init__(self, num_classes: int, dim: int):
        super().__init__(
            f"cannot place {num_classes} mutually orthogonal class directions in {dim} dims")


# ---- config ----

class ConfigError(StreamridgeError):
    def __init__(self, field: str, message: str):
        super().__init__(f"config field '{field}': {message}")
        self.field = field
