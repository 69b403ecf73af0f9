"""Exception hierarchy shared by every pipeline stage."""

from __future__ import annotations


class ForgeError(Exception):
    """Base class for all diorama-forge errors."""


class SchemaViolation(ForgeError):
    """A JSON document does not match its closed schema.

    ``violations`` holds every ``(path, reason)`` pair found; ``path`` and
    ``reason`` mirror the first one for convenience.
    """

    def __init__(self, path: str, reason: str, violations: list[tuple[str, str]] | None = None):
        self.path = path
        self.reason = reason
        self.violations = violations or [(path, reason)]
        extra = f" (+{len(self.violations) - 1} more)" if len(self.violations) > 1 else ""
        super().__init__(f"{path}: {reason}{extra}")


# ingest
class EmptyCollection(ForgeError):
    pass


class UndecodableImage(ForgeError):
    def __init__(self, filename: str, detail: str = ""):
        self.filename = filename
        super().__init__(f"cannot decode image {filename!r}" + (f": {detail}" if detail else ""))


# providers
class MissingFixture(ForgeError):
    def __init__(self, digest: str):
        self.digest = digest
        super().__init__(f"no fixture recorded for request {digest}")


class TransportError(ForgeError):
    pass


class MalformedPayload(ForgeError):
    pass


class RangeError(ForgeError):
    pass


# annotate
class NoMark(ForgeError):
    pass


class AmbiguousMark(ForgeError):
    pass


class DegenerateArea(ForgeError):
    pass


class MissingStartMarker(ForgeError):
    pass


class LoopedPath(ForgeError):
    pass


class FragmentedPath(ForgeError):
    pass


# geometry
class OutOfFrame(ForgeError):
    pass


class TooFewPoints(ForgeError):
    pass


class DegenerateMesh(ForgeError):
    pass


# layers
class MissingAnnotation(ForgeError):
    def __init__(self, element_id: str, detail: str = ""):
        self.element_id = element_id
        super().__init__(f"{element_id}: missing annotation" + (f" ({detail})" if detail else ""))


class MissingAsset(ForgeError):
    def __init__(self, element_id: str):
        self.element_id = element_id
        super().__init__(f"{element_id}: missing generated asset")


class DegeneratePolygon(ForgeError):
    pass


# manifest
class DanglingAssetReference(ForgeError):
    def __init__(self, ref: str):
        self.ref = ref
        super().__init__(f"asset reference {ref!r} does not resolve to a file")


class IoError(ForgeError):
    def __init__(self, path, detail: str):
        self.path = path
        super().__init__(f"{path}: {detail}")
