"""Exception hierarchy shared by every layer of the store."""


class DeltaStoreError(Exception):
    """Base class for all store errors."""


class InvalidTensor(DeltaStoreError, ValueError):
    pass


class ShapeMismatch(DeltaStoreError, ValueError):
    pass


class InvalidArgument(DeltaStoreError, ValueError):
    pass


class ToleranceTooTight(DeltaStoreError):
    """The requested tolerance would need more than 32 bits per element."""


class CorruptStore(DeltaStoreError):
    """On-disk data failed validation."""


class UnsupportedVersion(CorruptStore):
    pass


class NotFound(DeltaStoreError, KeyError):
    def __str__(self) -> str:  # KeyError quotes its message otherwise
        return Exception.__str__(self)


class DuplicateName(DeltaStoreError):
    pass


class PageSealed(DeltaStoreError):
    """Raised on any attempt to write over a sealed tensor page."""


class GraphError(DeltaStoreError):
    """Invalid model graph, or a failure while executing one."""

    def __init__(self, message: str, node_id: str | None = None):
        super().__init__(f"node {node_id!r}: {message}" if node_id else message)
        self.node_id = node_id
