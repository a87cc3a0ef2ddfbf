class ImageError(Exception):
    """Base class for dependency-image failures."""


class InvalidSpecError(ImageError, ValueError):
    pass


class InvalidMetadataError(ImageError, ValueError):
    pass


class CheckpointError(ImageError):
    """A checkpoint file that cannot be turned back into an image."""


class BadMagicError(CheckpointError):
    pass


class VersionMismatchError(CheckpointError):
    pass


class ChecksumMismatchError(CheckpointError):
    pass


class TruncatedCheckpointError(CheckpointError):
    pass


class MalformedCheckpointError(CheckpointError):
    pass


class PoolError(ImageError):
    pass


class DuplicateLabelError(PoolError):
    def __init__(self, dep_label: str):
        super().__init__(f"dependency image '{dep_label}' is already registered")
        self.dep_label = dep_label


class UnknownLabelError(PoolError, KeyError):
    def __init__(self, dep_label: str):
        super().__init__(f"no dependency image '{dep_label}' in the pool")
        self.dep_label = dep_label

    def __str__(self) -> str:
        return self.args[0]


class ImageInUseError(PoolError):
    pass
