from typing import Mapping


class RestoreError(Exception):
    """Base class for dependency-loader failures."""


class EnvironmentMismatchError(RestoreError):
    """The container lacks files the image's descriptors point at, or holds other versions."""

    def __init__(self, problems: Mapping[str, str]):
        self.problems = dict(problems)
        self.paths = list(self.problems)
        super().__init__(
            "cannot reconnect file descriptors: "
            + "; ".join(f"{path} ({reason})" for path, reason in self.problems.items())
        )


class PolicySourceError(RestoreError, ValueError):
    """A restore source that does not fit the policy (e.g. a checkpoint path for LazyRestore)."""
