from enum import IntEnum
from typing import Tuple


class ErrorCode(IntEnum):
    UNKNOWN_DEPENDENCY = 1
    MALFORMED_FRAME = 2
    PAGE_OUT_OF_RANGE = 3


class ProtocolError(Exception):
    """Base class for page-protocol failures."""


class MalformedFrameError(ProtocolError):
    pass


class SessionClosedError(ProtocolError, ConnectionError):
    """The peer went away or the session was closed locally."""


class ProtocolUsageError(ProtocolError):
    """A client call that breaks the one-request-at-a-time session discipline."""


class EndpointError(ValueError):
    pass


class RemoteError(ProtocolError):
    """An Error frame received from the peer."""
    code = ErrorCode.MALFORMED_FRAME

    def __init__(self, message: str, code: ErrorCode = None):
        super().__init__(message)
        if code is not None:
            self.code = code
        self.message = message


class UnknownDependencyError(RemoteError):
    code = ErrorCode.UNKNOWN_DEPENDENCY


class PageOutOfRangeError(RemoteError):
    code = ErrorCode.PAGE_OUT_OF_RANGE

    def __init__(self, message: str, page_ids: Tuple[int, ...] = ()):
        super().__init__(message)
        self.page_ids = tuple(page_ids)


def remote_error(code: ErrorCode, message: str) -> RemoteError:
    if code == ErrorCode.UNKNOWN_DEPENDENCY:
        return UnknownDependencyError(message)
    if code == ErrorCode.PAGE_OUT_OF_RANGE:
        return PageOutOfRangeError(message)
    return RemoteError(message, code)


def parse_endpoint(endpoint: str) -> Tuple[str, int]:
    host, sep, port = endpoint.rpartition(":")
    if not sep or not host or not port.isdigit() or not 0 <= int(port) <= 65535:
        raise EndpointError(f"endpoint must look like host:port, got '{endpoint}'")
    return host.strip("[]"), int(port)
