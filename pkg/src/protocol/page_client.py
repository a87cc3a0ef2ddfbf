"""
Destination-side page client.

One reader task demultiplexes everything the server sends. Delivered pages are
kept per session, so a fetch completes once every requested id has arrived,
whether by its own PageData reply or by the bulk stream. A session admits one
request at a time; the only exception is a fetch issued while a bulk stream
is running.
"""
import asyncio
import logging
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Set, Tuple

from src.image.model import ProcessMetadata
from src.protocol import frames
from src.protocol.errors import (
    ErrorCode,
    MalformedFrameError,
    PageOutOfRangeError,
    ProtocolUsageError,
    RemoteError,
    SessionClosedError,
    parse_endpoint,
    remote_error,
)
from src.protocol.frames import Frame, FrameKind
from src.protocol.model import ClientStats, StreamReport

logger = logging.getLogger(__name__)

PageCallback = Callable[[int, bytes], None]


class _Fetch:
    def __init__(self, missing: Iterable[int], loop: asyncio.AbstractEventLoop):
        self.missing: Set[int] = set(missing)
        self.future = loop.create_future()


class _Stream:
    def __init__(self, on_page: Optional[PageCallback], loop: asyncio.AbstractEventLoop):
        self.on_page = on_page
        self.done = loop.create_future()
        self.streamed: List[int] = []
        self.fault_pages: List[int] = []


class PageClient:
    def __init__(self, reader: asyncio.StreamReader, writer: asyncio.StreamWriter, endpoint: str = ""):
        self.endpoint = endpoint
        self.metadata: Optional[ProcessMetadata] = None
        self.metadata_payload_size = 0
        self.stats = ClientStats()
        self._reader = reader
        self._writer = writer
        self._write_lock = asyncio.Lock()
        self._pages: Dict[int, bytes] = {}
        self._control: Optional[asyncio.Future] = None
        self._fetch: Optional[_Fetch] = None
        self._stream: Optional[_Stream] = None
        self._closed: Optional[BaseException] = None
        self._reader_task = asyncio.create_task(self._read_loop())

    @classmethod
    async def connect(cls, endpoint: str) -> "PageClient":
        host, port = parse_endpoint(endpoint)
        reader, writer = await asyncio.open_connection(host, port)
        logger.info(f"🔌 Connected to page server {endpoint}")
        return cls(reader, writer, endpoint)

    async def __aenter__(self) -> "PageClient":
        return self

    async def __aexit__(self, *exc) -> None:
        await self.close()

    @property
    def delivered(self) -> Set[int]:
        return set(self._pages)

    async def _send(self, frame: Frame) -> None:
        if self._closed is not None:
            raise SessionClosedError(f"session closed: {self._closed}")
        async with self._write_lock:
            n = frames.write_frame(self._writer, frame)
            try:
                await self._writer.drain()
            except ConnectionError as e:
                raise SessionClosedError(str(e)) from e
            self.stats.bytes_sent += n

    # -- receive side ---------------------------------------------------------

    async def _read_loop(self) -> None:
        reason: BaseException
        try:
            while True:
                frame = await frames.read_frame(self._reader)
                self.stats.frames_received += 1
                self.stats.bytes_received += frame.wire_size
                self._on_frame(frame)
        except (SessionClosedError, MalformedFrameError, ConnectionError) as e:
            reason = e
        except asyncio.CancelledError:
            reason = SessionClosedError("session closed locally")
        self._shutdown(reason)

    def _on_frame(self, frame: Frame) -> None:
        logger.debug(f"📦 {self.endpoint} -> {frame.kind.name} ({frame.wire_size} bytes)")
        if frame.kind == FrameKind.METADATA:
            if self._control is None or self._control.done():
                raise MalformedFrameError("unsolicited Metadata frame")
            self.metadata_payload_size = len(frame.payload)
            self._control.set_result(frames.parse_metadata(frame))
        elif frame.kind == FrameKind.PAGE_DATA:
            self._on_pages(frames.parse_page_data(frame))
        elif frame.kind == FrameKind.DONE:
            if self._stream is not None and not self._stream.done.done():
                self._stream.done.set_result(True)
        elif frame.kind == FrameKind.ERROR:
            self._on_error(remote_error(*frames.parse_error(frame)))
        else:
            raise MalformedFrameError(f"unexpected {frame.kind.name} from server")

    def _on_pages(self, pages: Sequence[Tuple[int, bytes]]) -> None:
        fetch = self._fetch
        stream = self._stream if self._stream is not None and not self._stream.done.done() else None
        for page_id, block in pages:
            if page_id in self._pages:
                self.stats.duplicate_pages += 1
                logger.warning(f"⚠️ Page {page_id} delivered twice")
                continue
            self._pages[page_id] = block
            self.stats.pages_received += 1
            if stream is not None:
                if fetch is not None and page_id in fetch.missing:
                    stream.fault_pages.append(page_id)
                else:
                    stream.streamed.append(page_id)
                if stream.on_page is not None:
                    stream.on_page(page_id, block)
            if fetch is not None:
                fetch.missing.discard(page_id)
        if fetch is not None and not fetch.missing and not fetch.future.done():
            fetch.future.set_result(None)

    def _on_error(self, error: RemoteError) -> None:
        if self._control is not None and not self._control.done():
            self._control.set_exception(error)
        elif self._fetch is not None and not self._fetch.future.done():
            self._fetch.future.set_exception(error)
        elif self._stream is not None and not self._stream.done.done():
            self._stream.done.set_exception(error)
        else:
            logger.warning(f"⚠️ Unmatched error from {self.endpoint}: {error}")
        if error.code == ErrorCode.MALFORMED_FRAME:
            raise SessionClosedError(f"server closed the session: {error.message}")

    def _shutdown(self, reason: BaseException) -> None:
        if self._closed is not None:
            return
        self._closed = reason
        if not isinstance(reason, SessionClosedError):
            reason = SessionClosedError(str(reason))
        for fut in (
            self._control,
            self._fetch.future if self._fetch else None,
            self._stream.done if self._stream else None,
        ):
            if fut is not None and not fut.done():
                fut.set_exception(reason)
                # stream_remaining may already have returned; keep the loop quiet
                fut.exception()
        logger.info(f"🔌 Session with {self.endpoint} ended: {self._closed}")

    # -- operations -----------------------------------------------------------

    async def request_migration(self, dep_label: str) -> ProcessMetadata:
        if self.metadata is not None:
            raise ProtocolUsageError("one migration per session")
        if self._control is not None and not self._control.done():
            raise ProtocolUsageError("a migration request is already in flight")
        self._control = asyncio.get_running_loop().create_future()
        await self._send(frames.migrate_request(dep_label))
        self.metadata = await self._control
        logger.info(
            f"✅ Received metadata for '{dep_label}': {self.metadata.total_pages} pages, "
            f"{self.metadata_payload_size} bytes"
        )
        return self.metadata

    async def fetch_pages(self, page_ids: Sequence[int]) -> List[Tuple[int, bytes]]:
        """Return the requested pages in request order, asking only for the ones not yet delivered."""
        if self.metadata is None:
            raise ProtocolUsageError("fetch_pages before request_migration")
        if self._fetch is not None and not self._fetch.future.done():
            raise ProtocolUsageError("a page request is already in flight")
        ids = list(page_ids)
        missing = [pid for pid in dict.fromkeys(ids) if pid not in self._pages]
        if missing:
            fetch = _Fetch(missing, asyncio.get_running_loop())
            self._fetch = fetch
            await self._send(frames.page_request(missing))
            try:
                await fetch.future
            finally:
                self._fetch = None
        return [(pid, self._pages[pid]) for pid in ids]

    async def stream_remaining(
        self,
        already_resident: Iterable[int] = (),
        on_page: Optional[PageCallback] = None,
    ) -> StreamReport:
        """
        Ask for every page not in `already_resident` and deliver each through
        `on_page` as it arrives. A dropped session yields a partial report.
        """
        if self.metadata is None:
            raise ProtocolUsageError("stream_remaining before request_migration")
        if self._stream is not None:
            raise ProtocolUsageError("bulk stream already requested on this session")
        resident = set(already_resident)
        outside = [pid for pid in resident if not self.metadata.covers(pid)]
        if outside:
            raise PageOutOfRangeError(f"resident pages outside the image: {outside[:8]}", tuple(outside))
        stream = _Stream(on_page, asyncio.get_running_loop())
        self._stream = stream
        completed = True
        try:
            await self._send(frames.prefetch_request(resident | set(self._pages)))
            await stream.done
        except (SessionClosedError, RemoteError) as e:
            logger.warning(f"⚠️ Stream from {self.endpoint} interrupted: {e}")
            completed = False
        report = StreamReport(
            completed=completed,
            streamed=list(stream.streamed),
            fault_pages=list(stream.fault_pages),
            resident=resident | set(self._pages),
        )
        logger.info(f"📦 Stream from {self.endpoint}: {report.pages_streamed} pages, completed={completed}")
        return report

    async def close(self) -> None:
        self._reader_task.cancel()
        try:
            await self._reader_task
        except asyncio.CancelledError:
            pass
        self._writer.close()
        try:
            await self._writer.wait_closed()
        except (ConnectionError, OSError):
            pass
