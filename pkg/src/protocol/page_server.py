"""
Page server fronting the dependency pool.

Each TCP session migrates at most one image. A reader task queues incoming
frames; the session loop answers them in order, and while a bulk stream is
running it checks the queue before every batch so a PageRequest (a fault on
the destination) is answered ahead of the remaining stream.
"""
import asyncio
import json
import logging
from pathlib import Path
from typing import List, Optional, Set, Union

from src.image.errors import UnknownLabelError
from src.image.model import DependencyImage
from src.image.pool import DependencyPool
from src.protocol import frames
from src.protocol.errors import ErrorCode, MalformedFrameError, SessionClosedError, parse_endpoint
from src.protocol.frames import MAX_PAGES_PER_FRAME, Frame, FrameKind
from src.protocol.model import ServerStats

logger = logging.getLogger(__name__)


class _SessionAbort(Exception):
    pass


class _Session:
    def __init__(self, server: "PageServer", reader: asyncio.StreamReader, writer: asyncio.StreamWriter):
        self.server = server
        self.reader = reader
        self.writer = writer
        self.peer = writer.get_extra_info("peername")
        self.inbox: asyncio.Queue = asyncio.Queue()
        self.image: Optional[DependencyImage] = None
        self.sent: Set[int] = set()
        self.bytes_sent = 0
        self._stream_ids: Optional[List[int]] = None
        self._stream_pos = 0
        self._streaming = False
        self.failed = False

    async def _pump(self) -> None:
        try:
            while True:
                await self.inbox.put(await frames.read_frame(self.reader))
        except (MalformedFrameError, SessionClosedError, ConnectionError) as e:
            await self.inbox.put(e)

    async def _send(self, frame: Frame) -> None:
        n = frames.write_frame(self.writer, frame)
        await self.writer.drain()
        self.bytes_sent += n
        self.server.stats.frames_sent += 1
        self.server.stats.bytes_sent += n
        logger.debug(f"📦 {self.peer} <- {frame.kind.name} ({n} bytes)")

    async def _fail(self, code: ErrorCode, message: str, close: bool) -> None:
        logger.warning(f"⚠️ {self.peer}: {code.name}: {message}")
        await self._send(frames.error_frame(code, message))
        if close:
            self.failed = True
            raise _SessionAbort(message)

    async def _send_pages(self, page_ids: List[int]) -> None:
        for i in range(0, len(page_ids), MAX_PAGES_PER_FRAME):
            chunk = page_ids[i:i + MAX_PAGES_PER_FRAME]
            await self._send(frames.page_data([(pid, self.image.page(pid)) for pid in chunk]))
            self.sent.update(chunk)

    def _require_image(self, kind: FrameKind) -> None:
        if self.image is None:
            raise MalformedFrameError(f"{kind.name} before MigrateRequest")

    async def _on_migrate(self, frame: Frame) -> None:
        if self.image is not None:
            raise MalformedFrameError("one migration per session")
        label = frames.parse_migrate_request(frame)
        try:
            self.image = self.server.pool.acquire(label)
        except UnknownLabelError:
            await self._fail(ErrorCode.UNKNOWN_DEPENDENCY, f"no dependency image '{label}'", close=False)
            return
        logger.info(f"🔌 {self.peer} migrating '{label}'")
        await self._send(frames.metadata_frame(self.image.metadata))

    async def _on_page_request(self, frame: Frame) -> None:
        self._require_image(frame.kind)
        meta = self.image.metadata
        ids = frames.parse_page_ids(frame)
        bad = [pid for pid in ids if not meta.covers(pid)]
        if bad:
            shown = ", ".join(str(pid) for pid in bad[:8])
            await self._fail(ErrorCode.PAGE_OUT_OF_RANGE, f"pages outside the image: {shown}", close=False)
            return
        self.server.stats.faults_served += 1
        # pages already sent in this session are in flight or held by the client
        todo = [pid for pid in dict.fromkeys(ids) if pid not in self.sent]
        if todo:
            await self._send_pages(todo)

    async def _on_prefetch(self, frame: Frame) -> None:
        self._require_image(frame.kind)
        if self._stream_ids is not None:
            raise MalformedFrameError("bulk stream already requested")
        skip = set(frames.parse_page_ids(frame)) | self.sent
        self._stream_ids = [pid for pid in self.image.metadata.page_ids() if pid not in skip]
        self._stream_pos = 0
        self._streaming = True
        logger.info(f"📦 {self.peer} streaming {len(self._stream_ids)} pages")

    async def _dispatch(self, item) -> None:
        if isinstance(item, (SessionClosedError, ConnectionError)):
            raise _SessionAbort("peer closed")
        if isinstance(item, MalformedFrameError):
            await self._fail(ErrorCode.MALFORMED_FRAME, str(item), close=True)
        try:
            if item.kind == FrameKind.MIGRATE_REQUEST:
                await self._on_migrate(item)
            elif item.kind == FrameKind.PAGE_REQUEST:
                await self._on_page_request(item)
            elif item.kind == FrameKind.PREFETCH_REQUEST:
                await self._on_prefetch(item)
            else:
                raise MalformedFrameError(f"unexpected {item.kind.name} from client")
        except MalformedFrameError as e:
            await self._fail(ErrorCode.MALFORMED_FRAME, str(e), close=True)

    async def _stream_batch(self) -> None:
        ids = self._stream_ids
        batch = []
        # resumes from the lowest id not yet sent; faulted pages are skipped
        while self._stream_pos < len(ids) and len(batch) < self.server.batch_pages:
            pid = ids[self._stream_pos]
            self._stream_pos += 1
            if pid not in self.sent:
                batch.append(pid)
        if batch:
            await self._send_pages(batch)
            self.server.stats.pages_streamed += len(batch)
        if self._stream_pos >= len(ids):
            await self._send(frames.done())
            self._streaming = False
            logger.debug(f"✅ {self.peer} stream complete")
        else:
            await asyncio.sleep(self.server.stream_delay)

    async def run(self) -> None:
        pump = asyncio.create_task(self._pump())
        try:
            while True:
                if self._streaming:
                    while not self.inbox.empty():
                        await self._dispatch(self.inbox.get_nowait())
                    await self._stream_batch()
                else:
                    await self._dispatch(await self.inbox.get())
        except _SessionAbort as e:
            logger.debug(f"{self.peer} session ended: {e}")
        except ConnectionError as e:
            logger.info(f"🔌 {self.peer} connection lost: {e}")
        finally:
            pump.cancel()
            try:
                await pump
            except asyncio.CancelledError:
                pass


class PageServer:
    def __init__(self, pool: DependencyPool, batch_pages: int = MAX_PAGES_PER_FRAME, stream_delay: float = 0.0):
        if not 1 <= batch_pages <= MAX_PAGES_PER_FRAME:
            raise ValueError(f"batch_pages must be within 1..{MAX_PAGES_PER_FRAME}")
        self.pool = pool
        self.batch_pages = batch_pages
        self.stream_delay = stream_delay
        self.stats = ServerStats()
        self.writers: Set[asyncio.StreamWriter] = set()

    async def handle(self, reader: asyncio.StreamReader, writer: asyncio.StreamWriter) -> None:
        session = _Session(self, reader, writer)
        self.writers.add(writer)
        self.stats.sessions += 1
        self.stats.active_sessions += 1
        logger.info(f"🔌 Session opened from {session.peer}")
        try:
            await session.run()
        except Exception as e:
            logger.error(f"❌ Session {session.peer} failed: {e}", exc_info=True)
        finally:
            self.stats.active_sessions -= 1
            self.writers.discard(writer)
            if session.image is not None:
                self.pool.release(session.image.dep_label, completed=not session.failed)
            writer.close()
            try:
                await writer.wait_closed()
            except (ConnectionError, OSError):
                pass
            logger.info(f"🔌 Session {session.peer} closed ({session.bytes_sent} bytes sent)")


class ServerHandle:
    def __init__(self, server: asyncio.AbstractServer, page_server: PageServer):
        self._server = server
        self.page_server = page_server
        host, port = server.sockets[0].getsockname()[:2]
        self._endpoint = f"{host}:{port}"
        self._closed = False

    @property
    def stats(self) -> ServerStats:
        return self.page_server.stats

    @property
    def endpoint(self) -> str:
        return self._endpoint

    def stats_json(self) -> str:
        return json.dumps(self.stats.dict(), indent=2)

    def dump_stats(self, path: Union[str, Path]) -> None:
        Path(path).write_text(self.stats_json() + "\n", encoding="utf-8")
        logger.info(f"📊 Server statistics written to {path}")

    async def serve_forever(self) -> None:
        await self._server.serve_forever()

    async def close(self) -> None:
        if self._closed:
            return
        self._closed = True
        self._server.close()
        for writer in list(self.page_server.writers):
            writer.close()
        await self._server.wait_closed()
        logger.info(f"🗑️ Page server on {self._endpoint} stopped")

    async def __aenter__(self) -> "ServerHandle":
        return self

    async def __aexit__(self, *exc) -> None:
        await self.close()


async def serve(
    pool: DependencyPool,
    endpoint: str,
    batch_pages: int = MAX_PAGES_PER_FRAME,
    stream_delay: float = 0.0,
) -> ServerHandle:
    """Bind `endpoint` and start answering sessions. Port 0 picks a free port."""
    host, port = parse_endpoint(endpoint)
    page_server = PageServer(pool, batch_pages=batch_pages, stream_delay=stream_delay)
    server = await asyncio.start_server(page_server.handle, host, port)
    handle = ServerHandle(server, page_server)
    logger.info(f"✅ Page server listening on {handle.endpoint} ({len(pool)} images)")
    return handle
