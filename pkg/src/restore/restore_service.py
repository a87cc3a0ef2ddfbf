"""
Container-side dependency loader.

restore() runs the three migration steps: obtain the process metadata,
reconnect the file table against the container's environment, and rebuild the
address space with the policy's residency. RestoredProcess.execute() then walks
an access trace, turning every access to an absent page into a fault.
"""
import asyncio
import logging
import time
import zlib
from pathlib import Path
from typing import Dict, List, Optional, Union

from src.image.codec import read_checkpoint
from src.image.model import PAGE_SIZE, FileKind, ProcessMetadata
from src.protocol.errors import PageOutOfRangeError
from src.protocol.model import StreamReport
from src.protocol.page_client import PageClient
from src.restore.address_space import GuestAddressSpace
from src.restore.errors import EnvironmentMismatchError, PolicySourceError, RestoreError
from src.restore.model import (
    Access,
    AccessTrace,
    EnvironmentManifest,
    ExecutionReport,
    RestorePolicy,
    RestoreStats,
)
from src.rng import SplitMix64

logger = logging.getLogger(__name__)

RestoreSource = Union[PageClient, str, Path]


def check_environment(meta: ProcessMetadata, env: EnvironmentManifest) -> None:
    """
    Every file-table path must exist in `env`; a pinned `path@version` must
    match exactly. Sockets are re-created by the loader, not looked up.
    """
    problems: Dict[str, str] = {}
    for entry in meta.file_table:
        if entry.kind == FileKind.SOCKET:
            continue
        found = env.files.get(entry.bare_path)
        if found is None:
            problems[entry.bare_path] = f"missing, fd {entry.fd}"
        elif entry.pinned_version is not None and found != entry.pinned_version:
            problems[entry.bare_path] = f"needs {entry.pinned_version}, found {found}"
    if problems:
        raise EnvironmentMismatchError(problems)


class RestoredProcess:
    def __init__(
        self,
        metadata: ProcessMetadata,
        policy: RestorePolicy,
        space: GuestAddressSpace,
        client: Optional[PageClient] = None,
        realtime: bool = False,
    ):
        self.metadata = metadata
        self.policy = policy
        self.space = space
        self.client = client
        self.realtime = realtime
        self.metadata_bytes = metadata.metadata_size_bytes
        self.phase_ms: Dict[str, float] = {}
        self.executions = 0
        self._stream_task: Optional[asyncio.Task] = None
        self._stream_report: Optional[StreamReport] = None

    @property
    def dep_label(self) -> str:
        return self.metadata.dep_label

    @property
    def stream_started(self) -> bool:
        return self._stream_task is not None

    def _start_stream(self) -> None:
        logger.info(f"📦 First fault on '{self.dep_label}', starting bulk stream")
        self._stream_task = asyncio.create_task(
            self.client.stream_remaining(self.space.resident_ids(), on_page=self._install_streamed)
        )

    def _install_streamed(self, page_id: int, block: bytes) -> None:
        self.space.install(page_id, block)

    async def wait_for_stream(self) -> Optional[StreamReport]:
        """Block until the background stream finishes. None if it never started."""
        if self._stream_task is None:
            return self._stream_report
        if self._stream_report is None:
            self._stream_report = await self._stream_task
        return self._stream_report

    async def _fault(self, page_id: int) -> None:
        if self.policy in (RestorePolicy.EAGER_FULL, RestorePolicy.FILE_COPY):
            raise RestoreError(f"page {page_id} absent after a full restore of '{self.dep_label}'")
        for pid, block in await self.client.fetch_pages([page_id]):
            self.space.install(pid, block)
        if self.policy == RestorePolicy.BULK and self._stream_task is None:
            self._start_stream()

    def stats(self, faults: int = 0, blocked_s: float = 0.0) -> RestoreStats:
        report = self._stream_report
        if report is None and self._stream_task is not None and self._stream_task.done():
            if not self._stream_task.cancelled() and self._stream_task.exception() is None:
                report = self._stream_report = self._stream_task.result()
        pages = self.space.resident_count
        return RestoreStats(
            pages_transferred=pages,
            faults_taken=faults,
            bytes_received=pages * PAGE_SIZE + self.metadata_bytes,
            metadata_bytes=self.metadata_bytes,
            wire_bytes_received=self.client.stats.bytes_received if self.client else 0,
            fault_blocked_time_us=blocked_s * 1e6,
            pages_streamed=report.pages_streamed if report else 0,
            stream_completed=bool(report and report.completed),
            stream_order=list(report.streamed) if report else [],
            phase_ms=dict(self.phase_ms),
        )

    async def _walk(self, trace: AccessTrace) -> ExecutionReport:
        faults = 0
        blocked = 0.0
        digests: List[int] = []
        started = time.perf_counter()
        for access in trace.accesses:
            block = self.space.get(access.page_id)
            if block is None:
                faults += 1
                t0 = time.perf_counter()
                await self._fault(access.page_id)
                blocked += time.perf_counter() - t0
                block = self.space.get(access.page_id)
                logger.debug(f"fault on page {access.page_id} resolved")
            digests.append(zlib.crc32(block))
            # yielding lets the background stream install pages between accesses
            await asyncio.sleep(access.compute_us / 1e6 if self.realtime else 0)
        self.executions += 1
        self.phase_ms[f"execution_{self.executions}"] = (time.perf_counter() - started) * 1e3
        report = ExecutionReport(
            dep_label=self.dep_label,
            policy=self.policy,
            accesses=len(trace),
            distinct_pages=trace.distinct_pages,
            faults_taken=faults,
            modeled_compute_us=trace.compute_us,
            page_digests=digests,
            stats=self.stats(faults, blocked),
        )
        logger.info(
            f"✅ Executed {len(trace)} accesses on '{self.dep_label}' ({self.policy.value}): "
            f"{faults} faults, {report.stats.pages_transferred}/{self.metadata.total_pages} pages resident"
        )
        return report

    async def execute(self, trace: AccessTrace) -> ExecutionReport:
        self._check_trace(trace)
        return await self._walk(trace)

    async def execute_again(self, trace: AccessTrace) -> ExecutionReport:
        """Warm start: residency left by earlier executions is kept."""
        if self.executions == 0:
            raise RestoreError("execute_again before a first execution")
        self._check_trace(trace)
        return await self._walk(trace)

    def _check_trace(self, trace: AccessTrace) -> None:
        bad = [pid for pid in trace.page_ids if not self.metadata.covers(pid)]
        if bad:
            raise PageOutOfRangeError(
                f"trace touches pages outside '{self.dep_label}': {bad[:8]}", tuple(bad)
            )

    async def close(self) -> None:
        if self._stream_task is not None and not self._stream_task.done():
            self._stream_task.cancel()
            try:
                await self._stream_task
            except (asyncio.CancelledError, Exception):
                pass


async def restore(
    source: RestoreSource,
    policy: RestorePolicy,
    env: Optional[EnvironmentManifest],
    dep_label: Optional[str] = None,
    realtime: bool = False,
) -> RestoredProcess:
    """
    Restore a dependency process from a page-server session or a checkpoint
    file. `env=None` skips file-table validation.
    """
    policy = RestorePolicy(policy)
    phase: Dict[str, float] = {}

    t0 = time.perf_counter()
    if policy.networked:
        if not isinstance(source, PageClient):
            raise PolicySourceError(f"{policy.value} restores from a page-server session")
        if not dep_label:
            raise PolicySourceError("dep_label is required for a network restore")
        meta = await source.request_migration(dep_label)
        image = None
    else:
        if isinstance(source, PageClient):
            raise PolicySourceError("file-copy restores from a checkpoint path")
        image = await asyncio.to_thread(read_checkpoint, source)
        meta = image.metadata
    phase["communication"] = (time.perf_counter() - t0) * 1e3

    t0 = time.perf_counter()
    if env is None:
        logger.info(f"⚠️ No environment manifest given, skipping file-table check for '{meta.dep_label}'")
    else:
        try:
            check_environment(meta, env)
        except EnvironmentMismatchError as e:
            logger.error(f"❌ {e}")
            raise
    phase["reconnect"] = (time.perf_counter() - t0) * 1e3

    t0 = time.perf_counter()
    space = GuestAddressSpace(meta)
    proc = RestoredProcess(meta, policy, space, source if policy.networked else None, realtime)
    if policy == RestorePolicy.EAGER_FULL:
        report = await source.stream_remaining(set(), on_page=space.install)
        if not report.completed:
            raise RestoreError(f"session dropped during eager restore of '{meta.dep_label}'")
        proc._stream_report = report
    elif policy == RestorePolicy.FILE_COPY:
        for pid in meta.page_ids():
            space.install(pid, image.page(pid))
    phase["migration"] = (time.perf_counter() - t0) * 1e3
    proc.phase_ms.update(phase)

    logger.info(
        f"✅ Restored '{meta.dep_label}' with {policy.value}: "
        f"{space.resident_count}/{meta.total_pages} pages resident"
    )
    return proc


def generate_access_trace(
    metadata: ProcessMetadata,
    accesses: int,
    distinct_pages: int,
    seed: int,
    mean_compute_us: float = 100.0,
) -> AccessTrace:
    """
    Deterministic synthetic trace: `distinct_pages` ids drawn without
    replacement, each touched once in random order, then the remaining accesses
    revisit them uniformly. Compute costs are exponential with the given mean.
    """
    total = metadata.total_pages
    if not 0 <= distinct_pages <= total:
        raise ValueError(f"distinct_pages must be within 0..{total}")
    if accesses < distinct_pages or (distinct_pages == 0 and accesses > 0):
        raise ValueError("accesses must be >= distinct_pages (and 0 when no pages are touched)")

    rng = SplitMix64(seed)
    ids = list(metadata.page_ids())
    # partial Fisher-Yates
    for i in range(distinct_pages):
        j = i + rng.below(total - i)
        ids[i], ids[j] = ids[j], ids[i]
    chosen = ids[:distinct_pages]

    order = list(chosen)
    for _ in range(accesses - distinct_pages):
        order.append(chosen[rng.below(distinct_pages)])
    rate = 1.0 / mean_compute_us if mean_compute_us > 0 else None
    return AccessTrace(accesses=[
        Access(page_id=pid, compute_us=rng.exponential(rate) if rate else 0.0) for pid in order
    ])
