"""
Provider-side dependency pool.

Registered images are immutable. The label map is replaced wholesale under a
lock on every registration or removal, so a lookup running concurrently reads
either the map from before the change or the one after it.
"""
import logging
import threading
from pathlib import Path
from typing import Dict, List, Optional, Union

from src.image.codec import read_checkpoint
from src.image.errors import DuplicateLabelError, ImageInUseError, UnknownLabelError
from src.image.model import PAGE_SIZE, DependencyImage, PoolEntry, PoolEntryInfo

logger = logging.getLogger(__name__)


def image_memory_bytes(image: DependencyImage) -> int:
    return image.metadata.total_pages * PAGE_SIZE + image.metadata.metadata_size_bytes


class DependencyPool:
    def __init__(self, per_image_overhead_bytes: int = 0):
        self.per_image_overhead_bytes = per_image_overhead_bytes
        self._entries: Dict[str, PoolEntry] = {}
        self._lock = threading.Lock()

    def register(self, image: DependencyImage) -> None:
        label = image.dep_label
        if not label:
            raise ValueError("dep_label must be non-empty")
        with self._lock:
            if label in self._entries:
                raise DuplicateLabelError(label)
            entries = dict(self._entries)
            entries[label] = PoolEntry(image)
            self._entries = entries
        logger.info(f"✅ Registered '{label}' in the dependency pool ({len(entries)} images)")

    def lookup(self, dep_label: str) -> Optional[DependencyImage]:
        if not dep_label:
            raise ValueError("dep_label must be non-empty")
        entry = self._entries.get(dep_label)
        return entry.image if entry else None

    def acquire(self, dep_label: str) -> DependencyImage:
        """Look up an image for a migration and count it as in flight."""
        with self._lock:
            entry = self._entries.get(dep_label)
            if entry is None:
                raise UnknownLabelError(dep_label)
            entry.ref_count += 1
            return entry.image

    def release(self, dep_label: str, completed: bool = True) -> None:
        with self._lock:
            entry = self._entries.get(dep_label)
            if entry is None or entry.ref_count == 0:
                logger.warning(f"⚠️ Release of '{dep_label}' without a matching acquire")
                return
            entry.ref_count -= 1
            if completed:
                entry.serve_count += 1

    def remove(self, dep_label: str) -> DependencyImage:
        with self._lock:
            entry = self._entries.get(dep_label)
            if entry is None:
                raise UnknownLabelError(dep_label)
            if entry.ref_count:
                raise ImageInUseError(f"'{dep_label}' is serving {entry.ref_count} migration(s)")
            entries = dict(self._entries)
            del entries[dep_label]
            self._entries = entries
        logger.info(f"🗑️ Removed '{dep_label}' from the dependency pool")
        return entry.image

    def labels(self) -> List[str]:
        return sorted(self._entries)

    def entry(self, dep_label: str) -> Optional[PoolEntry]:
        return self._entries.get(dep_label)

    def memory_usage(self) -> int:
        """Bytes held by the pool; each image counts once however many functions share it."""
        entries = self._entries
        return sum(image_memory_bytes(e.image) + self.per_image_overhead_bytes for e in entries.values())

    def snapshot(self) -> List[PoolEntryInfo]:
        entries = self._entries
        return [
            PoolEntryInfo(
                dep_label=label,
                total_pages=e.image.metadata.total_pages,
                metadata_size_bytes=e.image.metadata.metadata_size_bytes,
                memory_bytes=image_memory_bytes(e.image) + self.per_image_overhead_bytes,
                ref_count=e.ref_count,
                serve_count=e.serve_count,
            )
            for label, e in sorted(entries.items())
        ]

    def __contains__(self, dep_label: str) -> bool:
        return dep_label in self._entries

    def __len__(self) -> int:
        return len(self._entries)


def pool_register(pool: DependencyPool, image: DependencyImage) -> None:
    pool.register(image)


def pool_lookup(pool: DependencyPool, dep_label: str) -> Optional[DependencyImage]:
    return pool.lookup(dep_label)


def pool_memory_usage(pool: DependencyPool) -> int:
    return pool.memory_usage()


def pool_remove(pool: DependencyPool, dep_label: str) -> DependencyImage:
    return pool.remove(dep_label)


def restore_image_from_checkpoint_into_pool(pool: DependencyPool, path: Union[str, Path]) -> DependencyImage:
    """Read and validate the checkpoint fully before touching the pool."""
    image = read_checkpoint(path)
    pool.register(image)
    return image
