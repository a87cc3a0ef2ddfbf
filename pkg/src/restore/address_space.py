from typing import Dict, Iterator, Optional, Set

from src.image.model import PAGE_SIZE, ProcessMetadata
from src.protocol.errors import PageOutOfRangeError


class GuestAddressSpace:
    """
    Page table of a restored dependency process.

    A page becomes visible through `get` only once its full block has been
    installed; a single dict assignment publishes it.
    """

    def __init__(self, metadata: ProcessMetadata):
        self.metadata = metadata
        self._pages: Dict[int, bytes] = {}

    def _check(self, page_id: int) -> None:
        if not self.metadata.covers(page_id):
            raise PageOutOfRangeError(f"page {page_id} is outside '{self.metadata.dep_label}'", (page_id,))

    def install(self, page_id: int, block: bytes) -> bool:
        """Make a page resident. Returns False if it already was."""
        self._check(page_id)
        if len(block) != PAGE_SIZE:
            raise ValueError(f"page {page_id} holds {len(block)} bytes, expected {PAGE_SIZE}")
        if page_id in self._pages:
            return False
        self._pages[page_id] = bytes(block)
        return True

    def get(self, page_id: int) -> Optional[bytes]:
        self._check(page_id)
        return self._pages.get(page_id)

    def is_resident(self, page_id: int) -> bool:
        return page_id in self._pages

    def resident_ids(self) -> Set[int]:
        return set(self._pages)

    @property
    def resident_count(self) -> int:
        return len(self._pages)

    def __iter__(self) -> Iterator[int]:
        return iter(sorted(self._pages))

    def __len__(self) -> int:
        return len(self._pages)
