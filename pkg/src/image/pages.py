"""
Synthetic page contents.

Page p of an image with content seed s holds the first 512 outputs of
SplitMix64(s XOR p), each written as 8 little-endian bytes (4096 bytes).
"""
from typing import Iterator, Mapping

from src.image.model import PAGE_SIZE, ProcessMetadata
from src.rng import MASK64, SplitMix64, words

WORDS_PER_PAGE = PAGE_SIZE // 8


def page_content(content_seed: int, page_id: int) -> bytes:
    return words((content_seed ^ page_id) & MASK64, WORDS_PER_PAGE).astype("<u8").tobytes()


def page_content_reference(content_seed: int, page_id: int) -> bytes:
    """Scalar rendition of page_content, kept as the executable definition."""
    rng = SplitMix64((content_seed ^ page_id) & MASK64)
    return b"".join(rng.next_u64().to_bytes(8, "little") for _ in range(WORDS_PER_PAGE))


class GeneratedPages(Mapping):
    """Page store of a freshly dumped image; blocks are regenerated on access."""

    def __init__(self, metadata: ProcessMetadata, content_seed: int):
        self.metadata = metadata
        self.content_seed = content_seed

    def __getitem__(self, page_id: int) -> bytes:
        if not isinstance(page_id, int) or not self.metadata.covers(page_id):
            raise KeyError(page_id)
        return page_content(self.content_seed, page_id)

    def __iter__(self) -> Iterator[int]:
        return self.metadata.page_ids()

    def __len__(self) -> int:
        return self.metadata.total_pages

    def __contains__(self, page_id) -> bool:
        return isinstance(page_id, int) and self.metadata.covers(page_id)
