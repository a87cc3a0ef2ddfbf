import json
import logging
from pathlib import Path
from typing import List, Union

from pydantic import ValidationError

from src.image.errors import InvalidMetadataError, InvalidSpecError
from src.image.model import (
    DependencyImage,
    FileEntry,
    FileKind,
    Permission,
    ProcessMetadata,
    ProcessSpec,
    Segment,
)
from src.image.pages import GeneratedPages

logger = logging.getLogger(__name__)


def plan_segments(spec: ProcessSpec) -> List[Segment]:
    """Lay out the segment plan; unplaced segments follow the previous one."""
    segments = []
    cursor = 0
    for plan in spec.segments:
        base = cursor if plan.base_page_id is None else plan.base_page_id
        segments.append(Segment(base, plan.page_count, Permission.from_tag(plan.permission)))
        cursor = base + plan.page_count
    return segments


def build_metadata(spec: ProcessSpec) -> ProcessMetadata:
    files = [FileEntry(f.fd, f.path, FileKind[f.kind.upper()]) for f in spec.files]
    try:
        return ProcessMetadata(spec.dep_label, spec.entry_token, tuple(plan_segments(spec)), tuple(files))
    except InvalidMetadataError as e:
        raise InvalidSpecError(f"invalid process spec '{spec.dep_label}': {e}") from e


def dump(spec: ProcessSpec) -> DependencyImage:
    """
    Dump the synthetic dependency process described by `spec` into a live image.
    Deterministic: the same spec always yields byte-identical pages.
    """
    meta = build_metadata(spec)
    image = DependencyImage(meta, GeneratedPages(meta, spec.content_seed))
    logger.info(f"✅ Dumped '{spec.dep_label}': {meta.total_pages} pages, "
                f"{len(meta.segments)} segments, metadata {meta.metadata_size_bytes} bytes")
    return image


def load_spec(path: Union[str, Path]) -> ProcessSpec:
    """Read a ProcessSpec JSON file; errors carry the file and line/field context."""
    text = Path(path).read_text(encoding="utf-8")
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as e:
        raise InvalidSpecError(f"{path}:{e.lineno}: {e.msg}") from e
    try:
        return ProcessSpec.parse_obj(raw)
    except ValidationError as e:
        raise InvalidSpecError(f"{path}: {e}") from e
