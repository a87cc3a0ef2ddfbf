import json
import struct
import zlib

import pytest
from hypothesis import HealthCheck, given, settings, strategies as st

from src.image.codec import (
    MAGIC,
    PAGE_RECORD_SIZE,
    checkpoint_bytes,
    checkpoint_size,
    decode_metadata,
    encode_metadata,
    parse_checkpoint,
    read_checkpoint,
    write_checkpoint,
)
from src.image.dump_service import dump, load_spec
from src.image.errors import (
    BadMagicError,
    ChecksumMismatchError,
    CheckpointError,
    InvalidMetadataError,
    InvalidSpecError,
    MalformedCheckpointError,
    TruncatedCheckpointError,
    VersionMismatchError,
)
from src.image.model import (
    DependencyImage,
    FileEntry,
    FileKind,
    Permission,
    ProcessMetadata,
    ProcessSpec,
    Segment,
    SegmentPlan,
)
from src.image.pages import GeneratedPages, page_content, page_content_reference
from tests.conftest import make_spec


def test_dump_four_pages(spec4):
    image = dump(spec4)
    meta = image.metadata
    assert meta.total_pages == 4
    assert list(meta.page_ids()) == [0, 1, 2, 3]
    assert meta.dep_label == "python+numpy"
    assert image.page(0) == page_content(7, 0)
    assert len(image.page(3)) == 4096


def test_dump_is_deterministic(spec4):
    assert checkpoint_bytes(dump(spec4)) == checkpoint_bytes(dump(spec4))


def test_page_content_matches_scalar_definition():
    for seed, pid in [(0, 0), (7, 3), (2**64 - 1, 123456), (42, 2**40)]:
        assert page_content(seed, pid) == page_content_reference(seed, pid)


def test_page_content_first_word():
    # SplitMix64(0) first output
    assert page_content(0, 0)[:8] == (0xE220A8397B1DCDAF).to_bytes(8, "little")


def test_segments_are_laid_out_contiguously():
    image = dump(make_spec(segments=[2, 3]))
    assert [(s.base_page_id, s.page_count) for s in image.metadata.segments] == [(0, 2), (2, 3)]


def test_segment_permissions_come_from_tags():
    spec = make_spec(1)
    spec.segments = [
        SegmentPlan(size_bytes=4096, permission=tag) for tag in ("read", "read-write", "execute")
    ]
    assert [s.permission for s in dump(spec).metadata.segments] == [
        Permission.READ, Permission.READ_WRITE, Permission.EXECUTE,
    ]
    with pytest.raises(KeyError):
        Permission.from_tag("write")


def test_partial_page_rounds_up():
    assert SegmentPlan(size_bytes=4097).page_count == 2


def test_overlapping_segments_rejected():
    spec = ProcessSpec(
        dep_label="x",
        segments=[SegmentPlan(size_bytes=8192, base_page_id=0), SegmentPlan(size_bytes=4096, base_page_id=1)],
    )
    with pytest.raises(InvalidSpecError, match="overlap"):
        dump(spec)


def test_metadata_invariants():
    with pytest.raises(InvalidMetadataError):
        ProcessMetadata("x", "e", (Segment(0, 0),))
    with pytest.raises(InvalidMetadataError):
        ProcessMetadata("x", "e", (Segment(0, 1),), (FileEntry(3, "/a"), FileEntry(3, "/b")))


def test_sparse_segments_cover_only_their_pages():
    meta = ProcessMetadata("x", "e", (Segment(100, 2), Segment(10, 1, Permission.EXECUTE)))
    assert list(meta.page_ids()) == [10, 100, 101]
    assert meta.covers(101) and not meta.covers(102) and not meta.covers(0)
    assert list(meta.page_ids(start=11)) == [100, 101]


def test_metadata_size_is_header_length(image4):
    meta = image4.metadata
    header = encode_metadata(meta)
    assert meta.metadata_size_bytes == len(header)
    assert header.startswith(MAGIC + struct.pack("<I", 1))
    assert decode_metadata(header) == (meta, len(header))


def test_checkpoint_layout(image4):
    data = checkpoint_bytes(image4)
    header = image4.metadata.metadata_size_bytes
    assert len(data) == checkpoint_size(image4.metadata) == header + 4 * PAGE_RECORD_SIZE + 4
    assert struct.unpack_from("<Q", data, header)[0] == 0
    assert data[header + 8:header + PAGE_RECORD_SIZE] == image4.page(0)
    assert struct.unpack("<I", data[-4:])[0] == zlib.crc32(data[:-4])
    assert data[header - 12:header] == struct.pack("<QI", 4, 4096)


def test_write_read_round_trip(tmp_path, image4):
    path = tmp_path / "img.ckpt"
    size = write_checkpoint(image4, path)
    assert size == path.stat().st_size
    assert read_checkpoint(path) == image4
    assert not (tmp_path / "img.ckpt.part").exists()


def test_corruptions_are_classified(image4):
    data = checkpoint_bytes(image4)
    with pytest.raises(BadMagicError):
        parse_checkpoint(b"XXXXXXXX" + data[8:])
    with pytest.raises(VersionMismatchError):
        parse_checkpoint(data[:8] + struct.pack("<I", 2) + data[12:])
    with pytest.raises(TruncatedCheckpointError):
        parse_checkpoint(data[:-100])
    with pytest.raises(MalformedCheckpointError):
        parse_checkpoint(data + b"\x00")
    flipped = bytearray(data)
    flipped[-5000] ^= 0x01
    with pytest.raises(ChecksumMismatchError):
        parse_checkpoint(bytes(flipped))
    with pytest.raises(TruncatedCheckpointError):
        parse_checkpoint(MAGIC[:3])


@settings(max_examples=150, suppress_health_check=[HealthCheck.too_slow])
@given(
    label=st.text(min_size=1, max_size=20),
    token=st.text(max_size=20),
    counts=st.lists(st.integers(1, 3), min_size=1, max_size=3),
    gaps=st.lists(st.integers(0, 2**20), min_size=3, max_size=3),
    paths=st.lists(st.text(max_size=12), max_size=3),
    seed=st.integers(0, 2**64 - 1),
)
def test_serialisation_identity(label, token, counts, gaps, paths, seed):
    segments, base = [], 0
    for count, gap, perm in zip(counts, gaps, Permission):
        base += gap
        segments.append(Segment(base, count, perm))
        base += count
    files = tuple(FileEntry(fd, p, FileKind(fd % 3)) for fd, p in enumerate(paths))
    meta = ProcessMetadata(label, token, tuple(segments), files)
    image = DependencyImage(meta, GeneratedPages(meta, seed))
    assert parse_checkpoint(checkpoint_bytes(image)) == image


@settings(max_examples=10000, deadline=None, suppress_health_check=[HealthCheck.too_slow])
@given(st.data())
def test_corrupted_checkpoints_never_crash(data):
    blob = _SMALL_CHECKPOINT
    mode = data.draw(st.sampled_from(["flip", "truncate", "splice"]))
    if mode == "flip":
        index = data.draw(st.integers(0, len(blob) - 1))
        bit = data.draw(st.integers(0, 7))
        mutated = bytearray(blob)
        mutated[index] ^= 1 << bit
        mutated = bytes(mutated)
    elif mode == "truncate":
        mutated = blob[:data.draw(st.integers(0, len(blob) - 1))]
    else:
        index = data.draw(st.integers(0, len(blob)))
        mutated = blob[:index] + data.draw(st.binary(min_size=1, max_size=16)) + blob[index:]
    with pytest.raises(CheckpointError):
        parse_checkpoint(mutated)


_SMALL_CHECKPOINT = checkpoint_bytes(dump(make_spec(2, label="tiny", seed=3)))


def test_load_spec_reports_json_line(tmp_path):
    path = tmp_path / "spec.json"
    path.write_text('{\n  "dep_label": "x",\n  "segments": [\n}')
    with pytest.raises(InvalidSpecError, match=r"spec.json:4"):
        load_spec(path)


def test_load_spec_schema_error(tmp_path):
    path = tmp_path / "spec.json"
    path.write_text(json.dumps({"dep_label": "", "segments": [{"size_bytes": 4096}]}))
    with pytest.raises(InvalidSpecError, match="dep_label"):
        load_spec(path)
