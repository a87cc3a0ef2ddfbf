import asyncio
import random

import pytest
from hypothesis import given, settings, strategies as st

from src.image.pages import page_content
from src.protocol import frames
from src.protocol.errors import ErrorCode, MalformedFrameError, SessionClosedError
from src.protocol.frames import MAX_PAYLOAD, Frame, FrameKind, decode_frame, encode_frame
from tests.conftest import run


def test_done_frame_bytes():
    assert encode_frame(frames.done()) == b"\x00\x00\x00\x00\x06"


def test_single_page_request_payload():
    data = encode_frame(frames.page_request([7]))
    assert data[:5] == b"\x0c\x00\x00\x00\x03"
    assert data[5:] == b"\x01\x00\x00\x00" + (7).to_bytes(8, "little")


def test_prefetch_request_sorted():
    assert frames.parse_page_ids(frames.prefetch_request({9, 2, 5})) == [2, 5, 9]


def test_metadata_frame(image4):
    frame = decode_frame(encode_frame(frames.metadata_frame(image4.metadata)))
    assert frames.parse_metadata(frame) == image4.metadata
    assert len(frame.payload) == image4.metadata.metadata_size_bytes


def test_error_frame():
    frame = decode_frame(encode_frame(frames.error_frame(ErrorCode.UNKNOWN_DEPENDENCY, "no 'x'")))
    assert frames.parse_error(frame) == (ErrorCode.UNKNOWN_DEPENDENCY, "no 'x'")


@pytest.mark.parametrize("data", [
    b"",
    b"\x00\x00\x00",
    b"\x00\x00\x00\x00\x42",
    b"\x01\x00\x00\x00\x06\x00",
    b"\x05\x00\x00\x00\x03\x01\x00",
    b"\x04\x00\x00\x00\x03\x01\x00\x00\x00",
    b"\x06\x00\x00\x00\x7f\x09\x00\x00\x00\x00\x00",
    (MAX_PAYLOAD + 1).to_bytes(4, "little") + b"\x04",
])
def test_malformed_frames(data):
    with pytest.raises(MalformedFrameError):
        decode_frame(data)


def test_page_data_rejects_short_block():
    with pytest.raises(MalformedFrameError):
        frames.page_data([(0, b"\x00" * 100)])


_ids = st.lists(st.integers(min_value=0, max_value=2**64 - 1), max_size=40)
_frames = st.one_of(
    st.text(max_size=40).map(frames.migrate_request),
    _ids.map(frames.page_request),
    _ids.map(frames.prefetch_request),
    st.lists(st.integers(min_value=0, max_value=1000), max_size=3).map(
        lambda ids: frames.page_data([(pid, page_content(1, pid)) for pid in ids])
    ),
    st.just(frames.done()),
    st.tuples(st.sampled_from(list(ErrorCode)), st.text(max_size=40)).map(lambda t: frames.error_frame(*t)),
)


@settings(max_examples=300)
@given(_frames)
def test_frame_identity(frame):
    decoded = decode_frame(encode_frame(frame))
    assert decoded == frame
    assert decoded.wire_size == len(encode_frame(frame))


def _mutate(data: bytes, rng: random.Random) -> bytes:
    buf = bytearray(data)
    op = rng.randrange(4)
    if op == 0 and buf:
        buf[rng.randrange(len(buf))] ^= 1 << rng.randrange(8)
    elif op == 1 and buf:
        del buf[rng.randrange(len(buf)):]
    elif op == 2:
        buf.insert(rng.randrange(len(buf) + 1), rng.randrange(256))
    elif buf:
        buf[rng.randrange(len(buf))] = rng.randrange(256)
    return bytes(buf)


def test_mutated_frames_never_crash(image4):
    rng = random.Random(20240601)
    seeds = [
        encode_frame(frames.migrate_request("python+numpy")),
        encode_frame(frames.metadata_frame(image4.metadata)),
        encode_frame(frames.page_request([0, 3])),
        encode_frame(frames.prefetch_request([1])),
        encode_frame(frames.page_data([(2, image4.page(2))])),
        encode_frame(frames.done()),
        encode_frame(frames.error_frame(ErrorCode.PAGE_OUT_OF_RANGE, "page 9")),
    ]
    for _ in range(10_000):
        data = _mutate(rng.choice(seeds), rng)
        try:
            frame = decode_frame(data)
        except MalformedFrameError:
            continue
        assert frame.wire_size == len(data)
        assert encode_frame(frame) == data


def test_read_frame_from_stream():
    async def scenario():
        reader = asyncio.StreamReader()
        reader.feed_data(encode_frame(frames.page_request([1, 2])) + encode_frame(frames.done())[:3])
        reader.feed_eof()
        first = await frames.read_frame(reader)
        with pytest.raises(SessionClosedError):
            await frames.read_frame(reader)
        return first

    assert frames.parse_page_ids(run(scenario())) == [1, 2]


def test_frame_kind_byte():
    assert Frame(FrameKind.ERROR).wire_size == 5
    assert encode_frame(Frame(FrameKind.ERROR, b"x"))[4] == 0x7F
