import asyncio

import pytest

from src.image.dump_service import dump
from src.image.pages import page_content
from src.image.pool import DependencyPool
from src.protocol import frames
from src.protocol.errors import (
    EndpointError,
    ErrorCode,
    PageOutOfRangeError,
    ProtocolUsageError,
    UnknownDependencyError,
    parse_endpoint,
)
from src.protocol.page_server import serve
from tests.conftest import loopback, make_spec, run, session


async def _eventually(condition, timeout: float = 2.0) -> None:
    async def poll():
        while not condition():
            await asyncio.sleep(0.01)
    await asyncio.wait_for(poll(), timeout)


def test_parse_endpoint():
    assert parse_endpoint("127.0.0.1:7070") == ("127.0.0.1", 7070)
    assert parse_endpoint("[::1]:0") == ("::1", 0)
    for bad in ("localhost", ":80", "host:http", "host:70000"):
        with pytest.raises(EndpointError):
            parse_endpoint(bad)


def test_shutdown_without_sessions(pool4):
    async def scenario():
        handle = await serve(pool4, "127.0.0.1:0")
        await handle.close()
        return handle.stats

    stats = run(scenario())
    assert stats.sessions == 0
    assert stats.bytes_sent == 0


def test_migration_and_fetch(pool4, image4):
    async def scenario():
        async with loopback(pool4) as server, session(server.endpoint) as client:
            meta = await client.request_migration("python+numpy")
            pages = await client.fetch_pages([0])
            empty = await client.fetch_pages([])
            return meta, pages, empty, client.metadata_payload_size

    meta, pages, empty, payload_size = run(scenario())
    assert meta == image4.metadata
    assert payload_size == meta.metadata_size_bytes
    assert pages == [(0, page_content(7, 0))]
    assert empty == []


def test_unknown_dependency_keeps_session(pool4):
    async def scenario():
        async with loopback(pool4) as server, session(server.endpoint) as client:
            with pytest.raises(UnknownDependencyError) as err:
                await client.request_migration("python+torch")
            meta = await client.request_migration("python+numpy")
            return err.value, meta

    error, meta = run(scenario())
    assert error.code == ErrorCode.UNKNOWN_DEPENDENCY
    assert "python+torch" in error.message
    assert meta.total_pages == 4


def test_out_of_range_page_keeps_session(pool4, image4):
    async def scenario():
        async with loopback(pool4) as server, session(server.endpoint) as client:
            await client.request_migration("python+numpy")
            with pytest.raises(PageOutOfRangeError):
                await client.fetch_pages([99])
            return await client.fetch_pages([3])

    assert run(scenario()) == [(3, image4.page(3))]


def test_session_discipline(pool4):
    async def scenario():
        async with loopback(pool4) as server, session(server.endpoint) as client:
            with pytest.raises(ProtocolUsageError):
                await client.fetch_pages([0])
            await client.request_migration("python+numpy")
            with pytest.raises(ProtocolUsageError):
                await client.request_migration("python+numpy")
            with pytest.raises(PageOutOfRangeError):
                await client.stream_remaining([42])

    run(scenario())


def test_concurrent_sessions_fetch_disjoint_pages(pool4, image4):
    async def one(endpoint, ids):
        async with session(endpoint) as client:
            await client.request_migration("python+numpy")
            return await client.fetch_pages(ids)

    async def scenario():
        async with loopback(pool4) as server:
            results = await asyncio.gather(one(server.endpoint, [0, 1]), one(server.endpoint, [3, 2]))
            await _eventually(lambda: server.stats.active_sessions == 0)
            return results, server.stats

    (a, b), stats = run(scenario())
    assert a == [(0, image4.page(0)), (1, image4.page(1))]
    assert b == [(3, image4.page(3)), (2, image4.page(2))]
    assert stats.sessions == 2
    assert pool4.entry("python+numpy").serve_count == 2
    assert pool4.entry("python+numpy").ref_count == 0


def test_stream_sends_each_page_once(pool4):
    async def scenario():
        async with loopback(pool4) as server, session(server.endpoint) as client:
            await client.request_migration("python+numpy")
            await client.fetch_pages([2])
            report = await client.stream_remaining([2])
            return report, client.stats

    report, stats = run(scenario())
    assert report.completed
    assert report.streamed == [0, 1, 3]
    assert report.resident == {0, 1, 2, 3}
    assert stats.pages_received == 4
    assert stats.duplicate_pages == 0


def test_stream_with_everything_resident(pool4):
    async def scenario():
        async with loopback(pool4) as server, session(server.endpoint) as client:
            await client.request_migration("python+numpy")
            report = await client.stream_remaining([0, 1, 2, 3])
            return report, server.stats.pages_streamed

    report, streamed = run(scenario())
    assert report.completed
    assert report.streamed == []
    assert streamed == 0


def test_fault_answered_during_stream():
    pool = DependencyPool()
    pool.register(dump(make_spec(64)))

    async def scenario():
        async with loopback(pool, batch_pages=1, stream_delay=0.02) as server, \
                session(server.endpoint) as client:
            await client.request_migration("python+numpy")
            stream = asyncio.create_task(client.stream_remaining())
            await asyncio.sleep(0.05)
            pages = await client.fetch_pages([60])
            stream_done_first = stream.done()
            report = await stream
            return pages, stream_done_first, report, client.stats

    pages, stream_done_first, report, stats = run(scenario())
    assert pages[0][0] == 60
    assert not stream_done_first
    assert report.completed
    assert report.fault_pages == [60]
    assert 60 not in report.streamed
    assert report.streamed == sorted(report.streamed)
    assert sorted(report.streamed + report.fault_pages) == list(range(64))
    assert stats.duplicate_pages == 0


def test_byte_accounting(pool4):
    async def scenario():
        async with loopback(pool4) as server, session(server.endpoint) as client:
            await client.request_migration("python+numpy")
            await client.fetch_pages([1])
            await client.stream_remaining()
            await _eventually(lambda: server.stats.bytes_sent == client.stats.bytes_received)
            return server.stats, client.stats

    server, client = run(scenario())
    assert server.bytes_sent == client.bytes_received
    assert server.frames_sent == client.frames_received
    assert server.pages_streamed == 3
    assert server.faults_served == 1


def test_malformed_frame_closes_session(pool4):
    async def scenario():
        async with loopback(pool4) as server:
            host, port = parse_endpoint(server.endpoint)
            reader, writer = await asyncio.open_connection(host, port)
            writer.write(b"\x00\x00\x00\x00\x42")
            await writer.drain()
            reply = await frames.read_frame(reader)
            eof = await reader.read()
            writer.close()
            return reply, eof

    reply, eof = run(scenario())
    assert frames.parse_error(reply)[0] == ErrorCode.MALFORMED_FRAME
    assert eof == b""


def test_close_twice(pool4):
    async def scenario():
        handle = await serve(pool4, "127.0.0.1:0")
        endpoint = handle.endpoint
        await handle.close()
        await handle.close()
        async with loopback(pool4) as server:
            await server.close()
        return endpoint, handle.endpoint

    before, after = run(scenario())
    assert before == after
    assert before.startswith("127.0.0.1:")


def test_session_drop_mid_stream_gives_partial_report():
    pool = DependencyPool()
    pool.register(dump(make_spec(64)))

    async def scenario():
        async with loopback(pool, batch_pages=1, stream_delay=0.02) as server, \
                session(server.endpoint) as client:
            await client.request_migration("python+numpy")
            stream = asyncio.create_task(client.stream_remaining())
            await _eventually(lambda: client.stats.pages_received >= 3)
            for writer in list(server.page_server.writers):
                writer.close()
            return await stream

    report = run(scenario())
    assert not report.completed
    assert 3 <= len(report.streamed) < 64
    assert report.resident == set(report.streamed)


def test_malformed_frame_error_during_stream_gives_partial_report(image4):
    async def scripted(reader, writer):
        await frames.read_frame(reader)
        frames.write_frame(writer, frames.metadata_frame(image4.metadata))
        await writer.drain()
        await frames.read_frame(reader)
        frames.write_frame(writer, frames.page_data([(0, image4.page(0))]))
        frames.write_frame(writer, frames.error_frame(ErrorCode.MALFORMED_FRAME, "bad frame"))
        await writer.drain()
        writer.close()

    async def scenario():
        server = await asyncio.start_server(scripted, "127.0.0.1", 0)
        host, port = server.sockets[0].getsockname()[:2]
        try:
            async with session(f"{host}:{port}") as client:
                await client.request_migration("python+numpy")
                return await client.stream_remaining()
        finally:
            server.close()
            await server.wait_closed()

    report = run(scenario())
    assert not report.completed
    assert report.streamed == [0]
    assert report.resident == {0}
