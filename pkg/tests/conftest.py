import asyncio
import contextlib
from typing import List, Optional

import pytest

from src.image.dump_service import dump
from src.image.model import FilePlan, ProcessSpec, SegmentPlan
from src.image.pool import DependencyPool
from src.protocol.page_client import PageClient
from src.protocol.page_server import serve

FILES = [
    FilePlan(fd=3, path="/opt/python/lib/python3.11/site-packages/numpy@1.26.2"),
    FilePlan(fd=4, path="/var/task/handler.py"),
    FilePlan(fd=5, path="socket:[4242]", kind="socket"),
]
ENV = {
    "/opt/python/lib/python3.11/site-packages/numpy": "1.26.2",
    "/var/task/handler.py": "",
}


def make_spec(pages: int = 4, label: str = "python+numpy", seed: int = 7,
              segments: Optional[List[int]] = None) -> ProcessSpec:
    """Spec whose segments hold `segments` pages each (default: one segment of `pages`)."""
    counts = segments or [pages]
    return ProcessSpec(
        dep_label=label,
        segments=[SegmentPlan(size_bytes=n * 4096, permission="read") for n in counts],
        files=FILES,
        content_seed=seed,
    )


@pytest.fixture
def spec4() -> ProcessSpec:
    return make_spec(4)


@pytest.fixture
def image4(spec4):
    return dump(spec4)


@pytest.fixture
def pool4(image4) -> DependencyPool:
    pool = DependencyPool()
    pool.register(image4)
    return pool


@contextlib.asynccontextmanager
async def loopback(pool: DependencyPool, **kwargs):
    """A page server on an ephemeral loopback port."""
    handle = await serve(pool, "127.0.0.1:0", **kwargs)
    try:
        yield handle
    finally:
        await handle.close()


@contextlib.asynccontextmanager
async def session(endpoint: str):
    client = await PageClient.connect(endpoint)
    try:
        yield client
    finally:
        await client.close()


def run(coro):
    return asyncio.run(coro)
