from typing import List

from fastapi import APIRouter, HTTPException

from src import app_state
from src.image.model import PoolEntryInfo
from src.protocol.model import ServerStats

router = APIRouter()


@router.get("/pool", response_model=List[PoolEntryInfo])
async def list_pool():
    """Images registered in the dependency pool."""
    return app_state.pool.snapshot()


@router.get("/stats", response_model=ServerStats)
async def server_stats():
    if app_state.page_server is None:
        raise HTTPException(status_code=503, detail="Page server is not running")
    return app_state.page_server.stats
