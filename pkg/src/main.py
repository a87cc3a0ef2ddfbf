from fastapi import FastAPI
from fastapi.middleware.cors import CORSMiddleware

from src import app_state
from src.protocol.page_route import router as page_router
from src.workload.workload_route import router as workload_router

app = FastAPI(
    title="WarmSwap Control API",
    description="Dependency pool, page server statistics and workload analysis",
    version="1.0.0"
)

app.add_middleware(
    CORSMiddleware,
    allow_origins=["*"],
    allow_methods=["GET", "POST"],
    allow_headers=["*"],
)

app.include_router(page_router, prefix="/api", tags=["pool"])
app.include_router(workload_router, prefix="/api/workload", tags=["workload"])


@app.get("/")
async def root():
    return {
        "message": "WarmSwap control API is running",
        "version": "1.0.0",
        "endpoints": {
            "pool": "/api/pool",
            "stats": "/api/stats",
            "workload": "/api/workload/analyze"
        }
    }


@app.get("/health")
async def health_check():
    return {
        "status": "healthy",
        "images": len(app_state.pool),
        "page_server": app_state.page_server.endpoint if app_state.page_server else None
    }
