import logging
from typing import List

from fastapi import APIRouter, HTTPException
from pydantic import ValidationError

from src.workload.model import AnalysisRow, AnalyzeRequest, RateParams
from src.workload.workload_service import analyze

logger = logging.getLogger(__name__)

router = APIRouter()


@router.post("/analyze", response_model=List[AnalysisRow])
async def analyze_rates(request: AnalyzeRequest):
    """Cold-start expectation and tuning decision for each rate."""
    try:
        rows = [
            analyze(RateParams(rate=r, keep_alive=request.keep_alive, horizon=request.horizon),
                    request.benefit_w, request.cost_c)
            for r in request.rates
        ]
    except ValidationError as e:
        logger.warning(f"⚠️ Rejected analysis request: {e}")
        raise HTTPException(status_code=422, detail=e.errors())
    logger.info(f"📊 Analysed {len(rows)} rates")
    return rows
