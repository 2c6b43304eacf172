from datetime import datetime, timezone

UTC = timezone.utc  # datetime.UTC alias (3.11+); same object on 3.10
from fastapi import APIRouter, Request
from app.schemas.responses import HealthResponse

router = APIRouter()


@router.get("/health", response_model=HealthResponse)
async def health_check(request: Request):
    """
    Health check endpoint that returns the service status.

    Returns:
        HealthResponse: Service health information, plus the current round when a coordinator is attached.
    """
    coordinator = getattr(request.app.state, "coordinator", None)
    return HealthResponse(
        status="healthy",
        timestamp=datetime.now(UTC).isoformat(),
        service="llmind-coordinator",
        version="0.1.0",
        coordinator_running=coordinator is not None,
        round=coordinator.round if coordinator is not None else None,
    )
