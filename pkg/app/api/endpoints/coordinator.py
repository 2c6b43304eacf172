"""
Coordinator operator endpoints.

Manager instructions go in through POST /instructions; devices, poll rounds
and the M2M log can be inspected read-only. Every route answers 503 while no
coordinator is attached to the app.
"""

import logging

from fastapi import APIRouter, HTTPException, Query, Request

from app.core.coordinator import Coordinator
from app.core.errors import InstructionValidationError
from app.schemas.responses import (
    DeviceSnapshot,
    DevicesResponse,
    InstructionRequest,
    InstructionResponse,
    M2MResponse,
    RoundsResponse,
    RoundSummary,
)

logger = logging.getLogger(__name__)

router = APIRouter(prefix="/api/v1", tags=["coordinator"])


def _coordinator(request: Request) -> Coordinator:
    coordinator = getattr(request.app.state, "coordinator", None)
    if coordinator is None:
        raise HTTPException(status_code=503, detail="coordinator is not running")
    return coordinator


@router.post("/instructions", response_model=InstructionResponse, summary="Submit a manager instruction")
async def submit_instruction(body: InstructionRequest, request: Request):
    coordinator = _coordinator(request)
    try:
        instruction_id = coordinator.submit_instruction(body.text)
    except InstructionValidationError as e:
        logger.warning(f"Rejected instruction: {e}")
        raise HTTPException(status_code=400, detail=str(e))
    return InstructionResponse(
        instruction_id=instruction_id, pending=len(coordinator.pending_instructions)
    )


@router.get("/devices", response_model=DevicesResponse, summary="Latest snapshot per device")
async def list_devices(request: Request):
    coordinator = _coordinator(request)
    device_ids = sorted(set(coordinator.profiles) | set(coordinator.snapshots))
    devices = []
    for device_id in device_ids:
        profile = coordinator.profiles.get(device_id)
        report = coordinator.snapshots.get(device_id)
        outstanding = coordinator.outstanding.get(device_id)
        devices.append(
            DeviceSnapshot(
                device_id=device_id,
                profile_version=profile.version if profile else None,
                functions=[f.name for f in profile.functions] if profile else [],
                report=report.model_dump(mode="json", exclude_none=True) if report else None,
                outstanding_subtask=outstanding.subtask.subtask_id if outstanding else None,
            )
        )
    return DevicesResponse(devices=devices)


@router.get("/devices/{device_id}", response_model=DeviceSnapshot, summary="One device's snapshot")
async def get_device(device_id: str, request: Request):
    response = await list_devices(request)
    for device in response.devices:
        if device.device_id == device_id:
            return device
    raise HTTPException(status_code=404, detail=f"unknown device {device_id}")


@router.get("/rounds", response_model=RoundsResponse, summary="Most recent poll rounds")
async def list_rounds(request: Request, limit: int = Query(20, ge=1, le=1000)):
    coordinator = _coordinator(request)
    rounds = list(coordinator.rounds)[-limit:]
    return RoundsResponse(
        rounds=[
            RoundSummary(
                round=r.round,
                polled=r.polled,
                received=sorted(r.received),
                failed=r.failed,
                duration_ms=r.duration_s * 1000,
                dispatched=[s.model_dump(mode="json") for s in r.dispatched],
            )
            for r in rounds
        ]
    )


@router.get("/m2m", response_model=M2MResponse, summary="Most recent M2M log lines")
async def m2m_log(request: Request, limit: int = Query(100, ge=1, le=10000)):
    coordinator = _coordinator(request)
    if coordinator.m2m is None:
        return M2MResponse(lines=[], message_count=0)
    return M2MResponse(lines=coordinator.m2m.lines(limit), message_count=coordinator.m2m.message_count)
