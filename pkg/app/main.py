from typing import Optional

from fastapi import FastAPI
from fastapi.middleware.cors import CORSMiddleware
from app.api.endpoints import coordinator as coordinator_endpoints
from app.api.endpoints import health
from app.core.coordinator import Coordinator

DESCRIPTION = """## LLMind Coordinator Operator API

Submit manager instructions and watch the coordinator work:

- **POST /api/v1/instructions** - queue an instruction for the next poll round
- **GET /api/v1/devices** - latest report and registered API profile per device
- **GET /api/v1/rounds** - recent poll rounds (polled, received, dispatched)
- **GET /api/v1/m2m** - the natural-language machine-to-machine log
"""


def create_app(coordinator: Optional[Coordinator] = None) -> FastAPI:
    app = FastAPI(
        title="LLMind Coordinator",
        description=DESCRIPTION,
        version="0.1.0",
        docs_url="/docs",
        redoc_url="/redoc",
    )
    app.state.coordinator = coordinator

    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_credentials=True,
        allow_methods=["*"],
        allow_headers=["*"],
    )

    app.include_router(health.router)
    app.include_router(coordinator_endpoints.router)

    @app.get("/")
    async def root():
        """Root endpoint with API information"""
        return {
            "message": "LLMind Coordinator - distributed IoT task orchestration",
            "version": "0.1.0",
            "endpoints": {
                "instructions": "/api/v1/instructions",
                "devices": "/api/v1/devices",
                "rounds": "/api/v1/rounds",
                "m2m": "/api/v1/m2m",
            },
            "documentation": "/docs",
            "health": "/health",
        }

    return app


app = create_app()
