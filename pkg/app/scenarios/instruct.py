"""Submit manager instructions to a warehouse system and echo the M2M trace round by round."""

import asyncio
import logging
from typing import Any, Callable, Dict, List, Optional, Sequence, Union

from pydantic import BaseModel, Field

from app.core.m2m_log import M2MLog
from app.scenarios.warehouse import WarehouseSystem, build_warehouse_system

logger = logging.getLogger(__name__)

INSTRUCT_POLL_PERIOD_S = 0.02
INSTRUCT_REPORT_TIMEOUT_S = 0.01


class InstructResult(BaseModel):
    lines: List[str] = Field(default_factory=list)
    rounds: int = 0
    dispatched: int = 0
    completed: bool = False
    vacancy: Dict[int, Any] = Field(default_factory=dict)
    warnings: List[str] = Field(default_factory=list)


async def instruct(
    texts: Union[str, Sequence[str]],
    system: Optional[WarehouseSystem] = None,
    n: int = 2,
    seed: int = 0,
    round_budget: int = 20,
    echo: Optional[Callable[[str], None]] = None,
) -> InstructResult:
    """
    Queue the instruction(s) and run rounds until the plan finishes or the budget runs out.

    An embedded N-robot warehouse is built (and torn down) when no system is given.
    """
    texts = [texts] if isinstance(texts, str) else list(texts)
    own = system is None
    if own:
        system = build_warehouse_system(
            n,
            seed=seed,
            poll_period_s=INSTRUCT_POLL_PERIOD_S,
            report_timeout_s=INSTRUCT_REPORT_TIMEOUT_S,
            m2m=M2MLog(),
        )
        system.start()

    result = InstructResult()
    seen = 0
    try:
        for text in texts:
            system.coordinator.submit_instruction(text)
        while result.rounds < round_budget:
            record = await system.coordinator.run_round()
            result.rounds += 1
            result.dispatched += len(record.dispatched)
            if system.m2m is not None:
                lines = system.m2m.lines()
                for line in lines[seen:]:
                    result.lines.append(line)
                    if echo is not None:
                        echo(line)
                seen = len(lines)
            if system.planner.finished:
                result.completed = True
                break
            await asyncio.sleep(system.coordinator.config.poll_period_s)
    finally:
        if own:
            await system.stop()

    if result.completed:
        result.vacancy = dict(sorted(system.planner.vacancy.items()))
        for shelf, positions in result.vacancy.items():
            line = f"shelf {shelf} vacant positions: {positions}"
            result.lines.append(line)
            if echo is not None:
                echo(line)
    else:
        warning = f"round budget of {round_budget} exhausted before the plan completed"
        logger.warning(warning)
        result.warnings.append(warning)
    return result
