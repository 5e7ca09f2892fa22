# app/telemetry.py
from __future__ import annotations

import logging

from prometheus_client import REGISTRY, Counter, write_to_textfile

logger = logging.getLogger(__name__)

__all__ = [
    "EVENTS_APPENDED",
    "EVENTS_REJECTED",
    "PROPOSAL_VERDICTS",
    "FOUNDATION_OUTCOMES",
    "BREACHES",
    "export_textfile",
]

# --- Prometheus metrics (процессные, в состояние движка не попадают) ---
EVENTS_APPENDED = Counter("hc_events_appended_total", "Events appended to the audit log", ["kind"])
EVENTS_REJECTED = Counter("hc_events_rejected_total", "Events rejected by validation", ["code"])
PROPOSAL_VERDICTS = Counter("hc_proposal_verdicts_total", "Closed proposals by verdict", ["verdict"])
FOUNDATION_OUTCOMES = Counter("hc_foundation_outcomes_total", "Resolution outcomes", ["outcome"])
BREACHES = Counter("hc_breaches_total", "Code-deference breach findings", ["kind"])


def inc(counter: Counter, label: str) -> None:
    # Телеметрия никогда не должна ронять движок
    try:
        counter.labels(label).inc()
    except Exception:
        pass


def export_textfile(path: str) -> bool:
    try:
        write_to_textfile(path, REGISTRY)
        logger.info("Метрики прогона записаны: %s", path)
        return True
    except Exception as e:
        logger.warning("Не удалось записать метрики в %s: %s", path, e)
        return False
