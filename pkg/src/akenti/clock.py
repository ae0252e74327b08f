from __future__ import annotations

import threading
from datetime import datetime, timedelta, timezone

from .constraints import parse_time_of_day


class SystemClock:
    def now(self) -> datetime:
        return datetime.now(timezone.utc)


class VirtualClock:
    """Settable UTC clock for simulations and tests."""

    def __init__(self, start: datetime):
        if start.tzinfo is None:
            raise ValueError("VirtualClock needs an aware datetime")
        self._now = start.astimezone(timezone.utc)
        self._lock = threading.Lock()

    def now(self) -> datetime:
        with self._lock:
            return self._now

    def set(self, when: datetime) -> None:
        with self._lock:
            self._now = when.astimezone(timezone.utc)

    def advance(self, seconds: float) -> datetime:
        with self._lock:
            self._now += timedelta(seconds=seconds)
            return self._now

    def set_time_of_day(self, value: str) -> datetime:
        minutes = parse_time_of_day(value)
        with self._lock:
            self._now = self._now.replace(hour=minutes // 60, minute=minutes % 60, second=0, microsecond=0)
            return self._now


def time_of_day(when: datetime) -> str:
    return f"{when.hour:02d}:{when.minute:02d}"
