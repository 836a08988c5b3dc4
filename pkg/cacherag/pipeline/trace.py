"""Structured per-question trace, written as JSON lines."""
import json
import logging
import threading
import time
from contextlib import contextmanager
from pathlib import Path

logger = logging.getLogger(__name__)

STAGES = (
    'config', 'route', 'parse', 'llm', 'cache_retrieve', 'compile', 'execute', 'dispatch',
    'expansion', 'recheck', 'summarize', 'fallback', 'cache_insert', 'flag',
)


class Trace:
    def __init__(self):
        self.records = []
        self._lock = threading.Lock()

    def record(self, stage: str, elapsed_ms: float | None = None, **fields) -> dict:
        if stage not in STAGES:
            raise ValueError(f"Unknown trace stage {stage!r}")
        with self._lock:
            rec = {'seq': len(self.records) + 1, 'stage': stage}
            if elapsed_ms is not None:
                rec['elapsed_ms'] = round(elapsed_ms, 3)
            rec.update(fields)
            self.records.append(rec)
        return rec

    @contextmanager
    def stage(self, stage: str, **fields):
        """Time a block; the yielded dict is merged into the record."""
        extra = dict(fields)
        started = time.perf_counter()
        try:
            yield extra
        finally:
            self.record(stage, elapsed_ms=(time.perf_counter() - started) * 1000, **extra)

    def flag(self, code: str, message: str, **fields) -> dict:
        logger.warning("%s: %s", code, message)
        return self.record('flag', code=code, message=message, **fields)

    def stages(self) -> list[str]:
        return [r['stage'] for r in self.records]

    def of(self, stage: str) -> list[dict]:
        return [r for r in self.records if r['stage'] == stage]

    def latency_breakdown(self) -> dict:
        """Summed elapsed_ms per stage (llm calls counted inside their stage too)."""
        totals = {}
        for r in self.records:
            if 'elapsed_ms' in r:
                totals[r['stage']] = round(totals.get(r['stage'], 0.0) + r['elapsed_ms'], 3)
        return totals

    def to_jsonl(self, sink):
        for rec in self.records:
            sink.write(json.dumps(rec, ensure_ascii=False, default=str) + '\n')

    def write(self, path, append: bool = False):
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, 'a' if append else 'w', encoding='utf-8') as f:
            self.to_jsonl(f)
