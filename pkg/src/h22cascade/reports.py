from __future__ import annotations

from dataclasses import dataclass, field, asdict
import json
import math

EXACT_TOL = 1e-12


@dataclass
class TestReport:
    """Verdict of one statistical or algebraic check.

    ``passed`` is ``statistic <= threshold``; a zero threshold (no sampling
    noise) falls back to an exactness tolerance.
    """

    __test__ = False  # not a pytest class

    name: str
    statistic: float
    threshold: float
    n_samples: int = 0
    standard_error: float = 0.0
    passed: bool = field(default=None)
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.passed is None:
            limit = self.threshold if self.threshold > 0 else EXACT_TOL
            self.passed = bool(math.isfinite(self.statistic) and self.statistic <= limit)

    def line(self) -> str:
        flag = "PASS" if self.passed else "FAIL"
        return (f"{flag}  {self.name}: statistic={self.statistic:.6g} "
                f"threshold={self.threshold:.6g} n={self.n_samples} se={self.standard_error:.3g}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["metadata"] = _jsonable(d["metadata"])
        return d


def _jsonable(obj):
    return json.loads(json.dumps(obj, default=lambda o: o.tolist() if hasattr(o, "tolist") else str(o)))
