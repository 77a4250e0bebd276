"""Randomness certification from game statistics.

The chain is: pooled win probability -> correlation value s = 8*p - 4 ->
(a) significance z of the gap above the classical ceiling 3/4 under the
binomial null, and (b) a certified min-entropy rate per output bit,
max(0, 1 - log2(1 + sqrt(2 - s^2/4))).  The rate is 0 at or below the
classical point s = 2 and reaches 1 at the maximal quantum value
s = 2*sqrt(2).  A run is CERTIFIED only when z clears the threshold
(default 5) and s exceeds 2.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Any, Mapping

from .game import ExperimentResult

CLASSICAL_S = 2.0
TSIRELSON_S = 2.0 * math.sqrt(2.0)
DEFAULT_THRESHOLD_Z = 5.0


class Verdict(str, enum.Enum):
    CERTIFIED = "CERTIFIED"
    NOT_VIOLATED = "NOT_VIOLATED"
    INSUFFICIENT_DATA = "INSUFFICIENT_DATA"


def s_value(p_win: float) -> float:
    """Correlation value s = 8*p_win - 4 for a uniform-input experiment."""
    if not (0.0 <= p_win <= 1.0):
        raise ValueError(f"p_win must be in [0, 1], got {p_win!r}")
    return 8.0 * p_win - 4.0


def violation_significance(p_win: float, n: int) -> float:
    """Z-score of p_win above 3/4 under the binomial null with n shots.

    Degenerate inputs p_win in {0, 1} have zero estimated variance; the
    z-score is then a signed infinity (sign of p_win - 3/4).
    """
    if not (0.0 <= p_win <= 1.0):
        raise ValueError(f"p_win must be in [0, 1], got {p_win!r}")
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    if p_win == 0.0 or p_win == 1.0:
        return math.inf if p_win > 0.75 else -math.inf
    return (p_win - 0.75) / math.sqrt(p_win * (1.0 - p_win) / n)


def min_entropy_rate(s: float) -> float:
    """Certified min-entropy per bit at correlation value s.

    Identically 0 for |s| <= 2, increasing to 1 at |s| = 2*sqrt(2).
    Values beyond the quantum bound are a domain error.
    """
    if abs(s) > TSIRELSON_S:
        raise ValueError(
            f"|s| = {abs(s)!r} exceeds the quantum bound {TSIRELSON_S!r}")
    inner = max(0.0, 2.0 - 0.25 * s * s)
    return max(0.0, 1.0 - math.log2(1.0 + math.sqrt(inner)))


@dataclass(frozen=True)
class Certificate:
    """Certification outcome for one experiment."""

    p_win: float | None
    n: int
    s: float | None
    z: float | None
    min_entropy_rate: float | None
    verdict: Verdict
    threshold_z: float

    def __post_init__(self):
        if self.p_win is not None:
            want = s_value(self.p_win)
            if abs(self.s - want) > 1e-12:
                raise ValueError(f"s = {self.s!r} inconsistent with p_win (want {want!r})")

    def to_json_obj(self) -> dict[str, Any]:
        return {
            "p_win": self.p_win,
            "n": self.n,
            "s": self.s,
            "z": self.z,
            "min_entropy_rate": self.min_entropy_rate,
            "verdict": self.verdict.value,
            "threshold_z": self.threshold_z,
        }

    @classmethod
    def from_json_obj(cls, obj: Mapping[str, Any]) -> "Certificate":
        def _num(v: Any) -> float | None:
            if v is None:
                return None
            if v == "inf":
                return math.inf
            if v == "-inf":
                return -math.inf
            return float(v)

        return cls(
            p_win=_num(obj["p_win"]),
            n=int(obj["n"]),
            s=_num(obj["s"]),
            z=_num(obj["z"]),
            min_entropy_rate=_num(obj["min_entropy_rate"]),
            verdict=Verdict(obj["verdict"]),
            threshold_z=float(obj["threshold_z"]),
        )


def certify_pooled(p_win: float, n: int,
                   threshold_z: float = DEFAULT_THRESHOLD_Z) -> Certificate:
    """Certificate from an already-pooled win probability."""
    if n < 1:
        return Certificate(p_win=None, n=0, s=None, z=None, min_entropy_rate=None,
                           verdict=Verdict.INSUFFICIENT_DATA, threshold_z=threshold_z)
    s = s_value(p_win)
    z = violation_significance(p_win, n)
    # sampling noise can push s past the quantum bound, and losing runs
    # drive it negative; the rate only certifies anything on (2, 2*sqrt(2)],
    # so it is evaluated with s clipped into [0, 2*sqrt(2)]
    rate = min_entropy_rate(min(max(s, 0.0), TSIRELSON_S))
    verdict = (Verdict.CERTIFIED if z >= threshold_z and s > CLASSICAL_S
               else Verdict.NOT_VIOLATED)
    return Certificate(p_win=p_win, n=n, s=s, z=z, min_entropy_rate=rate,
                       verdict=verdict, threshold_z=threshold_z)


def certify(experiment: ExperimentResult,
            threshold_z: float = DEFAULT_THRESHOLD_Z) -> Certificate:
    """Pool all shots of an experiment and certify the result."""
    n = experiment.total_shots()
    if n < 1:
        return certify_pooled(0.0, 0, threshold_z)
    return certify_pooled(experiment.pooled_win_fraction(), n, threshold_z)
