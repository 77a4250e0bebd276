"""The two-player binary nonlocal game and strategies for it.

Referee draws inputs x, y in {0,1}; players answer a, b; they win iff
a XOR b = x AND y.  Deterministic classical strategies are exhaustively
enumerable (16 of them) and top out at 3/4 exactly.  The entangled
strategy prepares (|00> + |11>)/sqrt(2) and rotates each side by twice
its planar measurement angle, which makes P(a = b) = cos^2(alpha - beta)
for effective angles alpha, beta.  With the standard angle table every
input pair wins with probability cos^2(pi/8).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from itertools import product
from typing import Iterable, Sequence

import numpy as np

from .rng import BitSource, SeededBitSource, derive_seed
from .simulator import (
    CountsRecord,
    Gate,
    OutcomeDistribution,
    StateVector,
    apply_circuit,
    depolarize,
    new_state,
    probabilities,
    record_from_indices,
    sample_indices,
)

_ANGLE_TOL = 1e-12

# relative planar angles that define the optimal measurement layout
_REL_NEAR = math.pi / 8
_REL_FAR = 3 * math.pi / 8


class ConfigError(ValueError):
    """An experiment configuration violates a stated assumption."""


@dataclass(frozen=True)
class GameSetting:
    """One referee input pair."""

    x: int
    y: int

    def __post_init__(self):
        if self.x not in (0, 1) or self.y not in (0, 1):
            raise ValueError(f"inputs must be bits, got x={self.x!r} y={self.y!r}")


ALL_SETTINGS = tuple(GameSetting(x, y) for x, y in product((0, 1), repeat=2))


def win_condition(setting: GameSetting, a: int, b: int) -> bool:
    """a XOR b must equal x AND y."""
    if a not in (0, 1) or b not in (0, 1):
        raise ValueError(f"answers must be bits, got a={a!r} b={b!r}")
    return (a ^ b) == (setting.x & setting.y)


# ============================================================
# classical strategies
# ============================================================

@dataclass(frozen=True)
class ClassicalStrategy:
    """Deterministic answer tables: a_table[x] and b_table[y]."""

    a_table: tuple[int, int]
    b_table: tuple[int, int]

    def __post_init__(self):
        for v in (*self.a_table, *self.b_table):
            if v not in (0, 1):
                raise ValueError("answer tables must contain bits")


def all_classical_strategies() -> list[ClassicalStrategy]:
    """All 16 deterministic strategies."""
    bits = (0, 1)
    return [
        ClassicalStrategy((a0, a1), (b0, b1))
        for a0, a1, b0, b1 in product(bits, bits, bits, bits)
    ]


def play_classical_round(setting: GameSetting, strategy: ClassicalStrategy) -> bool:
    return win_condition(setting, strategy.a_table[setting.x], strategy.b_table[setting.y])


def classical_win_value(strategy: ClassicalStrategy) -> Fraction:
    """Win probability under uniform inputs, as an exact rational."""
    wins = sum(play_classical_round(s, strategy) for s in ALL_SETTINGS)
    return Fraction(wins, len(ALL_SETTINGS))


def best_classical_win_probability() -> Fraction:
    """Exact ceiling over all deterministic strategies: 3/4."""
    return max(classical_win_value(s) for s in all_classical_strategies())


# ============================================================
# the entangled strategy
# ============================================================

@dataclass(frozen=True)
class QuantumStrategy:
    """Planar measurement angles per input, plus a free global offset.

    The relative layout is fixed: the three winning-aligned pairs sit
    pi/8 apart and the (1,1) pair 3*pi/8 apart.  A global offset shifts
    every angle together and cancels in all win probabilities.
    """

    alice_angles: tuple[float, float] = (0.0, math.pi / 4)
    bob_angles: tuple[float, float] = (math.pi / 8, -math.pi / 8)
    global_offset: float = 0.0

    def __post_init__(self):
        a0, a1 = self.alice_angles
        b0, b1 = self.bob_angles
        checks = (
            (abs(a0 - b0), _REL_NEAR),
            (abs(a1 - b0), _REL_NEAR),
            (abs(a0 - b1), _REL_NEAR),
            (abs(a1 - b1), _REL_FAR),
        )
        for got, want in checks:
            if abs(got - want) > _ANGLE_TOL:
                raise ValueError(
                    f"angle layout broken: relative angle {got!r}, expected {want!r}")

    def angle_a(self, x: int) -> float:
        return self.alice_angles[x] + self.global_offset

    def angle_b(self, y: int) -> float:
        return self.bob_angles[y] + self.global_offset


def compile_round(setting: GameSetting, strategy: QuantumStrategy) -> list[Gate]:
    """Gate list for one round: Bell pair, then each side's basis rotation.

    Planar angles double on the sphere, so each side applies Ry(2*angle).
    Exact zero rotations are omitted.
    """
    gates = [Gate.h(0), Gate.cnot(0, 1)]
    theta_a = 2.0 * strategy.angle_a(setting.x)
    theta_b = 2.0 * strategy.angle_b(setting.y)
    if theta_a != 0.0:
        gates.append(Gate.ry(theta_a, 0))
    if theta_b != 0.0:
        gates.append(Gate.ry(theta_b, 1))
    return gates


def round_state(setting: GameSetting, strategy: QuantumStrategy) -> StateVector:
    return apply_circuit(new_state(2), compile_round(setting, strategy))


def round_distribution(setting: GameSetting, strategy: QuantumStrategy,
                       lam: float = 0.0) -> OutcomeDistribution:
    """Outcome distribution of one round, optionally depolarized."""
    dist = probabilities(round_state(setting, strategy))
    if lam != 0.0:
        dist = depolarize(dist, lam)
    return dist


def win_probability_from_dist(setting: GameSetting, dist: OutcomeDistribution) -> float:
    """P(win) for a 2-qubit round distribution (outcomes 00,01,10,11)."""
    p = dist.probs
    same = float(p[0] + p[3])
    return 1.0 - same if setting.x & setting.y else same


def analytic_win_probability(setting: GameSetting,
                             strategy: QuantumStrategy | None = None,
                             lam: float = 0.0) -> float:
    """Exact win probability of the entangled strategy at noise level lam."""
    strategy = strategy or QuantumStrategy()
    return win_probability_from_dist(setting, round_distribution(setting, strategy, lam))


# ============================================================
# rounds and experiments
# ============================================================

@dataclass(frozen=True)
class RoundResult:
    """Tallies of one round; counts carries the full record when kept."""

    setting: GameSetting
    shots: int
    same_count: int
    diff_count: int
    win_fraction: float
    counts: CountsRecord | None = None

    def __post_init__(self):
        if self.same_count + self.diff_count != self.shots:
            raise ValueError("same_count + diff_count must equal shots")
        if self.shots > 0 and self.win_fraction != self.wins / self.shots:
            raise ValueError("win_fraction does not match the stored tallies")

    @property
    def wins(self) -> int:
        """Winning shots: different bits at (1,1), matching bits otherwise."""
        return self.diff_count if self.setting.x & self.setting.y else self.same_count


def result_from_indices(setting: GameSetting, idx: np.ndarray, *,
                        counts: CountsRecord | None = None) -> RoundResult:
    """Tally sampled 2-qubit outcome indices into a RoundResult."""
    shots = int(idx.size)
    same = int(np.count_nonzero((idx == 0) | (idx == 3)))
    diff = shots - same
    wins = diff if setting.x & setting.y else same
    return RoundResult(setting=setting, shots=shots, same_count=same,
                       diff_count=diff, win_fraction=wins / shots, counts=counts)


def play_round(setting: GameSetting, strategy: QuantumStrategy, shots: int,
               lam: float = 0.0, rng_seed: int = 0, *,
               keep_counts: bool = True, keep_memory: bool = False) -> RoundResult:
    """Compile, simulate, depolarize, and sample one round."""
    if shots < 1:
        raise ValueError(f"shots must be >= 1, got {shots}")
    dist = round_distribution(setting, strategy, lam)
    idx = sample_indices(dist, shots, rng_seed)
    rec = record_from_indices(idx, 2, memory=keep_memory) if keep_counts else None
    return result_from_indices(setting, idx, counts=rec)


def referee_inputs(rounds: int, source_a: BitSource, source_b: BitSource) -> list[GameSetting]:
    """Draw x from source_a and y from source_b, one pair per round.

    The two sources must be distinct and independently seeded; reusing
    one source (or one seed) for both sides is a ConfigError.
    """
    if rounds < 1:
        raise ValueError(f"rounds must be >= 1, got {rounds}")
    if source_a is source_b or source_a.identity == source_b.identity:
        raise ConfigError("input sources must be independent (identical source given)")
    xs = source_a.take(rounds)
    ys = source_b.take(rounds)
    return [GameSetting(int(x), int(y)) for x, y in zip(xs, ys)]


@dataclass(frozen=True)
class ExperimentResult:
    """Per-round results plus summary statistics over win fractions."""

    rounds: tuple[RoundResult, ...]
    p_min: float
    p_avg: float
    p_max: float
    sigma: float

    @staticmethod
    def compute_stats(fractions: Sequence[float]) -> tuple[float, float, float, float]:
        arr = np.asarray(fractions, dtype=np.float64)
        return (float(arr.min()), float(arr.mean()), float(arr.max()),
                float(arr.std(ddof=0)))

    @classmethod
    def from_rounds(cls, rounds: Iterable[RoundResult]) -> "ExperimentResult":
        rounds = tuple(rounds)
        if not rounds:
            return cls(rounds=(), p_min=0.0, p_avg=0.0, p_max=0.0, sigma=0.0)
        stats = cls.compute_stats([r.win_fraction for r in rounds])
        return cls(rounds, *stats)

    def total_shots(self) -> int:
        return sum(r.shots for r in self.rounds)

    def total_wins(self) -> int:
        return sum(r.wins for r in self.rounds)

    def pooled_win_fraction(self) -> float:
        total = self.total_shots()
        return self.total_wins() / total if total else 0.0


def run_experiment(rounds: int, shots: int, strategy: QuantumStrategy | None = None,
                   lam: float = 0.0, master_seed: int = 0, *,
                   settings: Sequence[GameSetting] | None = None,
                   keep_memory: bool = False) -> ExperimentResult:
    """Play `rounds` rounds at `shots` each, all derived from one master seed.

    Referee inputs come from two independently-derived streams; each round
    samples from its own derived seed, so any round replays in isolation.
    """
    if rounds < 1:
        raise ValueError(f"rounds must be >= 1, got {rounds}")
    if settings is None:
        settings = referee_inputs(
            rounds,
            SeededBitSource(derive_seed(master_seed, "alice-inputs")),
            SeededBitSource(derive_seed(master_seed, "bob-inputs")),
        )
    elif len(settings) != rounds:
        raise ValueError("settings list does not match the round count")
    strategy = strategy or QuantumStrategy()
    results = [
        play_round(s, strategy, shots, lam, derive_seed(master_seed, "round", i),
                   keep_memory=keep_memory)
        for i, s in enumerate(settings)
    ]
    return ExperimentResult.from_rounds(results)
