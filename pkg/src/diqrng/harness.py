"""End-to-end experiment orchestration.

Ties the pieces together: fit a depolarizing level to a device's published
average, play seeded or replayed rounds under explicit loophole controls,
certify the pooled statistics, hand back Alice's outcome bits as the
certified stream, and emit the standard report files.

Loophole posture (documented, not silently assumed):

* independent_inputs — x and y come from two independently seeded (or
  separately recorded) sources; turning this off reuses one stream for
  both sides and is flagged in the summary.
* fresh_state_per_round — every round derives its own sampling stream
  from (master_seed, round index), so no round's data feeds another;
  turning this off threads one stream through all rounds.
* detection_efficiency — each party's detector fires per shot with
  probability eta; only coincident shots enter the tallies, and
  report_all_events additionally records win fractions with missed
  shots counted as losses.
* Spacelike separation cannot hold between two software-simulated
  parties; that loophole stays open here by construction.
"""

from __future__ import annotations

import csv
import io as _io
import json
import math
import os
from dataclasses import dataclass, field
from importlib import resources
from typing import Any, Mapping, NamedTuple, Sequence

import numpy as np

from .certify import DEFAULT_THRESHOLD_Z, Certificate, certify
from .game import (
    ConfigError,
    ExperimentResult,
    GameSetting,
    QuantumStrategy,
    RoundResult,
    referee_inputs,
    result_from_indices,
    round_distribution,
)
from .io import atomic_write_text, canonical_json, round_sig
from .randomness import BitStream
from .rng import RecordedBitSource, SeededBitSource, SourceDepleted, derive_seed, make_rng
from .simulator import (
    CountsRecord,
    DataFormatError,
    DataIntegrityError,
    record_from_indices,
    sample_indices,
)

IDEAL_WIN_PROBABILITY = math.cos(math.pi / 8) ** 2
DEFAULT_ROUNDS = 100
DEFAULT_SHOTS = 1000
FORMAT_VERSION = 1

ROUNDS_CSV_FIELDS = ("round_index", "x", "y", "same_count", "diff_count", "win_fraction")


class UnfittableTargetError(ValueError):
    """Target average outside [1/2, cos^2(pi/8)] has no depolarizing fit."""


def fit_lambda(target_win_probability: float) -> float:
    """Depolarizing level whose analytic win probability equals the target.

    Closed form: (ideal - target) / (ideal - 1/2), the inverse of the
    affine noise response, so round-tripping through the model is exact.
    """
    if not (0.5 <= target_win_probability <= IDEAL_WIN_PROBABILITY):
        raise UnfittableTargetError(
            f"target {target_win_probability!r} outside "
            f"[0.5, {IDEAL_WIN_PROBABILITY!r}]")
    return (IDEAL_WIN_PROBABILITY - target_win_probability) / (IDEAL_WIN_PROBABILITY - 0.5)


# ============================================================
# device profiles
# ============================================================

@dataclass(frozen=True)
class DeviceProfile:
    """A published device average plus its fitted noise level."""

    name: str
    avg_win_target: float
    fitted_lambda: float
    metadata: dict[str, Any] = field(default_factory=dict)


def load_device_profiles(path: str | os.PathLike | None = None) -> list[DeviceProfile]:
    """Load the bundled profile table (or one from an explicit path)."""
    if path is None:
        text = resources.files("diqrng.data").joinpath("device_profiles.json").read_text("utf-8")
    else:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise DataFormatError(f"profile file is not valid JSON: {exc}") from exc
    if not isinstance(obj, Mapping) or obj.get("format_version") != FORMAT_VERSION:
        raise DataFormatError("profile file missing a supported format_version")
    profiles = []
    for row in obj.get("profiles", []):
        try:
            name = row["name"]
            target = float(row["avg_win_target"])
        except (KeyError, TypeError, ValueError) as exc:
            raise DataFormatError(f"malformed profile row: {row!r}") from exc
        profiles.append(DeviceProfile(
            name=name,
            avg_win_target=target,
            fitted_lambda=fit_lambda(target),
            metadata=dict(row.get("metadata") or {}),
        ))
    if not profiles:
        raise DataFormatError("profile file holds no profiles")
    return profiles


def get_device_profile(name: str, path: str | os.PathLike | None = None) -> DeviceProfile:
    profiles = load_device_profiles(path)
    for p in profiles:
        if p.name == name:
            return p
    known = ", ".join(p.name for p in profiles)
    raise KeyError(f"no device profile named {name!r}; known: {known}")


# ============================================================
# configuration
# ============================================================

@dataclass(frozen=True)
class LoopholeConfig:
    """Explicit switches for the addressable loopholes."""

    independent_inputs: bool = True
    fresh_state_per_round: bool = True
    detection_efficiency: float = 1.0
    report_all_events: bool = False

    def __post_init__(self):
        eta = self.detection_efficiency
        if not (0.0 < eta <= 1.0):
            raise ConfigError(f"detection_efficiency must be in (0, 1], got {eta!r}")


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything needed to reproduce a run, serializable as JSON."""

    rounds: int = DEFAULT_ROUNDS
    shots: int = DEFAULT_SHOTS
    lam: float = 0.0
    master_seed: int = 0
    strategy: QuantumStrategy = field(default_factory=QuantumStrategy)
    input_mode: str = "seeded"
    replay_x: tuple[str, ...] = ()
    replay_y: tuple[str, ...] = ()
    threshold_z: float = DEFAULT_THRESHOLD_Z

    def __post_init__(self):
        if self.rounds < 1:
            raise ConfigError(f"rounds must be >= 1, got {self.rounds}")
        if self.shots < 1:
            raise ConfigError(f"shots must be >= 1, got {self.shots}")
        if not (0.0 <= self.lam <= 1.0):
            raise ConfigError(f"lambda must be in [0, 1], got {self.lam!r}")
        if self.input_mode not in ("seeded", "replay"):
            raise ConfigError(f"input_mode must be 'seeded' or 'replay', got {self.input_mode!r}")
        if self.input_mode == "replay" and not (self.replay_x and self.replay_y):
            raise ConfigError("replay mode needs replay_x and replay_y file lists")

    def to_json_obj(self) -> dict[str, Any]:
        return {
            "format_version": FORMAT_VERSION,
            "rounds": self.rounds,
            "shots": self.shots,
            "lambda": self.lam,
            "master_seed": self.master_seed,
            "strategy": {
                "alice_angles": list(self.strategy.alice_angles),
                "bob_angles": list(self.strategy.bob_angles),
                "global_offset": self.strategy.global_offset,
            },
            "input_source": (
                {"mode": "seeded"} if self.input_mode == "seeded" else
                {"mode": "replay", "x_files": list(self.replay_x),
                 "y_files": list(self.replay_y)}
            ),
            "threshold_z": self.threshold_z,
        }

    @classmethod
    def from_json_obj(cls, obj: Mapping[str, Any]) -> "ExperimentConfig":
        if not isinstance(obj, Mapping):
            raise DataFormatError("experiment config must be a JSON object")
        if obj.get("format_version") != FORMAT_VERSION:
            raise DataFormatError("experiment config missing a supported format_version")
        strat = obj.get("strategy") or {}
        strategy = QuantumStrategy(
            alice_angles=tuple(strat.get("alice_angles", (0.0, math.pi / 4))),
            bob_angles=tuple(strat.get("bob_angles", (math.pi / 8, -math.pi / 8))),
            global_offset=float(strat.get("global_offset", 0.0)),
        )
        source = obj.get("input_source") or {"mode": "seeded"}
        try:
            return cls(
                rounds=int(obj["rounds"]),
                shots=int(obj["shots"]),
                lam=float(obj.get("lambda", 0.0)),
                master_seed=int(obj.get("master_seed", 0)),
                strategy=strategy,
                input_mode=source.get("mode", "seeded"),
                replay_x=tuple(source.get("x_files", ())),
                replay_y=tuple(source.get("y_files", ())),
                threshold_z=float(obj.get("threshold_z", DEFAULT_THRESHOLD_Z)),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise DataFormatError(f"malformed experiment config: {exc}") from exc

    @classmethod
    def from_file(cls, path: str | os.PathLike) -> "ExperimentConfig":
        with open(path, "r", encoding="utf-8") as fh:
            try:
                obj = json.load(fh)
            except json.JSONDecodeError as exc:
                raise DataFormatError(f"config file is not valid JSON: {exc}") from exc
        return cls.from_json_obj(obj)


# ============================================================
# replay backend
# ============================================================

def load_counts_record(path: str | os.PathLike) -> CountsRecord:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            obj = json.load(fh)
        except json.JSONDecodeError as exc:
            raise DataFormatError(f"{path}: not valid JSON: {exc}") from exc
    return CountsRecord.from_json_obj(obj)


def save_counts_record(path: str | os.PathLike, record: CountsRecord) -> None:
    atomic_write_text(path, canonical_json(record.to_json_obj(), precise=True) + "\n")


def replay_backend(paths: Sequence[str | os.PathLike]) -> RecordedBitSource:
    """Bit source replaying recorded per-shot outcomes in file order.

    Each file must be a CountsRecord with its memory list present (the
    counts alone cannot restore shot order).  Every outcome contributes
    its bits most-significant-qubit first; exhaustion raises
    SourceDepleted rather than wrapping around.
    """
    if not paths:
        raise ConfigError("replay needs at least one record file")
    chunks = []
    for path in paths:
        rec = load_counts_record(path)
        if rec.memory is None:
            raise DataFormatError(
                f"{path}: record has no memory list; shot order is required for replay")
        joined = "".join(rec.memory)
        chunks.append(np.frombuffer(joined.encode("ascii"), dtype=np.uint8) - ord("0"))
    bits = np.concatenate(chunks)
    identity = ("replay", tuple(str(os.fspath(p)) for p in paths))
    return RecordedBitSource(bits, identity)


# ============================================================
# certified runs
# ============================================================

class CertifiedRun(NamedTuple):
    experiment: ExperimentResult
    certificate: Certificate
    alice_bits: BitStream


def _draw_settings(config: ExperimentConfig, loopholes: LoopholeConfig) -> list[GameSetting]:
    if config.input_mode == "replay":
        src_x = replay_backend(config.replay_x)
        src_y = replay_backend(config.replay_y)
    else:
        src_x = SeededBitSource(derive_seed(config.master_seed, "alice-inputs"))
        src_y = SeededBitSource(derive_seed(config.master_seed, "bob-inputs"))
    if loopholes.independent_inputs:
        return referee_inputs(config.rounds, src_x, src_y)
    # loophole left open on purpose: one stream feeds both sides
    shared = src_x
    xs = shared.take(config.rounds)
    ys = shared.take(config.rounds)
    return [GameSetting(int(x), int(y)) for x, y in zip(xs, ys)]


def run_certified_experiment(config: ExperimentConfig,
                             loopholes: LoopholeConfig | None = None) -> CertifiedRun:
    """Play, certify, and collect Alice's outcome bits for one config."""
    loopholes = loopholes or LoopholeConfig()
    settings = _draw_settings(config, loopholes)
    eta = loopholes.detection_efficiency
    shared_rng = (None if loopholes.fresh_state_per_round
                  else make_rng(derive_seed(config.master_seed, "shared-stream")))
    rounds: list[RoundResult] = []
    alice_chunks: list[np.ndarray] = []
    for i, setting in enumerate(settings):
        dist = round_distribution(setting, config.strategy, config.lam)
        rng = (make_rng(derive_seed(config.master_seed, "round", i))
               if shared_rng is None else shared_rng)
        idx = sample_indices(dist, config.shots, rng=rng)
        meta: dict[str, Any] = {}
        if eta < 1.0:
            detected_a = rng.random(config.shots) < eta
            detected_b = rng.random(config.shots) < eta
            coincident = detected_a & detected_b
            kept = idx[coincident]
            meta["total_shots"] = config.shots
            meta["detected_shots"] = int(kept.size)
            meta["detection_efficiency"] = eta
            if loopholes.report_all_events:
                # ground truth over every emitted pair, detected or not --
                # the quantity a real experiment cannot observe
                same_all = int(np.count_nonzero((idx == 0) | (idx == 3)))
                wins_all = (idx.size - same_all) if setting.x & setting.y else same_all
                meta["all_event_win_fraction"] = wins_all / config.shots
        else:
            kept = idx
        if kept.size == 0:
            # every shot lost to the detectors; keep the round with no tallies
            rounds.append(RoundResult(setting=setting, shots=0, same_count=0,
                                      diff_count=0, win_fraction=0.0, counts=None))
            continue
        rec = record_from_indices(kept, 2, metadata=meta)
        rounds.append(result_from_indices(setting, kept, counts=rec))
        alice_chunks.append(((kept >> 1) & 1).astype(np.uint8))
    experiment = ExperimentResult.from_rounds(rounds)
    certificate = certify(experiment, config.threshold_z)
    alice = (np.concatenate(alice_chunks) if alice_chunks
             else np.zeros(0, dtype=np.uint8))
    return CertifiedRun(experiment, certificate, BitStream(alice, "chsh"))


def run_device_profile(profile: DeviceProfile, rounds: int = DEFAULT_ROUNDS,
                       shots: int = DEFAULT_SHOTS, master_seed: int = 0,
                       loopholes: LoopholeConfig | None = None) -> CertifiedRun:
    """Certified run at the noise level fitted to a device's published average."""
    config = ExperimentConfig(rounds=rounds, shots=shots, lam=profile.fitted_lambda,
                              master_seed=master_seed)
    return run_certified_experiment(config, loopholes)


# ============================================================
# rounds table and report files
# ============================================================

def rounds_csv_text(experiment: ExperimentResult) -> str:
    buf = _io.StringIO()
    buf.write(f"# format_version={FORMAT_VERSION}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(ROUNDS_CSV_FIELDS)
    for i, r in enumerate(experiment.rounds):
        writer.writerow([i, r.setting.x, r.setting.y, r.same_count, r.diff_count,
                         repr(r.win_fraction)])
    return buf.getvalue()


def write_rounds_csv(path: str | os.PathLike, experiment: ExperimentResult) -> None:
    atomic_write_text(path, rounds_csv_text(experiment))


def read_rounds_csv(path: str | os.PathLike) -> ExperimentResult:
    """Rebuild an ExperimentResult (without counts) from a rounds table."""
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln for ln in fh.read().splitlines() if ln.strip()]
    if not lines or not lines[0].startswith(f"# format_version={FORMAT_VERSION}"):
        raise DataFormatError(f"{path}: missing format_version header")
    reader = csv.reader(lines[1:])
    header = next(reader, None)
    if header != list(ROUNDS_CSV_FIELDS):
        raise DataFormatError(f"{path}: unexpected header {header!r}")
    rounds = []
    for row in reader:
        if len(row) != len(ROUNDS_CSV_FIELDS):
            raise DataFormatError(f"{path}: malformed row {row!r}")
        try:
            _, x, y, same, diff, stored = row
            setting = GameSetting(int(x), int(y))
            same_i, diff_i = int(same), int(diff)
            stored_f = float(stored)
        except ValueError as exc:
            raise DataFormatError(f"{path}: malformed row {row!r}: {exc}") from exc
        shots = same_i + diff_i
        wins = diff_i if setting.x & setting.y else same_i
        fraction = wins / shots if shots else 0.0
        if abs(fraction - stored_f) > 1e-9:
            raise DataIntegrityError(
                f"{path}: stored win_fraction {stored_f!r} disagrees with tallies")
        rounds.append(RoundResult(setting=setting, shots=shots, same_count=same_i,
                                  diff_count=diff_i, win_fraction=fraction))
    if not rounds:
        raise DataFormatError(f"{path}: no data rows")
    return ExperimentResult.from_rounds(rounds)


def _gaussian_kde(values: np.ndarray, grid: np.ndarray) -> np.ndarray:
    """Plain Gaussian KDE with a floored Silverman bandwidth.

    The floor keeps single-round and zero-variance inputs finite.
    """
    n = values.size
    sigma = float(values.std(ddof=0))
    h = max(1.06 * sigma * n ** (-0.2), 1e-3)
    z = (grid[:, None] - values[None, :]) / h
    dens = np.exp(-0.5 * z * z).sum(axis=1) / (n * h * math.sqrt(2.0 * math.pi))
    return dens


def emit_reports(experiment: ExperimentResult, out_dir: str | os.PathLike,
                 label: str = "experiment",
                 extra_summary: Mapping[str, Any] | None = None) -> dict[str, str]:
    """Write running_avg.csv, hist.csv, density.csv, and summary.json.

    Returns a name -> path map.  All floats are written at 6 significant
    digits; every file carries a format_version marker.
    """
    out_dir = os.fspath(out_dir)
    os.makedirs(out_dir, exist_ok=True)
    fractions = np.array([r.win_fraction for r in experiment.rounds], dtype=np.float64)
    if fractions.size == 0:
        raise ValueError("cannot report on an experiment with no rounds")

    def fmt(x: float) -> str:
        return f"{round_sig(float(x)):g}"

    paths = {}

    running = np.cumsum(fractions) / np.arange(1, fractions.size + 1)
    lines = [f"# format_version={FORMAT_VERSION}", "round_index,win_fraction,running_avg"]
    lines += [f"{i},{fmt(f)},{fmt(r)}" for i, (f, r) in enumerate(zip(fractions, running))]
    paths["running_avg"] = os.path.join(out_dir, "running_avg.csv")
    atomic_write_text(paths["running_avg"], "\n".join(lines) + "\n")

    edges = np.linspace(0.0, 1.0, 101)
    counts, _ = np.histogram(fractions, bins=edges)
    lines = [f"# format_version={FORMAT_VERSION}", "bin_left,bin_right,count"]
    lines += [f"{fmt(edges[i])},{fmt(edges[i + 1])},{int(c)}" for i, c in enumerate(counts)]
    paths["hist"] = os.path.join(out_dir, "hist.csv")
    atomic_write_text(paths["hist"], "\n".join(lines) + "\n")

    grid = np.linspace(0.0, 1.0, 1001)
    dens = _gaussian_kde(fractions, grid)
    lines = [f"# format_version={FORMAT_VERSION}", "win_fraction,density"]
    lines += [f"{fmt(g)},{fmt(d)}" for g, d in zip(grid, dens)]
    paths["density"] = os.path.join(out_dir, "density.csv")
    atomic_write_text(paths["density"], "\n".join(lines) + "\n")

    summary = {
        "format_version": FORMAT_VERSION,
        "label": label,
        "rounds": len(experiment.rounds),
        "total_shots": experiment.total_shots(),
        "p_min": experiment.p_min,
        "p_avg": experiment.p_avg,
        "p_max": experiment.p_max,
        "sigma": experiment.sigma,
        "pooled_win_fraction": experiment.pooled_win_fraction(),
    }
    if extra_summary:
        summary.update(dict(extra_summary))
    paths["summary"] = os.path.join(out_dir, "summary.json")
    atomic_write_text(paths["summary"], canonical_json(summary) + "\n")
    return paths
