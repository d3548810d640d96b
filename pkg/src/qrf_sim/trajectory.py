"""Sequential evolution of the frame: averaged runs, seeded measurement
records and the drift-correction strategies.

Trajectories are reproducible by construction: every stochastic run owns a
counter-based generator keyed by its seed (the algorithm identifier below is
recorded in every output file), so identical seeds give bit-identical
records regardless of how runs are scheduled across threads.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .channels import (
    OUTCOME_EPS,
    average_channel,
    hygiene,
    outcome_probabilities,
    selective_unnormalized,
    unitary_channel,
)
from .metrics import FrameSummary, mean_angular_momentum, p_succ, summarize_frame
from .spin import SpinOperators, as_polarization

RNG_ALGORITHM = "numpy-philox4x64"


class NumericalInvariantError(RuntimeError):
    """A state invariant broke down during a run (positivity, finiteness)."""


class LifetimeCapExceeded(RuntimeError):
    def __init__(self, cap: int):
        super().__init__(f"p_succ did not cross the threshold within {cap} steps")
        self.cap = cap


# ---------------------------------------------------------------------------
# schedule steps and correction strategies
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MeasureStep:
    z: float
    corrective: bool = False


@dataclass(frozen=True)
class UnitaryStep:
    z: float
    gamma: float
    corrective: bool = False

    def __post_init__(self):
        if not np.isfinite(self.gamma):
            raise ValueError(f"gamma must be finite, got {self.gamma!r}")


Schedule = Sequence["MeasureStep | UnitaryStep"]


def validate_schedule(schedule: Schedule) -> None:
    if len(schedule) == 0:
        raise ValueError("schedule must be nonempty")
    for step in schedule:
        if not isinstance(step, (MeasureStep, UnitaryStep)):
            raise TypeError(f"unknown step kind {step!r}")


def schedule_measurements(n: int, z: float) -> list:
    return [MeasureStep(z) for _ in range(n)]


def schedule_unitaries(n: int, z: float, gamma: float) -> list:
    return [UnitaryStep(z, gamma) for _ in range(n)]


def schedule_corrected_every_k(n: int, z: float, k: int, gamma: float = np.pi) -> list:
    """n measurements of the primary source with an antipolarized unitary
    kick inserted after every k-th measurement."""
    steps: list = []
    for i in range(n):
        steps.append(MeasureStep(z))
        if (i + 1) % k == 0:
            steps.append(UnitaryStep(-z, gamma, corrective=True))
    return steps


def schedule_alternating(n: int, z: float) -> list:
    """n primary measurements, each followed by an antipolarized one."""
    steps: list = []
    for _ in range(n):
        steps.append(MeasureStep(z))
        steps.append(MeasureStep(-z, corrective=True))
    return steps


@dataclass(frozen=True)
class AlternatingAntipolarized:
    """Follow every measurement with a measurement of an antipolarized source."""


@dataclass(frozen=True)
class UnitaryEveryK:
    """Antipolarized unitary kick (angle gamma) after every k-th measurement.

    Deliberately takes no inclination input: the gamma = pi kick undoes the
    mean drift of two measurements without knowing the relative angle.
    """

    k: int
    gamma: float = np.pi

    def __post_init__(self):
        if self.k < 1:
            raise ValueError(f"k must be >= 1, got {self.k!r}")
        if not np.isfinite(self.gamma):
            raise ValueError(f"gamma must be finite, got {self.gamma!r}")


@dataclass(frozen=True)
class UnitaryAfterEachPlus:
    """Antipolarized unitary kick after each + outcome."""

    gamma: float = np.pi

    def __post_init__(self):
        if not np.isfinite(self.gamma):
            raise ValueError(f"gamma must be finite, got {self.gamma!r}")


@dataclass(frozen=True)
class ConditionalTuned:
    """Outcome-by-outcome correction tuned to a known inclination.

    After every measurement the source sign and kick angle minimizing the
    inclination error against the tracked target are applied; the target
    defaults to the initial inclination of the run.
    """

    theta_known: float | None = None


@dataclass(frozen=True)
class CorrectionEvent:
    measurement_index: int
    kind: str
    gamma: float | None = None
    source_z: float | None = None
    residual: float | None = None
    outcome: int | None = None


@dataclass(frozen=True)
class CorrectionChoice:
    gamma: float
    source_sign: int
    corrected_rho: np.ndarray
    residual: float


@dataclass
class TrajectoryRecord:
    """One seeded measurement record: outcome string, per-step summaries and
    success probabilities, and the corrections that were applied."""

    seed: int
    outcomes: np.ndarray
    outcome_is_corrective: np.ndarray
    snapshots: list[FrameSummary]
    p_succ_series: np.ndarray
    correction_events: list[CorrectionEvent]
    final_state: np.ndarray
    rng_algorithm: str = RNG_ALGORITHM

    @property
    def outcome_string(self) -> str:
        return "".join("+" if o > 0 else "-" for o in self.outcomes)


# ---------------------------------------------------------------------------
# averaged evolution
# ---------------------------------------------------------------------------

@dataclass
class AverageRun:
    step_indices: np.ndarray
    summaries: list[FrameSummary]
    p_succ_series: np.ndarray
    final_state: np.ndarray


def _checked(rho: np.ndarray) -> np.ndarray:
    if not np.all(np.isfinite(rho)):
        raise NumericalInvariantError("state left the finite domain during the run")
    return hygiene(rho)


def apply_step(rho: np.ndarray, step, ops: SpinOperators) -> np.ndarray:
    """One average-map step of a schedule."""
    if isinstance(step, MeasureStep):
        return average_channel(rho, step.z, ops)
    if isinstance(step, UnitaryStep):
        return unitary_channel(rho, step.z, ops, step.gamma)
    raise TypeError(f"unknown step kind {step!r}")


def run_average(rho0: np.ndarray, schedule: Schedule, ops: SpinOperators,
                record_every: int = 1, n_hat: np.ndarray | None = None) -> AverageRun:
    """Deterministic evolution under the average maps of a schedule.

    Snapshots (frame summary and p_succ against n_hat, defaulting to the
    initial direction) are recorded every record_every steps and always for
    the initial and final states.
    """
    validate_schedule(schedule)
    if record_every < 1:
        raise ValueError("record_every must be >= 1")
    summary0 = summarize_frame(rho0, ops)
    if n_hat is None:
        n_hat = summary0.mean_L / np.linalg.norm(summary0.mean_L)
    indices = [0]
    summaries = [summary0]
    probs = [p_succ(rho0, ops, n_hat)]
    cur = rho0
    for i, step in enumerate(schedule, start=1):
        cur = _checked(apply_step(cur, step, ops))
        if i % record_every == 0 or i == len(schedule):
            indices.append(i)
            summaries.append(summarize_frame(cur, ops))
            probs.append(p_succ(cur, ops, n_hat))
    return AverageRun(np.array(indices), summaries, np.array(probs), cur)


def average_lifetime_stepper(rho0: np.ndarray, q, ops: SpinOperators, threshold: float,
                             n_hat: np.ndarray, strategy, step_cap: int) -> int:
    """First measurement count at which p_succ drops below the threshold.

    Correction steps are applied but not counted on the measurement axis.
    Only outcome-independent strategies make sense under average evolution.
    """
    z = as_polarization(q)
    if not (strategy is None or isinstance(strategy, (UnitaryEveryK, AlternatingAntipolarized))):
        raise ValueError(f"strategy {strategy!r} is outcome-dependent and has no average evolution")
    cur = rho0
    for n in range(1, step_cap + 1):
        cur = _checked(average_channel(cur, z, ops))
        if isinstance(strategy, AlternatingAntipolarized):
            cur = _checked(average_channel(cur, -z, ops))
        elif isinstance(strategy, UnitaryEveryK) and n % strategy.k == 0:
            cur = _checked(unitary_channel(cur, -z, ops, strategy.gamma))
        if p_succ(cur, ops, n_hat) < threshold:
            return n
    raise LifetimeCapExceeded(step_cap)


# ---------------------------------------------------------------------------
# conditional correction
# ---------------------------------------------------------------------------

_INVPHI = (np.sqrt(5.0) - 1.0) / 2.0


def _golden_minimize(f, a: float, b: float, tol: float):
    c, d = b - _INVPHI * (b - a), a + _INVPHI * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - _INVPHI * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INVPHI * (b - a)
            fd = f(d)
    x = 0.5 * (a + b)
    return x, f(x)


def conditional_correction_step(rho: np.ndarray, theta_known: float, outcome,
                                ops: SpinOperators, z_mag: float = 1.0,
                                gamma_tol: float = 1e-6) -> CorrectionChoice:
    """Best single unitary kick returning a post-measurement state to a known
    inclination.

    Scans both source signs with golden-section search over gamma in
    (0, 2pi), minimizing |theta_after - theta_known| of the exact channel.
    When the state is already on target nothing is applied (gamma = 0); when
    full correction is out of reach the best achievable kick is returned
    together with its residual.
    """
    if not 0.0 < theta_known < np.pi:
        raise ValueError(f"theta_known must lie in (0, pi), got {theta_known!r}")

    def inclination_error(state):
        v = mean_angular_momentum(state, ops)
        return abs(np.arctan2(v[0], v[2]) - theta_known)

    baseline = inclination_error(rho)
    if baseline <= 1e-12:
        return CorrectionChoice(0.0, +1, rho, baseline)
    best = CorrectionChoice(0.0, +1, rho, baseline)
    for sign in (+1, -1):
        def err(gamma):
            return inclination_error(unitary_channel(rho, sign * z_mag, ops, gamma))

        gamma, resid = _golden_minimize(err, 1e-9, 2.0 * np.pi - 1e-9, gamma_tol)
        if resid < best.residual:
            best = CorrectionChoice(
                float(gamma), sign, hygiene(unitary_channel(rho, sign * z_mag, ops, gamma)),
                float(resid),
            )
    return best


# ---------------------------------------------------------------------------
# stochastic trajectories
# ---------------------------------------------------------------------------

def _draw_outcome(rng, p_plus: float) -> int:
    if not np.isfinite(p_plus) or p_plus < -1e-9 or p_plus > 1.0 + 1e-9:
        raise NumericalInvariantError(f"outcome probability left [0, 1]: {p_plus!r}")
    u = rng.random()
    # near-certain branches are forced so conditioning stays well defined
    if p_plus < OUTCOME_EPS:
        return -1
    if p_plus > 1.0 - OUTCOME_EPS:
        return +1
    return +1 if u < p_plus else -1


def _measure(rng, rho, z, ops):
    p_plus, _ = outcome_probabilities(rho, z, ops)
    outcome = _draw_outcome(rng, p_plus)
    sigma = selective_unnormalized(rho, z, ops, outcome)
    p = sigma.trace().real
    if p <= 0.0:
        raise NumericalInvariantError(f"selected branch has nonpositive weight {p!r}")
    return outcome, _checked(sigma / p)


def run_stochastic(rho0: np.ndarray, n_measure: int, q, strategy, seed: int,
                   ops: SpinOperators) -> TrajectoryRecord:
    """One seeded measurement record.

    Outcomes are drawn from the exact finite-l probabilities and the matching
    selective channel is applied; the strategy inserts its corrective steps
    after each primary measurement.  Snapshots and p_succ (against the
    initial direction) are recorded per primary measurement, corrections
    included, matching the convention that corrective particles do not count
    on the measurement axis.
    """
    if n_measure < 1:
        raise ValueError("n_measure must be >= 1")
    z = as_polarization(q)
    rng = np.random.default_rng(np.random.Philox(key=seed))
    summary0 = summarize_frame(rho0, ops)
    v0 = summary0.mean_L
    n_hat = v0 / np.linalg.norm(v0)
    theta_target = summary0.theta
    if isinstance(strategy, ConditionalTuned) and strategy.theta_known is not None:
        theta_target = strategy.theta_known

    outcomes: list[int] = []
    corrective_flags: list[bool] = []
    snapshots = [summary0]
    probs = [p_succ(rho0, ops, n_hat)]
    events: list[CorrectionEvent] = []
    cur = rho0
    for i in range(n_measure):
        outcome, cur = _measure(rng, cur, z, ops)
        outcomes.append(outcome)
        corrective_flags.append(False)

        if isinstance(strategy, AlternatingAntipolarized):
            bar_outcome, cur = _measure(rng, cur, -z, ops)
            outcomes.append(bar_outcome)
            corrective_flags.append(True)
            events.append(CorrectionEvent(i, "measure_antipolarized", source_z=-z,
                                          outcome=bar_outcome))
        elif isinstance(strategy, UnitaryEveryK):
            if (i + 1) % strategy.k == 0:
                cur = _checked(unitary_channel(cur, -z, ops, strategy.gamma))
                events.append(CorrectionEvent(i, "unitary", gamma=strategy.gamma, source_z=-z))
        elif isinstance(strategy, UnitaryAfterEachPlus):
            if outcome > 0:
                cur = _checked(unitary_channel(cur, -z, ops, strategy.gamma))
                events.append(CorrectionEvent(i, "unitary", gamma=strategy.gamma, source_z=-z))
        elif isinstance(strategy, ConditionalTuned):
            choice = conditional_correction_step(cur, theta_target, outcome, ops,
                                                 z_mag=abs(z) if z != 0.0 else 1.0)
            cur = choice.corrected_rho
            events.append(CorrectionEvent(i, "conditional", gamma=choice.gamma,
                                          source_z=choice.source_sign * (abs(z) or 1.0),
                                          residual=choice.residual, outcome=outcome))
        elif strategy is not None:
            raise TypeError(f"unknown correction strategy {strategy!r}")

        snapshots.append(summarize_frame(cur, ops))
        probs.append(p_succ(cur, ops, n_hat))

    return TrajectoryRecord(
        seed=int(seed),
        outcomes=np.array(outcomes, dtype=np.int8),
        outcome_is_corrective=np.array(corrective_flags, dtype=bool),
        snapshots=snapshots,
        p_succ_series=np.array(probs),
        correction_events=events,
        final_state=cur,
    )


def run_ensemble(rho0: np.ndarray, n_measure: int, q, strategy, seeds, ops: SpinOperators,
                 threads: int = 1) -> list[TrajectoryRecord]:
    """Independent trajectories for each seed; results are ordered by the
    seed list no matter how the work is scheduled."""
    seeds = list(seeds)
    if threads <= 1 or len(seeds) <= 1:
        return [run_stochastic(rho0, n_measure, q, strategy, s, ops) for s in seeds]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        futs = [pool.submit(run_stochastic, rho0, n_measure, q, strategy, s, ops)
                for s in seeds]
        return [f.result() for f in futs]


@dataclass
class EnsembleStatistics:
    n_records: int
    mean_L: np.ndarray          # (n_steps, 3)
    mean_L_stderr: np.ndarray
    theta: np.ndarray           # (n_steps,)
    theta_stderr: np.ndarray
    p_succ: np.ndarray
    p_succ_stderr: np.ndarray
    plus_fraction: np.ndarray   # per primary measurement
    plus_fraction_stderr: np.ndarray


def _mean_stderr(arr: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    mean = arr.mean(axis=0)
    if arr.shape[0] == 1:
        return mean, np.zeros_like(mean)
    return mean, arr.std(axis=0, ddof=1) / np.sqrt(arr.shape[0])


def ensemble_statistics(records: list[TrajectoryRecord]) -> EnsembleStatistics:
    """Per-step means and standard errors across an ensemble of records."""
    if not records:
        raise ValueError("no records supplied")
    n_steps = len(records[0].snapshots)
    n_out = len(records[0].outcomes)
    for rec in records:
        if len(rec.snapshots) != n_steps or len(rec.outcomes) != n_out:
            raise ValueError("records have mixed lengths")
    mean_L = np.array([[s.mean_L for s in rec.snapshots] for rec in records])
    theta = np.array([[s.theta for s in rec.snapshots] for rec in records])
    probs = np.array([rec.p_succ_series for rec in records])
    primary = ~records[0].outcome_is_corrective
    plus = np.array([(rec.outcomes[primary] > 0).astype(float) for rec in records])
    mL, mLs = _mean_stderr(mean_L)
    th, ths = _mean_stderr(theta)
    ps, pss = _mean_stderr(probs)
    pf, pfs = _mean_stderr(plus)
    return EnsembleStatistics(len(records), mL, mLs, th, ths, ps, pss, pf, pfs)
