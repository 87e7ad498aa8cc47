"""Multi-time-step orchestration: coarse step on the smooth subdomain, K
fine substeps on the discontinuity-bearing subdomain, coupled through the
internal boundary layers.

One coarse step from t_n to t_{n+1} runs three phases:

1. Advance the coarse side (C and CI points) with one RK step of size dt.
   Stage evaluations at CI points read neighbors in the fine boundary layer
   FI; those neighbor values at the stage times are supplied by Taylor
   extrapolation from the operator history (backward-difference estimates
   of the first and, for order 4, second time derivative of the rates).
2. Build, for every CI point, a degree-r polynomial interpolant from the
   states at t_n and t_{n+1}, the rate at t_n, and derivative estimates
   d = Gamma f obtained from the correction matrices.
3. Advance the fine side (F and FI points) with K RK substeps of size dt/K;
   stage evaluations at FI points read their CI neighbors through the
   interpolant at the exact stage times.

With K = 1 and a single (all-coarse) subdomain, every phase reduces to a
plain whole-domain step and the trajectory is bit-identical to the UPD
driver.
"""

from __future__ import annotations

import time
from contextlib import contextmanager
from dataclasses import dataclass, field

import numpy as np

from .forces import FieldState, InstabilityError, SimulationError, update_damage
from .geometry import LABEL_CI, LABEL_FI, SubdomainLabels
from .integrator import ButcherTableau, Trajectory, combine, rk_step, tableau

_SPACING_RTOL = 1e-12
_INV_FACT = (0.5, 1.0 / 6.0, 1.0 / 24.0)  # 1/2!, 1/3!, 1/4!


@dataclass
class MtsConfig:
    """Order, coarse step, refinement level, and the static subdomain labels."""

    order: int
    dt: float
    K: int
    labels: SubdomainLabels

    def validate(self):
        if self.order not in (3, 4):
            raise ValueError(f"order must be 3 or 4, got {self.order}")
        if self.dt <= 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if int(self.K) != self.K or self.K < 1:
            raise ValueError(f"K must be an integer >= 1, got {self.K}")
        return self


@dataclass
class CorrectionMatrices:
    """The (r-1)x(r-1) Taylor-coefficient matrix A and its inverse Gamma.

    Gamma maps the stacked difference quantities f onto estimates of the
    first r-1 time derivatives of the rate operator.
    """

    r: int
    dt: float
    A: np.ndarray
    gamma: np.ndarray


def matrix_A(r: int, dt: float) -> CorrectionMatrices:
    """Correction matrices for order r; Gamma entries are analytic.

    Row j of Gamma scales as dt^(1-j), making d = Gamma f dimensionally a
    vector of successive derivatives.
    """
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    if r == 4:
        A = np.array([
            [0.5, dt / 6.0, dt * dt / 24.0],
            [1.0, -dt / 2.0, dt * dt / 6.0],
            [1.0, -1.5 * dt, 7.0 * dt * dt / 6.0],
        ])
        gamma = np.array([
            [8.0 / 9.0, 37.0 / 54.0, -7.0 / 54.0],
            [8.0 / (3.0 * dt), -13.0 / (9.0 * dt), 1.0 / (9.0 * dt)],
            [8.0 / (3.0 * dt * dt), -22.0 / (9.0 * dt * dt),
             10.0 / (9.0 * dt * dt)],
        ])
    elif r == 3:
        A = np.array([
            [0.5, dt / 6.0],
            [1.0, -dt / 2.0],
        ])
        gamma = np.array([
            [1.2, 0.4],
            [12.0 / (5.0 * dt), -6.0 / (5.0 * dt)],
        ])
    else:
        raise ValueError(f"correction matrices exist for r in {{3, 4}}, got {r}")
    return CorrectionMatrices(r=r, dt=dt, A=A, gamma=gamma)


def assemble_f(r: int, dt: float, y_n, y_np1, L_n, L_nm1, L_nm2=None):
    """Stack the difference quantities f feeding the derivative estimates.

    f1 = (U^{n+1} - U^n - dt L^n)/dt^2, f2 = (L^n - L^{n-1})/dt and, for
    r = 4, f3 = (L^{n-1} - L^{n-2})/dt.  Applies componentwise to arrays of
    any shape (the stacked displacement/velocity state included).
    """
    parts = [(y_np1 - y_n - dt * L_n) / (dt * dt), (L_n - L_nm1) / dt]
    if r == 4:
        if L_nm2 is None:
            raise SimulationError(
                "insufficient operator history for r=4 (needs L at n-2)")
        parts.append((L_nm1 - L_nm2) / dt)
    return np.stack(parts)


def estimate_derivatives(corr: CorrectionMatrices, f: np.ndarray) -> np.ndarray:
    """d = Gamma f: estimates of (L', L'', ...) stacked along axis 0."""
    return np.tensordot(corr.gamma, f, axes=(1, 0))


@dataclass
class Interpolant:
    """Per-point polynomial on the CI layer, valid on [t0, t0 + dt].

    Evaluates U^n + tau L^n + sum_j tau^j/j! d_{j-1}; the derivative
    estimates make the polynomial reproduce trajectories of degree <= r
    exactly and track smooth motions to O(dt^{r+1}).
    """

    t0: float
    dt: float
    indices: np.ndarray
    y0: np.ndarray
    L0: np.ndarray
    d: np.ndarray

    def evaluate(self, t: float) -> np.ndarray:
        tau = t - self.t0
        slack = 1e-9 * self.dt
        if tau < -slack or tau > self.dt + slack:
            raise SimulationError(
                f"interpolant evaluated at t={t!r} outside its validity "
                f"window [{self.t0!r}, {self.t0 + self.dt!r}]")
        out = self.y0 + tau * self.L0
        power = tau
        for j in range(len(self.d)):
            power *= tau
            out = out + (_INV_FACT[j] * power) * self.d[j]
        return out


class OperatorHistory:
    """Ring buffer of the last three coarse-level rate evaluations."""

    def __init__(self, dt: float, depth: int = 3):
        self.dt = dt
        self.depth = depth
        self._entries: list[tuple[float, np.ndarray]] = []

    def __len__(self) -> int:
        return len(self._entries)

    def push(self, t: float, values: np.ndarray):
        if self._entries:
            t_prev = self._entries[-1][0]
            if t <= t_prev:
                raise SimulationError(
                    f"history time stamps must increase: {t_prev!r} -> {t!r}")
            if abs((t - t_prev) - self.dt) > _SPACING_RTOL * self.dt:
                raise SimulationError(
                    f"history spacing {t - t_prev!r} deviates from dt={self.dt!r}")
        self._entries.append((t, values))
        if len(self._entries) > self.depth:
            self._entries.pop(0)

    def t_at(self, back: int = 0) -> float:
        return self._entries[-1 - back][0]

    def values(self, back: int = 0) -> np.ndarray:
        """Rates back steps behind the newest entry (0 = newest)."""
        return self._entries[-1 - back][1]


def build_interpolant(indices, y_n, y_np1, history: OperatorHistory,
                      r: int, dt: float) -> Interpolant:
    """Interpolant for the CI points from the completed coarse step.

    ``y_n``/``y_np1`` are full-domain packed states; ``history`` must hold
    the rate at t_n (newest) plus r-2 older levels.
    """
    if len(history) < r - 1:
        raise SimulationError(
            f"insufficient operator history: have {len(history)}, "
            f"need {r - 1} (was startup skipped?)")
    idx = np.asarray(indices, dtype=np.int64)
    L_n = history.values(0)[idx]
    L_nm1 = history.values(1)[idx]
    L_nm2 = history.values(2)[idx] if r == 4 else None
    f = assemble_f(r, dt, y_n[idx], y_np1[idx], L_n, L_nm1, L_nm2)
    d = estimate_derivatives(matrix_A(r, dt), f)
    return Interpolant(t0=history.t_at(0), dt=dt, indices=idx,
                       y0=y_n[idx].copy(), L0=L_n.copy(), d=d)


class TimingReport:
    """Wall-clock accumulator per scheme phase (calls + seconds)."""

    def __init__(self):
        self.entries: dict[str, list] = {}

    @contextmanager
    def phase(self, name: str):
        start = time.perf_counter()
        try:
            yield
        finally:
            entry = self.entries.setdefault(name, [0, 0.0])
            entry[0] += 1
            entry[1] += time.perf_counter() - start

    def seconds(self, name: str) -> float:
        return self.entries.get(name, [0, 0.0])[1]

    @property
    def total_seconds(self) -> float:
        return sum(v[1] for v in self.entries.values())

    def rows(self):
        return [(name, calls, secs)
                for name, (calls, secs) in sorted(self.entries.items())]


class MtsPlan:
    """Static per-run data: subdomain row sets, operator views, bond masks."""

    def __init__(self, op, config: MtsConfig, s0: float | None = None):
        config.validate()
        self.op = op
        self.config = config
        self.tab = tableau(config.order)
        self.s0 = s0
        labels = config.labels
        self.rows_c = labels.omega_hat_c
        self.rows_f = labels.omega_hat_f
        self.idx_fi = labels.indices(LABEL_FI)
        self.idx_ci = labels.indices(LABEL_CI)
        self.coarse_view = op.make_view(self.rows_c) if len(self.rows_c) else None
        self.fine_view = op.make_view(self.rows_f) if len(self.rows_f) else None
        if s0 is not None:
            lab = labels.labels
            nbrs = op.nbrs
            fine_end = (lab[nbrs.bond_i] <= LABEL_FI) | \
                       (lab[nbrs.neighbors] <= LABEL_FI)
            self.fine_bond_mask = fine_end
            self.coarse_bond_mask = ~fine_end
        else:
            self.fine_bond_mask = None
            self.coarse_bond_mask = None


def _fi_ghost(plan: MtsPlan, y_n: np.ndarray, history: OperatorHistory):
    """Taylor extrapolator for FI-point values at coarse stage times.

    Derivatives of the rates come from backward differences over the
    history; order 4 uses the three-level second-order difference for L'
    so the ghost values stay O(dt^4) accurate.
    """
    fi = plan.idx_fi
    if len(fi) == 0:
        return None
    r = plan.tab.r
    dt = plan.config.dt
    if len(history) < r - 1:
        raise SimulationError(
            f"insufficient operator history: have {len(history)}, need {r - 1}")
    y0 = y_n[fi]
    L0 = history.values(0)[fi]
    L1 = history.values(1)[fi]
    if r == 3:
        d1 = (L0 - L1) / dt

        def ghost(tau: float) -> np.ndarray:
            return y0 + tau * L0 + (0.5 * tau * tau) * d1
    else:
        L2 = history.values(2)[fi]
        d1 = (3.0 * L0 - 4.0 * L1 + L2) / (2.0 * dt)
        d2 = (L0 - 2.0 * L1 + L2) / (dt * dt)

        def ghost(tau: float) -> np.ndarray:
            return y0 + tau * L0 + (0.5 * tau * tau) * d1 \
                + (tau ** 3 / 6.0) * d2
    return ghost


def coarse_advance(plan: MtsPlan, y_n: np.ndarray, t_n: float,
                   history: OperatorHistory) -> np.ndarray:
    """One RK step of size dt on the coarse side (C plus CI rows).

    Returns a fresh full-domain array whose coarse rows hold t_{n+1} values
    and whose fine rows are untouched; the CI rows double as the predicted
    U^{n+1} the interpolant construction needs.  Stage evaluations at CI
    points see FI neighbors through the Taylor ghost extrapolator.
    """
    out = y_n.copy()
    rows = plan.rows_c
    if len(rows) == 0:
        return out
    tab = plan.tab
    dt = plan.config.dt
    ghost = _fi_ghost(plan, y_n, history)
    scratch = y_n.copy()
    y_rows = y_n[rows]
    rates = []
    for j in range(tab.r):
        if j == 0:
            rates.append(history.values(0)[rows])
            continue
        scratch[rows] = combine(y_rows, dt, tab.a[j, :j], rates)
        if ghost is not None:
            scratch[plan.idx_fi] = ghost(tab.c[j] * dt)
        try:
            rates.append(plan.op.rates(scratch, t_n + tab.c[j] * dt,
                                       view=plan.coarse_view))
        except InstabilityError as err:
            raise err.with_context(stage=j) from None
    out[rows] = combine(y_rows, dt, tab.b, rates)
    return out


def fine_advance(plan: MtsPlan, y_half: np.ndarray,
                 interp: Interpolant | None, t_n: float,
                 history: OperatorHistory) -> np.ndarray:
    """K RK substeps of size dt/K on the fine side (F plus FI rows).

    ``y_half`` is the coarse_advance result; its fine rows still hold t_n
    values and are advanced in place.  CI neighbor values at every substep
    stage time come from the interpolant.  Bonds touching the fine side are
    damage-checked after each substep when fracture is on.
    """
    rows = plan.rows_f
    if len(rows) == 0:
        return y_half
    tab = plan.tab
    K = plan.config.K
    dt_k = plan.config.dt / K
    ci = plan.idx_ci
    dim = plan.op.cloud.dim
    scratch = y_half.copy()
    y_cur = y_half[rows].copy()
    for k in range(K):
        t_k = t_n + k * dt_k
        rates = []
        for j in range(tab.r):
            stage_t = t_k + tab.c[j] * dt_k
            if k == 0 and j == 0:
                rates.append(history.values(0)[rows])
                continue
            scratch[rows] = y_cur if j == 0 \
                else combine(y_cur, dt_k, tab.a[j, :j], rates)
            if interp is not None and len(ci):
                scratch[ci] = interp.evaluate(stage_t)
            try:
                rates.append(plan.op.rates(scratch, stage_t,
                                           view=plan.fine_view))
            except InstabilityError as err:
                raise err.with_context(stage=j) from None
        y_cur = combine(y_cur, dt_k, tab.b, rates)
        if plan.s0 is not None:
            scratch[rows] = y_cur
            if interp is not None and len(ci):
                scratch[ci] = interp.evaluate(t_k + dt_k)
            update_damage(plan.op.nbrs, scratch[:, :dim], plan.s0,
                          bond_mask=plan.fine_bond_mask)
    y_half[rows] = y_cur
    return y_half


def mts_step(plan: MtsPlan, y_n: np.ndarray, t_n: float, t_np1: float,
             history: OperatorHistory,
             timing: TimingReport | None = None) -> np.ndarray:
    """Full coarse step: coarse advance, interpolant, fine advance, damage,
    then push the rates at t_{n+1} into the history."""
    timing = timing if timing is not None else TimingReport()
    with timing.phase("coarse"):
        y_half = coarse_advance(plan, y_n, t_n, history)
    with timing.phase("interpolant"):
        interp = None
        if len(plan.idx_ci):
            interp = build_interpolant(plan.idx_ci, y_n, y_half, history,
                                       plan.tab.r, plan.config.dt)
    with timing.phase("fine"):
        y_next = fine_advance(plan, y_half, interp, t_n, history)
    if plan.s0 is not None:
        with timing.phase("damage"):
            dim = plan.op.cloud.dim
            update_damage(plan.op.nbrs, y_next[:, :dim], plan.s0,
                          bond_mask=plan.coarse_bond_mask)
    with timing.phase("history"):
        history.push(t_np1, plan.op.rates(y_next, t_np1))
    return y_next


def mts_startup(op, state0: FieldState, config: MtsConfig,
                s0: float | None = None, n_intervals: int = 2):
    """Integrate the first coarse intervals with whole-domain RK at the fine
    step dt/K (no correction terms before history exists).

    Returns (history, coarse_states) where coarse_states is the list of
    packed states at t_1..t_{n_intervals}; the history holds the rates at
    t_0 through t_{n_intervals}.
    """
    config.validate()
    tab = tableau(config.order)
    dt, K = config.dt, config.K
    dt_k = dt / K
    dim = op.cloud.dim
    y = state0.packed()
    t0 = state0.t
    history = OperatorHistory(dt)
    history.push(t0, op.rates(y, t0))
    coarse_states = []
    for m in range(n_intervals):
        t_m = t0 + m * dt
        for k in range(K):
            y, _ = rk_step(tab, y, op.rates, t_m + k * dt_k, dt_k)
            if s0 is not None:
                update_damage(op.nbrs, y[:, :dim], s0)
        t_next = t0 + (m + 1) * dt
        history.push(t_next, op.rates(y, t_next))
        coarse_states.append(y.copy())
    return history, coarse_states


def mts_run(op, state0: FieldState, config: MtsConfig, n_steps: int,
            s0: float | None = None, record_every: int | None = None,
            on_step=None):
    """Startup then repeated mts_step until t_0 + n_steps * dt.

    Returns (Trajectory, TimingReport).  The trajectory records the initial
    state, every record_every-th step, and the final state, matching the
    UPD driver's cadence so the two are directly comparable.
    """
    config.validate()
    plan = MtsPlan(op, config, s0)
    timing = TimingReport()
    dt, K = config.dt, config.K
    dt_k = dt / K
    dim = op.cloud.dim
    y = state0.packed()
    t0 = state0.t
    states = [FieldState.from_packed(y, t0)]
    history = OperatorHistory(dt)
    with timing.phase("history"):
        history.push(t0, op.rates(y, t0))
    step = 0
    try:
        for step in range(1, n_steps + 1):
            t_prev = t0 + (step - 1) * dt
            t_now = t0 + step * dt
            if step <= 2:
                with timing.phase("startup"):
                    for k in range(K):
                        y, _ = rk_step(plan.tab, y, op.rates,
                                       t_prev + k * dt_k, dt_k)
                        if s0 is not None:
                            update_damage(op.nbrs, y[:, :dim], s0)
                with timing.phase("history"):
                    history.push(t_now, op.rates(y, t_now))
            else:
                y = mts_step(plan, y, t_prev, t_now, history, timing)
            if on_step is not None:
                on_step(step, t_now, y)
            if record_every and step % record_every == 0 and step != n_steps:
                states.append(FieldState.from_packed(y, t_now))
    except InstabilityError as err:
        raise err.with_context(last_good_step=step - 1) from None
    if n_steps > 0:
        states.append(FieldState.from_packed(y, t0 + n_steps * dt))
    return Trajectory(states=states), timing
