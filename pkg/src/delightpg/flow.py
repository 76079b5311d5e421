"""Forward-Euler integration of the gated logit flow, escape detection and
the gap-sweep experiment."""
from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numba
import numpy as np

from .bandit import BanditInstance, as_logits, softmax
from .dynamics import DG, PG, GateSpec, drift_from_policy
from .errors import InvalidInputError, NumericalAbort

SWEEP_COLUMNS = ("method", "gap", "inv_gap", "escape_time", "escaped")
SWEEP_GAPS = (0.5, 0.2, 0.1, 0.05, 0.03, 0.02, 0.015, 0.012, 0.01)
SWEEP_THETA0 = (-1.0, 5.0, 1.0)


@dataclass(frozen=True)
class FlowConfig:
    dt: float = 1.0
    max_time: float = 10_000_000.0
    gate: GateSpec = field(default_factory=lambda: PG)
    record_every: int = 1

    def __post_init__(self):
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise InvalidInputError("dt must be positive")
        if not (self.max_time >= self.dt):
            raise InvalidInputError("max_time must be >= dt")
        if int(self.record_every) < 1:
            raise InvalidInputError("record_every must be a positive integer")

    @property
    def n_steps(self) -> int:
        return int(math.floor(self.max_time / self.dt + 1e-9))


@dataclass
class TrajectoryRecord:
    times: np.ndarray
    thetas: np.ndarray
    pis: np.ndarray
    values: np.ndarray
    escaped: bool
    escape_time: float | None
    steps: np.ndarray
    bandit: BanditInstance | None = None
    gate: GateSpec | None = None
    exit_time: float | None = None

    def drifts(self) -> np.ndarray:
        if self.bandit is None or self.gate is None:
            raise InvalidInputError("trajectory does not carry its bandit and gate")
        return drift_from_policy(self.bandit, self.pis, self.gate)


@numba.njit(nogil=True, cache=True)
def _euler(theta0, r, gate_code, eta, dt, n_steps, record_every, opt, corner,
           stop_on_escape, eps_bar):
    K = theta0.size
    th = theta0.copy()
    pi = np.empty(K)
    sig = np.empty(K)
    n_rec_max = n_steps // record_every + 2
    rec_steps = np.empty(n_rec_max, dtype=np.int64)
    rec_theta = np.empty((n_rec_max, K))
    n_rec = 0
    escape_step = -1
    exit_step = -1
    abort_step = -1
    n = 0
    while True:
        m = th.max()
        s = 0.0
        for a in range(K):
            pi[a] = math.exp(th[a] - m)
            s += pi[a]
        for a in range(K):
            pi[a] /= s
        if escape_step < 0 and th[opt] >= th[corner]:
            escape_step = n
        if eps_bar > 0.0 and exit_step < 0:
            eps = 1.0 - pi[corner]
            if eps >= eps_bar or pi[opt] < eps / K:
                exit_step = n
        done = n == n_steps or (stop_on_escape and (escape_step >= 0 or exit_step >= 0))
        if n % record_every == 0 or done:
            rec_steps[n_rec] = n
            rec_theta[n_rec, :] = th
            n_rec += 1
        if done:
            break
        S = 0.0
        for a in range(K):
            u = 0.0
            for b in range(K):
                u += pi[b] * (r[a] - r[b])
            if gate_code == 0:
                w = 1.0
            elif gate_code == 1:
                w = 1.0 if u > 0.0 else 0.0
            else:
                x = u * (-math.log(max(pi[a], 1e-30))) / eta
                if x >= 0.0:
                    w = 1.0 / (1.0 + math.exp(-x))
                else:
                    z = math.exp(x)
                    w = z / (1.0 + z)
            sig[a] = w * u
            S += sig[a] * pi[a]
        bad = False
        for a in range(K):
            d = pi[a] * (sig[a] - S)
            if not math.isfinite(d):
                bad = True
            th[a] += dt * d
        n += 1
        if bad or not np.all(np.isfinite(th)):
            abort_step = n
            break
    return rec_steps[:n_rec], rec_theta[:n_rec], escape_step, exit_step, abort_step


def _default_corner(theta0, optimal):
    masked = np.where(np.arange(theta0.size) == optimal, -np.inf, theta0)
    return int(np.argmax(masked))


def integrate(b: BanditInstance, theta0, cfg: FlowConfig, *, optimal: int | None = None,
              corner: int | None = None, stop_on_escape: bool = False,
              sector_eps_bar: float | None = None) -> TrajectoryRecord:
    """Integrate theta' = drift(theta) with forward Euler.

    Escape is the first iterate with theta[optimal] >= theta[corner]. With
    ``sector_eps_bar`` set, the first exit from the sector
    {1 - pi(corner) < eps_bar, pi(optimal) >= (1 - pi(corner))/K} is also
    tracked; ``stop_on_escape`` halts at whichever event comes first.
    """
    theta0 = as_logits(theta0).astype(float)
    if theta0.shape != (b.K,):
        raise InvalidInputError(f"theta0 must have shape ({b.K},)")
    optimal = b.optimal_arm if optimal is None else int(optimal)
    corner = _default_corner(theta0, optimal) if corner is None else int(corner)
    if optimal == corner:
        raise InvalidInputError("optimal and corner arms must differ")
    g = cfg.gate
    steps, thetas, esc, ex, abort = _euler(
        theta0, b.rewards.astype(float), g.code, float(g.eta), float(cfg.dt), cfg.n_steps,
        int(cfg.record_every), optimal, corner, bool(stop_on_escape),
        float(sector_eps_bar or 0.0))
    if abort >= 0:
        raise NumericalAbort(f"non-finite drift or logits at step {abort}", step=int(abort))
    pis = softmax(thetas)
    return TrajectoryRecord(
        times=steps * cfg.dt,
        thetas=thetas,
        pis=pis,
        values=pis @ b.rewards,
        escaped=esc >= 0,
        escape_time=float(esc * cfg.dt) if esc >= 0 else None,
        steps=steps,
        bandit=b,
        gate=g,
        exit_time=float(ex * cfg.dt) if ex >= 0 else None,
    )


def detect_escape(traj: TrajectoryRecord, optimal: int, corner: int) -> float | None:
    """First recorded time with theta[optimal] >= theta[corner], else None."""
    if traj.thetas.shape[0] == 0:
        raise InvalidInputError("empty trajectory")
    hit = np.flatnonzero(traj.thetas[:, optimal] >= traj.thetas[:, corner])
    return float(traj.times[hit[0]]) if hit.size else None


@dataclass
class SweepRow:
    method: str
    gap: float
    inv_gap: float
    escape_time: float
    escaped: bool
    error: str | None = None


def sweep_instance(gap: float) -> BanditInstance:
    return BanditInstance(np.array([1.0, 1.0 - gap, 0.0]))


def _sweep_row(gate: GateSpec, gap: float, theta0, cfg: FlowConfig) -> SweepRow:
    row_cfg = FlowConfig(cfg.dt, cfg.max_time, gate, record_every=max(cfg.n_steps, 1))
    try:
        tr = integrate(sweep_instance(gap), theta0, row_cfg, optimal=0, corner=1,
                       stop_on_escape=True)
    except NumericalAbort as exc:
        return SweepRow(gate.kind, float(gap), 1.0 / gap, math.nan, False, error=str(exc))
    t = tr.escape_time if tr.escaped else math.nan
    return SweepRow(gate.kind, float(gap), 1.0 / gap, t, bool(tr.escaped))


def gap_sweep(gaps=SWEEP_GAPS, theta0=SWEEP_THETA0, gates=(PG, DG(1.0)),
              cfg: FlowConfig | None = None, workers: int = 1) -> list[SweepRow]:
    """Escape time of each gate on rewards (1, 1 - gap, 0), corner arm 1.

    Rows are ordered by (gate, gap) as given, independent of completion order.
    """
    cfg = cfg or FlowConfig()
    gaps = [float(g) for g in gaps]
    if any(not 0 < g < 1 for g in gaps):
        raise InvalidInputError("every gap must lie in (0, 1)")
    theta0 = as_logits(theta0).astype(float)
    jobs = [(g, gap) for g in gates for gap in gaps]
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(lambda job: _sweep_row(job[0], job[1], theta0, cfg), jobs))
    return [_sweep_row(g, gap, theta0, cfg) for g, gap in jobs]


def loglog_slope(inv_gaps, times) -> float:
    x = np.log(np.asarray(inv_gaps, dtype=float))
    y = np.log(np.asarray(times, dtype=float))
    return float(np.polyfit(x, y, 1)[0])


def sweep_slopes(rows: list[SweepRow], last: int | None = None) -> dict[str, float]:
    """Log-log slope of escape time against 1/gap, per method."""
    out = {}
    for method in dict.fromkeys(r.method for r in rows):
        sel = [r for r in rows if r.method == method and r.escaped]
        sel.sort(key=lambda r: r.inv_gap)
        if last is not None:
            sel = sel[-last:]
        if len(sel) >= 2:
            out[method] = loglog_slope([r.inv_gap for r in sel], [r.escape_time for r in sel])
    return out


def _fmt(x) -> str:
    if isinstance(x, bool):
        return str(x)
    if isinstance(x, float) and math.isnan(x):
        return ""
    return repr(float(x)) if isinstance(x, float) else str(x)


def sweep_to_csv(rows: list[SweepRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SWEEP_COLUMNS)
    for r in rows:
        w.writerow([_fmt(getattr(r, c)) for c in SWEEP_COLUMNS])
    return buf.getvalue()


def trajectory_to_csv(traj: TrajectoryRecord) -> str:
    K = traj.thetas.shape[1]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["step", "time", *[f"theta_{a}" for a in range(K)], *[f"pi_{a}" for a in range(K)], "value"])
    for i in range(traj.thetas.shape[0]):
        w.writerow([int(traj.steps[i]), repr(float(traj.times[i])),
                    *[repr(float(v)) for v in traj.thetas[i]],
                    *[repr(float(v)) for v in traj.pis[i]], repr(float(traj.values[i]))])
    return buf.getvalue()

