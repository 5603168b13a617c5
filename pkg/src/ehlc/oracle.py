"""Independent brute-force and residual checks for the closed-form solvers.

The grid searches enumerate feasible schedules directly from the physical
model (splitter, battery losses, layered rates) without touching any of
the solver branch equations, then zoom the grid around the incumbent until
the objective stops moving.  Every search reports an empirical bound on
how far the true optimum can sit above the returned value.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import BudgetExceeded
from .model import (
    BatteryParams,
    ChannelDist,
    FrameConfig,
    HarvestProfile,
    charge_rate,
    idle_charge_rate,
)
from . import lsc as _lsc

__all__ = [
    "GridSpec",
    "OracleResult",
    "FeasibilityReport",
    "grid_search_single_frame",
    "grid_search_two_frame",
    "kkt_residuals_lsc",
    "ideal_rate_stationarity_residuals",
    "feasibility_check",
]


@dataclass(frozen=True)
class GridSpec:
    """Grid resolution, refinement depth and evaluation budget."""

    points: int = 20
    levels: int = 14
    budget: float = 1e8
    feas_tol: float = 1e-9

    def __post_init__(self):
        if self.points < 2:
            raise ValueError("need at least two points per dimension")


@dataclass
class OracleResult:
    objective: float
    bound: float
    argmax: dict = field(default_factory=dict)
    evaluations: int = 0


def _fd(x, bat):
    return x - bat.r * x * x / bat.v_b**2


def _refine(fun, windows, points, levels, budget_counter):
    """Zooming grid maximization of ``fun`` over box ``windows``.

    ``fun`` maps a tuple of coordinate meshes to an objective array.
    Returns (best value, best coords, evaluations, per-dim final spacing).
    """
    dims = len(windows)
    windows = [list(w) for w in windows]
    best_val, best_pt = -math.inf, None
    evals = 0
    for _ in range(levels):
        axes = [np.linspace(lo, hi, points) for lo, hi in windows]
        mesh = np.meshgrid(*axes, indexing="ij") if dims > 1 else [axes[0]]
        vals = fun(mesh)
        evals += vals.size
        budget_counter[0] += vals.size
        if budget_counter[0] > budget_counter[1]:
            raise BudgetExceeded(
                f"oracle grid budget exceeded ({budget_counter[0]:.2e} evals)"
            )
        flat = int(np.nanargmax(vals))
        idx = np.unravel_index(flat, vals.shape)
        val = float(vals[idx])
        pt = [float(axes[d][idx[d]]) for d in range(dims)]
        if val > best_val:
            best_val, best_pt = val, pt
        for d in range(dims):
            lo, hi = windows[d]
            step = (hi - lo) / (points - 1) if points > 1 else 0.0
            c = best_pt[d]
            windows[d] = [max(lo, c - 1.5 * step), min(hi, c + 1.5 * step)]
    spacings = [(hi - lo) / (points - 1) for lo, hi in windows]
    return best_val, best_pt, evals, spacings


def grid_search_single_frame(
    strategy: str,
    b0: float,
    u: float,
    frame: FrameConfig,
    bat: BatteryParams,
    dist: ChannelDist,
    grid: GridSpec = GridSpec(),
) -> OracleResult:
    """Exhaustive single-frame search for either strategy.

    The search variables are the transmit window, the time split between
    at most two partitions (time-multiplexed) or the power split across
    layers (superposition); the battery is always drained as far as the
    window allows, since delivered power is increasing in drain below the
    peak.  Layer-pair structure is NOT assumed for superposition: the full
    power simplex is searched (which is why it is limited to small N).
    """
    tau, p_c = frame.tau, frame.p_c
    heff = dist.h / frame.noise_power
    q = dist.q
    n = dist.n
    fcva = charge_rate(idle_charge_rate(u, bat), bat)
    d_peak = bat.drain_peak
    counter = [0, grid.budget]

    def e_avail(phi):
        return np.minimum(b0 + (tau - phi) * fcva, bat.b_max)

    def delivered(e, phi):
        with np.errstate(divide="ignore", invalid="ignore"):
            d = np.where(phi > 0, e / np.maximum(phi, 1e-300), 0.0)
        d = np.minimum(d, d_peak)
        return _fd(d, bat)

    best = OracleResult(-math.inf, 0.0)

    if strategy == "lsc":
        if n > 3:
            raise BudgetExceeded("superposition simplex search limited to N <= 3")

        def power_total(phi):
            return u + delivered(e_avail(phi), phi) - p_c

        def rate_of(powers_list, phi):
            above = np.zeros_like(phi)
            val = np.zeros_like(phi)
            for i in range(n - 1, -1, -1):
                val += q[i] * np.log1p(heff[i] * powers_list[i] / (1.0 + heff[i] * above))
                above = above + powers_list[i]
            return val * phi

        if n == 1:
            def fun(mesh):
                (phi,) = mesh
                pt = np.clip(power_total(phi), 0.0, None)
                return rate_of([pt], phi)
            windows = [(tau * 1e-6, tau)]
        elif n == 2:
            def fun(mesh):
                phi, w = mesh
                pt = np.clip(power_total(phi), 0.0, None)
                return rate_of([(1 - w) * pt, w * pt], phi)
            windows = [(tau * 1e-6, tau), (0.0, 1.0)]
        else:
            def fun(mesh):
                phi, w1, w2 = mesh
                pt = np.clip(power_total(phi), 0.0, None)
                p3 = w1 * pt
                p2 = (1 - w1) * w2 * pt
                p1 = pt - p3 - p2
                return rate_of([p1, p2, p3], phi)
            windows = [(tau * 1e-6, tau), (0.0, 1.0), (0.0, 1.0)]
        val, pt, ev, spac = _refine(fun, windows, grid.points, grid.levels, counter)
        bound = _empirical_bound(fun, pt, spac)
        return OracleResult(val, bound, {"point": pt}, counter[0])

    if strategy != "ltm":
        raise ValueError("strategy must be 'ltm' or 'lsc'")
    if n > 5:
        raise BudgetExceeded("time-multiplexed pair search limited to N <= 5")

    x_hi_global = min(
        d_peak, 200.0 * (b0 / tau + fcva) + u + p_c + 1.0
    )

    for i in range(n):
        for j in range(i, n):
            if i == j:
                def fun(mesh, i=i):
                    phi, x = mesh
                    e = np.minimum(x * phi, e_avail(phi))
                    pw = u + delivered(e, phi) - p_c
                    return np.where(
                        pw > 0, q[i] * phi * np.log1p(heff[i] * np.clip(pw, 0, None)), 0.0
                    )
                windows = [(tau * 1e-6, tau), (0.0, x_hi_global)]
            else:
                def fun(mesh, i=i, j=j):
                    phi, f, x = mesh
                    li = f * phi
                    lj = phi - li
                    avail = e_avail(phi)
                    ei = np.minimum(x * li, avail)
                    pw_i = u + delivered(ei, li) - p_c
                    ej = avail - ei
                    pw_j = u + delivered(ej, lj) - p_c
                    ri = np.where(
                        (pw_i > 0) & (li > 0),
                        q[i] * li * np.log1p(heff[i] * np.clip(pw_i, 0, None)),
                        0.0,
                    )
                    rj = np.where(
                        (pw_j > 0) & (lj > 0),
                        q[j] * lj * np.log1p(heff[j] * np.clip(pw_j, 0, None)),
                        0.0,
                    )
                    return ri + rj
                windows = [(tau * 1e-6, tau), (0.0, 1.0), (0.0, x_hi_global)]
            val, pt, ev, spac = _refine(fun, windows, grid.points, grid.levels, counter)
            if val > best.objective:
                bound = _empirical_bound(fun, pt, spac)
                best = OracleResult(val, bound, {"pair": (i, j), "point": pt}, counter[0])
    best.evaluations = counter[0]
    return best


def _empirical_bound(fun, pt, spacings):
    """Local curvature estimate of how far the optimum can exceed fun(pt)."""
    base_mesh = [np.array([c]) for c in pt]
    f0 = float(fun(base_mesh).ravel()[0])
    bound = 0.0
    for d, step in enumerate(spacings):
        if step <= 0:
            continue
        for sgn in (-1.0, 1.0):
            probe = [np.array([c]) for c in pt]
            probe[d] = np.array([pt[d] + sgn * step])
            f1 = float(fun(probe).ravel()[0])
            bound = max(bound, f1 - f0 + abs(f1 - f0))
    return max(bound, 1e-9)


def grid_search_two_frame(
    strategy: str,
    profile: HarvestProfile,
    frame: FrameConfig,
    bat: BatteryParams,
    dist: ChannelDist,
    grid: GridSpec = GridSpec(points=14, levels=6),
) -> OracleResult:
    """Two-frame search: outer scan over the energy parked at the frame
    boundary, inner single-frame searches on each side.

    The storing side uses the idle-then-split charging family evaluated on
    a window grid.  Coarse by construction; the reported bound reflects the
    outer grid only.
    """
    if profile.k != 2:
        raise ValueError("needs a two-frame profile")
    u1, u2 = float(profile.u[0]), float(profile.u[1])
    b0 = bat.b_0
    tau, p_c = frame.tau, frame.p_c
    fcva1 = charge_rate(idle_charge_rate(u1, bat), bat)
    inner = GridSpec(points=max(10, grid.points - 2), levels=grid.levels + 4,
                     budget=grid.budget)
    heff = dist.h / frame.noise_power
    active = _lsc.find_active_layers(dist, frame.noise_power)

    def const_rate(pw):
        if pw <= 0:
            return 0.0
        if strategy == "lsc":
            return _lsc.rate_density_at_power(pw, active, dist.q, heff)
        return float(np.max(dist.q * np.log1p(heff * pw)))

    def frame1_store(t):
        """Best frame-1 rate while raising the level from b0 to t."""
        delta = t - b0
        best = -math.inf
        for phi in np.linspace(tau * 1e-3, tau, 64):
            idle = min((tau - phi) * fcva1, bat.b_max - b0)
            gap = delta - idle
            if gap <= 0:
                d = min(-gap / phi, bat.drain_peak)
                pw = u1 + _fd(d, bat) - p_c
            else:
                w = gap / phi
                if bat.r > 0 and w > bat.v_b**2 / (4 * bat.r):
                    continue
                if bat.r > 0:
                    v = bat.drain_peak * (1 - math.sqrt(max(1 - 4 * bat.r * w / bat.v_b**2, 0.0)))
                else:
                    v = w
                if v > u1 + 1e-15:
                    continue
                pw = u1 - v - p_c
            best = max(best, phi * const_rate(pw))
        return best

    def total_value(t):
        if t <= b0:
            r1 = grid_search_single_frame(
                strategy, b0 - t, u1, frame,
                bat.with_(b_0=0.0, b_max=bat.b_max - t), dist, inner,
            ).objective
        else:
            r1 = frame1_store(t)
            if not math.isfinite(r1):
                return -math.inf
        r2 = grid_search_single_frame(
            strategy, min(t, bat.b_max), u2, frame, bat.with_(b_0=0.0), dist, inner
        ).objective
        return r1 + r2

    t_hi = min(bat.b_max, b0 + tau * fcva1)
    lo, hi = 0.0, max(t_hi, 1e-12)
    best_val, best_t = -math.inf, 0.0
    for _ in range(grid.levels):
        ts = np.linspace(lo, hi, grid.points)
        vals = [total_value(t) for t in ts]
        k = int(np.nanargmax(vals))
        if vals[k] > best_val:
            best_val, best_t = float(vals[k]), float(ts[k])
        step = (hi - lo) / (grid.points - 1)
        lo = max(0.0, best_t - 1.5 * step)
        hi = min(t_hi, best_t + 1.5 * step)
    spacing = (hi - lo) / (grid.points - 1)
    probe = max(
        total_value(min(best_t + spacing, t_hi)),
        total_value(max(best_t - spacing, 0.0)),
    )
    bound = max(2 * abs(probe - best_val), 1e-6)
    return OracleResult(best_val, bound, {"carry": best_t})


# ---------------------------------------------------------------------------
# stationarity residuals


def ideal_rate_stationarity_residuals(powers, dist, noise_power=1.0):
    """Residuals of the layered stationarity chain on an ideal frame.

    For every active layer with positive power, the shadow price times the
    accumulated rate exponential must equal the layer's mass-to-gap ratio.
    The price is fitted on the first such layer; residuals are relative.
    """
    active = _lsc.find_active_layers(dist, noise_power)
    heff = dist.h / noise_power
    powers = np.asarray(powers, dtype=float)
    expcum = _lsc.cumulative_rate_exp(powers, heff)
    gaps = -np.diff(active.s)
    ratios = active.merged_p / gaps
    pos = [l for l in range(active.a) if powers[active.indices[l]] > 1e-15]
    if not pos:
        return np.zeros(0)
    lam = ratios[pos[0]] / expcum[active.indices[pos[0]]]
    res = []
    for l in pos:
        lhs = lam * expcum[active.indices[l]]
        res.append((lhs - ratios[l]) / ratios[l])
    return np.asarray(res)


def kkt_residuals_lsc(alloc, dist, frame, bat) -> np.ndarray:
    """Stationarity residuals of the superposition program at ``alloc``.

    Multipliers are fitted by least squares on the stationarity system
    (rate, drain, window and splitter derivatives), with complementary
    slackness deciding which box multipliers exist.  Returns the residual
    vector; a correct optimum fits to numerical noise.
    """
    k_total = alloc.k
    n = dist.n
    heff = dist.h / frame.noise_power
    s_ext = frame.noise_power * dist.s_ext
    q = dist.q
    rows, rhs = [], []
    # unknown layout: per frame [lam_k, Psi_k, mu_{0..N-1}, omega_beta, omega_phi]
    width = k_total * (n + 4)

    def col(k, name, i=0):
        base = k * (n + 4)
        return {"lam": base, "Psi": base + 1, "mu": base + 2 + i,
                "ob": base + 2 + n, "op": base + 3 + n}[name]

    for k in range(k_total):
        phi = alloc.phi[k]
        if phi <= 0:
            continue
        powers = alloc.powers[k]
        e, beta = alloc.e[k], alloc.beta[k]
        d = e / phi
        expcum = _lsc.cumulative_rate_exp(powers, heff)
        tails = np.zeros(n)
        acc = 0.0
        for i in range(n - 1, -1, -1):
            acc += (s_ext[i] - s_ext[i + 1]) * expcum[i]
            tails[i] = acc
        cums = np.log(expcum)
        # rate stationarity, one equation per layer
        for i in range(n):
            row = np.zeros(width)
            row[col(k, "lam")] = tails[i]
            if powers[i] <= 1e-15:
                row[col(k, "mu", i)] = -1.0
            rows.append(row)
            rhs.append(q[i])
        # drain stationarity (only when energy moves)
        if e > 1e-15:
            row = np.zeros(width)
            fd_p = 1.0 - 2.0 * bat.r * d / bat.v_b**2
            row[col(k, "lam")] = -fd_p
            row[col(k, "Psi")] = 1.0
            rows.append(row)
            rhs.append(0.0)
        # window stationarity at the frame boundary phi = tau
        if abs(phi - frame.tau) < 1e-12:
            row = np.zeros(width)
            lhs40 = float(np.sum(-np.diff(s_ext) * expcum * cums))
            total = float(powers.sum())
            fd_v = _fd(d, bat)
            fd_p = 1.0 - 2.0 * bat.r * d / bat.v_b**2
            row[col(k, "lam")] = total + frame.p_c - lhs40 + d * fd_p - fd_v
            row[col(k, "op")] = 1.0
            row[col(k, "ob")] = -1.0
            rows.append(row)
            rhs.append(0.0)
    a = np.array(rows)
    b = np.array(rhs)
    if a.size == 0:
        return np.zeros(0)
    sol, *_ = np.linalg.lstsq(a, b, rcond=None)
    return a @ sol - b


# ---------------------------------------------------------------------------
# feasibility


@dataclass
class FeasibilityReport:
    """Per-constraint slacks of an allocation; positive means satisfied."""

    slacks: dict
    complementarity: float
    consistency: float

    @property
    def min_slack(self) -> float:
        return min(self.slacks.values()) if self.slacks else 0.0

    def ok(self, tol: float = 1e-9) -> bool:
        return (
            self.min_slack >= -tol
            and self.complementarity <= tol
            and self.consistency <= math.sqrt(tol)
        )


def feasibility_check(
    alloc, profile: HarvestProfile, frame: FrameConfig, bat: BatteryParams
) -> FeasibilityReport:
    """Energy causality, capacity, box and no-simultaneous-charge checks.

    Accepts either allocation type.  Violations are reported as negative
    slacks, never raised.
    """
    tau = frame.tau
    u = np.atleast_1d(profile.u)
    is_ltm = hasattr(alloc, "l")
    slacks = {}
    comp = 0.0
    level = bat.b_0
    min_level = level
    max_level = level
    box = math.inf
    idle_ok = math.inf
    power_balance = math.inf
    consistency = 0.0

    for k in range(alloc.k):
        phi = alloc.phi[k]
        uk = float(u[k]) if k < u.size else float(u[-1])
        fcva = charge_rate(idle_charge_rate(uk, bat), bat)
        box = min(box, phi, tau - phi)
        idle_ok = min(idle_ok, (tau - phi) * fcva - alloc.stored_idle[k] + 1e-15)
        level += alloc.stored_idle[k]
        max_level = max(max_level, level)
        if is_ltm:
            l, be, ee, pw = alloc.l[k], alloc.beta[k], alloc.e[k], alloc.p[k]
            box = min(box, float(np.min(l)), float(np.min(be)),
                      float(np.min(l - be)), float(np.min(ee)),
                      phi - float(l.sum()) + 1e-15)
            for i in range(l.size):
                if l[i] <= 0:
                    continue
                v_i = (1.0 - be[i] / l[i]) * uk
                level += l[i] * charge_rate(v_i, bat)
                level -= ee[i]
                min_level = min(min_level, level)
                max_level = max(max_level, level)
                comp = max(comp, (l[i] - be[i]) * ee[i])
                p_implied = (
                    be[i] * uk / l[i]
                    + _fd(min(ee[i] / l[i], bat.drain_peak), bat)
                    - frame.p_c
                )
                if pw[i] > 0:
                    consistency = max(consistency, abs(p_implied - pw[i]))
        else:
            be, ee = float(alloc.beta[k]), float(alloc.e[k])
            box = min(box, be, ee, phi - be + 1e-15)
            if phi > 0:
                v_tx = (1.0 - be / phi) * uk
                level += phi * charge_rate(v_tx, bat)
                comp = max(comp, (phi - be) * ee)
                total_p = float(alloc.powers[k].sum())
                supplied = be * uk / phi + _fd(min(ee / phi, bat.drain_peak), bat)
                power_balance = min(
                    power_balance, supplied - total_p - frame.p_c
                )
            level -= ee
            min_level = min(min_level, level)
            max_level = max(max_level, level)

    slacks["causality"] = min_level
    slacks["capacity"] = bat.b_max - max_level
    slacks["box"] = box
    slacks["idle_storage"] = idle_ok
    if not is_ltm:
        slacks["transmit_power"] = power_balance if math.isfinite(power_balance) else 0.0
    return FeasibilityReport(
        slacks=slacks, complementarity=comp, consistency=consistency
    )
