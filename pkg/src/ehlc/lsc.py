"""Superposition-coding schedule optimizers.

Layer powers are superimposed; at the receiver, higher layers interfere
with lower ones, so the per-layer spectral rates nest multiplicatively.
The single-frame optimum has a capped water-filling structure: every
active layer except the lowest has a power ceiling fixed by the channel
statistics alone, and the frame's power budget is poured into the highest
layer first, overflowing downward.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import NoFeasibleTransmission, SolverDidNotConverge
from .model import (
    BatteryParams,
    ChannelDist,
    FrameConfig,
    HarvestProfile,
    charge_rate,
    discharge_delivered,
    idle_charge_rate,
    invert_discharge,
)

__all__ = [
    "ActiveLayerSet",
    "LscAllocation",
    "lsc_rates_from_powers",
    "total_power_from_rates",
    "find_active_layers",
    "pmax_thresholds",
    "layered_water_filling",
    "interior_power_profile",
    "reference_power_profile",
    "reference_stationarity_residual",
    "solve_lsc_single",
    "solve_lsc_multiframe_ideal",
]


# ---------------------------------------------------------------------------
# rates <-> powers


def lsc_rates_from_powers(powers, phi, dist: ChannelDist, noise_power=1.0):
    """Per-layer rates over a transmission window of length ``phi``.

    Layer i sees the aggregate power of all higher layers as interference:
    R_i = phi * ln(1 + h_i P_i / (1 + h_i sum_{j>i} P_j)).
    """
    powers = np.asarray(powers, dtype=float)
    heff = dist.h / noise_power
    above = _interference_above(powers)
    return phi * np.log1p(heff * powers / (1.0 + heff * above))


def _interference_above(powers: np.ndarray) -> np.ndarray:
    """sum_{j>i} P_j for each layer i."""
    rev = powers[::-1].cumsum()[::-1]
    return rev - powers


def total_power_from_rates(rates, phi, dist: ChannelDist, noise_power=1.0):
    """Total transmit power reproducing the given per-layer rates.

    Inverse of :func:`lsc_rates_from_powers` summed over layers:
    sum_i s_i g(R_i) prod_{l<i} (g(R_l) + 1), with g = inv_rate and the
    inverse gains scaled by the noise power.
    """
    rates = np.asarray(rates, dtype=float)
    s_eff = noise_power * dist.s
    g = np.expm1(rates / phi)
    prods = np.cumprod(g + 1.0)
    shifted = np.concatenate(([1.0], prods[:-1]))
    return float(np.sum(s_eff * g * shifted))


# ---------------------------------------------------------------------------
# active layers and layered water-filling


@dataclass(frozen=True, eq=False)
class ActiveLayerSet:
    """Layers that can receive positive power under optimality.

    ``indices`` are 0-based positions into the source distribution, always
    starting at layer 0.  ``merged_p`` carries the probability mass folded
    down from removed layers, ``s`` the survivors' inverse gains with the
    sentinel 0 appended, and ``pmax`` the per-layer power ceilings (the
    lowest survivor is uncapped).
    """

    indices: np.ndarray
    merged_p: np.ndarray
    s: np.ndarray
    pmax: np.ndarray = field(init=False)
    n_layers: int = 0

    def __post_init__(self):
        object.__setattr__(self, "pmax", pmax_thresholds(self))

    @property
    def a(self) -> int:
        return self.indices.size

    def ratios(self) -> np.ndarray:
        """The merged-mass to gain-gap ratios, strictly increasing."""
        return self.merged_p / -np.diff(self.s)


def find_active_layers(dist: ChannelDist, noise_power=1.0) -> ActiveLayerSet:
    """Identify the layers worth transmitting on, merging the rest.

    A layer whose mass-to-gap ratio does not strictly exceed its
    predecessor's would demand a negative rate, so its mass is folded into
    the predecessor.  Merging repeats until the ratio chain is strictly
    increasing.
    """
    s_full = noise_power * dist.s
    active = list(range(dist.n))
    mass = dist.p.astype(float).copy()
    while True:
        s_act = np.append(s_full[active], 0.0)
        gaps = -np.diff(s_act)
        ratios = mass[active] / gaps
        bad = np.nonzero(ratios[1:] <= ratios[:-1])[0]
        if bad.size == 0:
            break
        j = int(bad[0]) + 1
        mass[active[j - 1]] += mass[active[j]]
        del active[j]
    idx = np.array(active, dtype=int)
    return ActiveLayerSet(
        indices=idx,
        merged_p=mass[idx],
        s=np.append(s_full[idx], 0.0),
        n_layers=dist.n,
    )


def pmax_thresholds(active: ActiveLayerSet) -> np.ndarray:
    """Power ceilings for each active layer; the lowest one is unbounded.

    Each ceiling depends only on the merged masses and inverse-gain gaps,
    never on the available power.
    """
    a = active.a
    gaps = -np.diff(active.s)
    pm = active.merged_p
    caps = np.empty(a)
    caps[0] = math.inf
    # growth factor between consecutive active layers in the stationarity chain
    ratio = np.empty(a)
    ratio[0] = math.nan
    for l in range(1, a):
        ratio[l] = pm[l] * gaps[l - 1] / (pm[l - 1] * gaps[l])
    for l in range(1, a):
        acc = gaps[l]
        grow = 1.0
        for j in range(l + 1, a):
            grow *= ratio[j]
            acc += gaps[j] * grow
        caps[l] = (ratio[l] - 1.0) * acc
    return caps


def layered_water_filling(p_total: float, active: ActiveLayerSet) -> np.ndarray:
    """Split a power budget across layers, filling from the top down.

    Each active layer takes at most its ceiling; whatever remains overflows
    to the next lower layer.  The lowest layer absorbs any excess since it
    is uncapped.  Returns a full-length power vector with zeros on merged
    layers; the entries sum to ``p_total`` exactly.
    """
    powers = np.zeros(active.n_layers)
    remaining = float(p_total)
    if remaining <= 0:
        return powers
    for l in range(active.a - 1, 0, -1):
        take = min(active.pmax[l], remaining)
        powers[active.indices[l]] = take
        remaining -= take
        if remaining <= 0:
            return powers
    powers[active.indices[0]] = remaining
    return powers


def waterfill_batch(p_totals: np.ndarray, active: ActiveLayerSet) -> np.ndarray:
    """Vectorized :func:`layered_water_filling` over many budgets."""
    p_totals = np.asarray(p_totals, dtype=float)
    out = np.zeros(p_totals.shape + (active.n_layers,))
    remaining = np.clip(p_totals, 0.0, None)
    for l in range(active.a - 1, 0, -1):
        take = np.minimum(active.pmax[l], remaining)
        out[..., active.indices[l]] = take
        remaining = remaining - take
    out[..., active.indices[0]] = np.clip(remaining, 0.0, None)
    return out


def rate_density_at_power(p_total, active: ActiveLayerSet, q, heff):
    """Tail-weighted spectral rate per second at a given total power.

    Accepts scalar or array budgets; water-fills, then evaluates the
    layered rate sum.
    """
    arr = np.asarray(p_total, dtype=float)
    powers = waterfill_batch(arr, active)
    above = np.flip(np.cumsum(np.flip(powers, -1), -1), -1) - powers
    dens = np.log1p(heff * powers / (1.0 + heff * above))
    val = np.sum(q * dens, axis=-1)
    return float(val) if arr.ndim == 0 else val


def cumulative_rate_exp(powers, heff) -> np.ndarray:
    """exp of the running per-second rate sum, exp(sum_{j<=i} R_j / phi)."""
    powers = np.asarray(powers, dtype=float)
    above = _interference_above(powers)
    dens = np.log1p(heff * powers / (1.0 + heff * above))
    return np.exp(np.cumsum(dens))


# ---------------------------------------------------------------------------
# allocations


@dataclass
class LscAllocation:
    """Per-frame superposition schedule.

    Arrays are frame-major: powers/rates are (K, N); beta, e, phi and
    stored_idle are (K,).  ``stored_idle`` is the energy banked during the
    non-transmission phase (after any capacity clamp), ``e`` the energy
    drawn from the battery during transmission.  ``objective`` is the
    tail-weighted rate total in nats (per unit bandwidth) over all frames.
    """

    powers: np.ndarray
    rates: np.ndarray
    beta: np.ndarray
    e: np.ndarray
    phi: np.ndarray
    stored_idle: np.ndarray
    per_frame_rate: np.ndarray
    objective: float

    @property
    def k(self) -> int:
        return self.phi.size

    def total_power(self, k=0) -> float:
        return float(self.powers[k].sum())


def _frame_rows(powers_rows, phi, beta, e, stored_idle, dist, frame):
    k = len(powers_rows)
    n = dist.n
    powers = np.zeros((k, n))
    rates = np.zeros((k, n))
    per = np.zeros(k)
    for i, row in enumerate(powers_rows):
        powers[i] = row
        if phi[i] > 0:
            rates[i] = lsc_rates_from_powers(
                row, phi[i], dist, frame.noise_power
            )
        per[i] = float(np.dot(dist.q, rates[i]))
    return LscAllocation(
        powers=powers,
        rates=rates,
        beta=np.asarray(beta, dtype=float),
        e=np.asarray(e, dtype=float),
        phi=np.asarray(phi, dtype=float),
        stored_idle=np.asarray(stored_idle, dtype=float),
        per_frame_rate=per,
        objective=float(per.sum()),
    )


def zero_lsc_allocation(k, dist, frame) -> LscAllocation:
    return _frame_rows(
        [np.zeros(dist.n)] * k,
        np.zeros(k),
        np.zeros(k),
        np.zeros(k),
        np.zeros(k),
        dist,
        frame,
    )


# ---------------------------------------------------------------------------
# reference powers for the partial-duration regime

_REFERENCE_CACHE: dict = {}


def _ref_key(frame, bat, dist):
    return (
        frame.p_c,
        frame.noise_power,
        bat.r,
        bat.v_b,
        tuple(dist.h),
        tuple(dist.p),
    )


def interior_power_profile(
    frame: FrameConfig, bat: BatteryParams, dist: ChannelDist, u: float = 0.0
) -> np.ndarray:
    """Layer powers of a frame transmitting over a partial window.

    When the transmit window is interior, the powers are window-free: they
    balance the marginal rate of extending the window against the marginal
    battery loss of draining faster, with the idle charge rate earned back
    per second of shortening.  The harvest enters only through that idle
    charge rate and through the direct power offset.  Cached per
    (frame, battery, channel, harvest).
    """
    key = _ref_key(frame, bat, dist) + (round(float(u), 15),)
    hit = _REFERENCE_CACHE.get(key)
    if hit is not None:
        return hit.copy()
    if bat.r > 0 and u + bat.max_delivered <= frame.p_c:
        raise NoFeasibleTransmission(
            "battery cannot deliver the circuit power at any drain rate"
        )
    heff = dist.h / frame.noise_power
    active = find_active_layers(dist, frame.noise_power)
    if frame.p_c == 0 and u == 0:
        out = np.zeros(dist.n)
        _REFERENCE_CACHE[key] = out
        return out.copy()
    gaps = -np.diff(np.append(frame.noise_power * dist.s, 0.0))
    fcva = charge_rate(idle_charge_rate(u, bat), bat)
    s_lo = max(u - frame.p_c, 0.0)

    def balance(total):
        powers = layered_water_filling(total, active)
        expcum = cumulative_rate_exp(powers, heff)
        cum = np.log(expcum)
        lhs = float(np.sum(gaps * expcum * cum))
        d = invert_discharge(total + frame.p_c - u, bat)
        fd_p = 1.0 - 2.0 * bat.r * d / bat.v_b**2
        return lhs - fd_p * (d + fcva)

    if bat.r > 0:
        hi = (u + bat.max_delivered - frame.p_c) * (1.0 - 1e-12)
    else:
        hi = max(1.0, 2 * s_lo)
        while balance(hi) < 0 and hi < 1e12:
            hi *= 2.0
    lo = s_lo
    f_lo, f_hi = balance(lo), balance(hi)
    if f_lo >= 0:
        # direct power alone already saturates the window trade-off
        out = layered_water_filling(s_lo, active)
        _REFERENCE_CACHE[key] = out
        return out.copy()
    if f_hi < 0:
        raise SolverDidNotConverge(
            "interior power balance has no bracketed root", residual=abs(f_hi)
        )
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if balance(mid) <= 0:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-15 * max(hi, 1.0):
            break
    total = 0.5 * (lo + hi)
    out = layered_water_filling(total, active)
    _REFERENCE_CACHE[key] = out
    return out.copy()


def reference_power_profile(
    frame: FrameConfig, bat: BatteryParams, dist: ChannelDist
) -> np.ndarray:
    """Partial-window layer powers of the zero-harvest normalization.

    Depends only on the channel statistics, the circuit power and the
    battery; computed once per system and cached.
    """
    return interior_power_profile(frame, bat, dist, 0.0)


def reference_stationarity_residual(powers, frame, bat, dist, u: float = 0.0) -> float:
    """Residual of the window-free power balance at the given powers."""
    heff = dist.h / frame.noise_power
    gaps = -np.diff(np.append(frame.noise_power * dist.s, 0.0))
    expcum = cumulative_rate_exp(powers, heff)
    cum = np.log(expcum)
    lhs = float(np.sum(gaps * expcum * cum))
    total = float(np.sum(powers))
    d = invert_discharge(max(total + frame.p_c - u, 0.0), bat)
    fd_p = 1.0 - 2.0 * bat.r * d / bat.v_b**2
    fcva = charge_rate(idle_charge_rate(u, bat), bat)
    return lhs - fd_p * (d + fcva)


# ---------------------------------------------------------------------------
# single frame


def _capped_delivered(e, phi, bat):
    """Power delivered when draining energy ``e`` uniformly over ``phi``."""
    if phi <= 0 or e <= 0:
        return 0.0, 0.0
    d = min(e / phi, bat.drain_peak)
    return discharge_delivered(d, bat), d * phi


def solve_lsc_single(
    b0: float, u: float, frame: FrameConfig, bat: BatteryParams, dist: ChannelDist
) -> LscAllocation:
    """Optimal single-frame superposition schedule.

    Charges at the best uniform rate while idle, then transmits over the
    longest window whose delivered power sustains the reference layer
    powers; if even the full frame can sustain more, it transmits the whole
    frame at whatever the budget allows, water-filled across layers.
    """
    tau, p_c = frame.tau, frame.p_c
    active = find_active_layers(dist, frame.noise_power)
    if b0 <= 0 and u <= 0:
        return zero_lsc_allocation(1, dist, frame)
    if bat.r == 0 and p_c == 0:
        total = u + min(b0, bat.b_max) / tau
        powers = layered_water_filling(total, active)
        return _frame_rows(
            [powers], [tau], [tau], [min(b0, bat.b_max)], [0.0], dist, frame
        )

    va = idle_charge_rate(u, bat)
    fcva = charge_rate(va, bat)

    def stored_at(phi):
        return min(b0 + (tau - phi) * fcva, bat.b_max)

    try:
        ref = interior_power_profile(frame, bat, dist, u)
        s_ref = float(ref.sum())
    except NoFeasibleTransmission:
        ref, s_ref = None, 0.0

    def gap(phi):
        delivered, _ = _capped_delivered(stored_at(phi), phi, bat)
        return delivered + u - s_ref - p_c

    phi_star = None
    if ref is not None and s_ref > 0:
        if gap(tau) >= 0:
            phi_star = tau
        else:
            # largest window still able to sustain the reference powers
            grid = np.linspace(tau, tau * 1e-9, 256)
            vals = [gap(x) for x in grid]
            for a_i in range(len(grid) - 1):
                if vals[a_i] < 0 <= vals[a_i + 1]:
                    lo, hi = grid[a_i + 1], grid[a_i]
                    for _ in range(100):
                        mid = 0.5 * (lo + hi)
                        if gap(mid) >= 0:
                            lo = mid
                        else:
                            hi = mid
                    phi_star = lo
                    break
            if phi_star is not None:
                e_all = stored_at(phi_star)
                powers = ref
                return _frame_rows(
                    [powers],
                    [phi_star],
                    [phi_star],
                    [e_all],
                    [e_all - b0],
                    dist,
                    frame,
                )

    # full-frame transmission on whatever the budget delivers
    delivered, e_used = _capped_delivered(min(b0, bat.b_max), tau, bat)
    p_tau = u + delivered - p_c
    if phi_star == tau or p_tau > 0:
        if p_tau <= 0:
            return zero_lsc_allocation(1, dist, frame)
        powers = layered_water_filling(p_tau, active)
        return _frame_rows(
            [powers], [tau], [tau], [e_used], [0.0], dist, frame
        )
    raise NoFeasibleTransmission(
        "available energy cannot run the transmitter at a positive rate"
    )


# ---------------------------------------------------------------------------
# multi-frame, lossless battery and no circuit cost


def _taut_string(ceiling: np.ndarray, floor: np.ndarray) -> np.ndarray:
    """Shortest cumulative-energy path inside the causality corridor.

    ``ceiling``/``floor`` are the cumulative bounds at frame boundaries
    1..K with ceiling[K-1] == floor[K-1] pinning the endpoint.  Returns the
    cumulative consumption path (length K).
    """
    k_total = ceiling.size
    path = np.zeros(k_total)
    k0, c0 = 0, 0.0
    while k0 < k_total:
        steps = np.arange(k0 + 1, k_total + 1) - k0
        ce_slopes = (ceiling[k0:] - c0) / steps
        fl_slopes = (floor[k0:] - c0) / steps
        # longest straight run: floor never demands more than ceiling allows
        run = k_total - k0
        ce_min = math.inf
        fl_max = -math.inf
        feas_end = 0
        for m in range(run):
            ce_min = min(ce_min, ce_slopes[m])
            fl_max = max(fl_max, fl_slopes[m])
            if fl_max > ce_min + 1e-15:
                break
            feas_end = m + 1
        if feas_end == run:
            s = (ceiling[-1] - c0) / (k_total - k0)
            for m in range(k0, k_total):
                path[m] = c0 + s * (m + 1 - k0)
            break
        ce_r = ce_slopes[:feas_end]
        fl_r = fl_slopes[:feas_end]
        next_fl = fl_slopes[feas_end]
        if next_fl > np.min(ce_r) + 1e-15:
            # a steeper floor ahead: hug the ceiling (battery empties here)
            s = float(np.min(ce_r))
            j = int(np.nonzero(ce_r <= s + 1e-15)[0][-1])
        else:
            # a lower ceiling ahead: hug the floor (battery fills here)
            s = float(np.max(fl_r))
            j = int(np.nonzero(fl_r >= s - 1e-15)[0][-1])
        for m in range(j + 1):
            path[k0 + m] = c0 + s * (m + 1)
        k0 = k0 + j + 1
        c0 = path[k0 - 1]
    return path


def solve_lsc_multiframe_ideal(
    profile: HarvestProfile,
    b0: float,
    b_max: float,
    frame: FrameConfig,
    dist: ChannelDist,
) -> LscAllocation:
    """Optimal multi-frame schedule for a lossless battery and no circuit cost.

    The per-frame uniform powers form the taut string between the
    cumulative-harvest ceiling and the capacity floor: powers are
    non-decreasing wherever capacity does not bind, stepping up exactly
    when the battery empties.  Within each frame the power splits across
    layers by layered water-filling.
    """
    u = profile.u
    k_total = profile.k
    tau = frame.tau
    active = find_active_layers(dist, frame.noise_power)
    ceiling = b0 + np.cumsum(u) * tau
    floor = np.maximum(ceiling - b_max, 0.0)
    floor[-1] = ceiling[-1]
    path = _taut_string(ceiling, floor)
    p_frames = np.diff(np.concatenate(([0.0], path))) / tau
    p_frames = np.clip(p_frames, 0.0, None)
    rows, phi, beta, e, idle = [], [], [], [], []
    for k in range(k_total):
        rows.append(layered_water_filling(p_frames[k], active))
        phi.append(tau)
        draw = max(p_frames[k] - u[k], 0.0) * tau
        e.append(draw)
        if u[k] > 0:
            beta.append(tau * min(p_frames[k] / u[k], 1.0))
        else:
            beta.append(tau)
        idle.append(0.0)
    return _frame_rows(rows, phi, beta, e, idle, dist, frame)
