"""Time-multiplexed layered schedule optimizers for a single frame.

The frame splits into per-layer partitions transmitted back to back.  With
an ideal battery at most two layers carry information; with resistive
losses and circuit cost the optimum either transmits one layer over a
partial window or two layers over the whole frame, with drain rates tied
together through a common shadow price.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import NoFeasibleTransmission
from .model import (
    BatteryParams,
    ChannelDist,
    FrameConfig,
    charge_rate,
    discharge_delivered,
    idle_charge_rate,
    invert_discharge,
)
from .rootfind import all_roots

__all__ = [
    "LtmAllocation",
    "ltm_average_rate",
    "solve_ltm_single_ideal",
    "solve_ltm_single",
    "two_layer_price_coeffs",
    "two_layer_price_roots",
]

_EPS = 1e-12


@dataclass
class LtmAllocation:
    """Per-frame time-multiplexed schedule.

    Arrays are frame-major: l, beta, e and p are (K, N); phi and
    stored_idle are (K,).  ``p`` holds the per-partition transmit powers,
    ``stored_idle`` the energy banked before transmission starts, and
    ``objective`` the tail-weighted rate total in nats per unit bandwidth.
    """

    l: np.ndarray
    beta: np.ndarray
    e: np.ndarray
    phi: np.ndarray
    p: np.ndarray
    stored_idle: np.ndarray
    per_frame_rate: np.ndarray
    objective: float

    @property
    def k(self) -> int:
        return self.phi.size


def _assemble(frames, dist, frame):
    """Build an allocation from per-frame dicts with keys l, beta, e, p,
    phi, stored_idle."""
    k = len(frames)
    n = dist.n
    l = np.zeros((k, n))
    beta = np.zeros((k, n))
    e = np.zeros((k, n))
    p = np.zeros((k, n))
    phi = np.zeros(k)
    idle = np.zeros(k)
    per = np.zeros(k)
    heff = dist.h / frame.noise_power
    for kk, fr in enumerate(frames):
        l[kk] = fr["l"]
        beta[kk] = fr["beta"]
        e[kk] = fr["e"]
        p[kk] = fr["p"]
        phi[kk] = fr["phi"]
        idle[kk] = fr["stored_idle"]
        good = (l[kk] > 0) & (p[kk] > 0)
        per[kk] = float(np.sum(dist.q[good] * l[kk][good] * np.log1p(heff[good] * p[kk][good])))
    return LtmAllocation(
        l=l, beta=beta, e=e, phi=phi, p=p, stored_idle=idle,
        per_frame_rate=per, objective=float(per.sum()),
    )


def _zero_frame(n):
    return {
        "l": np.zeros(n), "beta": np.zeros(n), "e": np.zeros(n),
        "p": np.zeros(n), "phi": 0.0, "stored_idle": 0.0,
    }


def zero_ltm_allocation(k, dist, frame) -> LtmAllocation:
    return _assemble([_zero_frame(dist.n)] * k, dist, frame)


def ltm_average_rate(
    alloc: LtmAllocation, dist: ChannelDist, k: int = 0, noise_power: float = 1.0
) -> float:
    """Tail-weighted average rate of frame ``k``: sum_i q_i l_i ln(1+h_i P_i)."""
    heff = dist.h / noise_power
    l = alloc.l[k]
    p = alloc.p[k]
    good = (l > 0) & (p > 0)
    return float(np.sum(dist.q[good] * l[good] * np.log1p(heff[good] * p[good])))


# ---------------------------------------------------------------------------
# ideal battery, no circuit cost


def two_layer_price_coeffs(i, j, q, s_eff):
    """Coefficients (a, b) of the price equation ln(x) - a x - b = 0 tying
    two simultaneously transmitting layers together."""
    qi, qj = q[i], q[j]
    si, sj = s_eff[i], s_eff[j]
    a = (si - sj) / (qi - qj)
    b = -1.0 - (qi * math.log(si / qi) - qj * math.log(sj / qj)) / (qi - qj)
    return a, b


def two_layer_price_roots(a, b):
    """Roots of ln(x) - a x - b = 0 for a > 0 (zero, one or two)."""
    x_peak = 1.0 / a
    f_peak = math.log(x_peak) - 1.0 - b
    if f_peak < 0:
        return []
    if f_peak == 0:
        return [x_peak]

    def f(x):
        return math.log(x) - a * x - b

    lo = x_peak
    while f(lo) > 0 and lo > 1e-300:
        lo *= 0.5
    hi = x_peak
    while f(hi) > 0 and hi < 1e300:
        hi *= 2.0
    roots = []
    roots += all_roots(f, lo, x_peak, n=64)
    roots += all_roots(f, x_peak, hi, n=64)
    out = []
    for r in sorted(roots):
        if not out or abs(r - out[-1]) > 1e-12 * max(r, 1.0):
            out.append(r)
    return out


def solve_ltm_single_ideal(
    b0: float, u: float, tau: float, dist: ChannelDist, noise_power: float = 1.0
):
    """Optimal single frame with a lossless battery and no circuit cost.

    Enumerates all layer pairs.  For each, the shared shadow price fixes
    both powers and the energy balance fixes the time split; if that split
    would drain the battery before its own partition ends, the fallback
    drains the battery entirely in the earlier partition and runs the
    later one on harvested power alone.  Single layers are degenerate
    pairs.  The best feasible candidate by average rate wins.
    """
    frame = FrameConfig(tau=tau, p_c=0.0, bandwidth=1.0, n0=noise_power)
    n = dist.n
    heff = dist.h / noise_power
    s_eff = noise_power * dist.s
    q = dist.q
    energy = b0 + u * tau
    if energy <= 0:
        if b0 == 0 and u == 0:
            return zero_ltm_allocation(1, dist, frame)
        raise NoFeasibleTransmission("no energy available")
    pbar = energy / tau

    candidates = []  # (layers, lengths, powers)
    for i in range(n):
        candidates.append(([i], [tau], [pbar]))

    for i in range(n):
        for j in range(i + 1, n):
            a, b = two_layer_price_coeffs(i, j, q, s_eff)
            for price in two_layer_price_roots(a, b):
                pi = max(q[i] / price - s_eff[i], 0.0)
                pj = max(q[j] / price - s_eff[j], 0.0)
                if abs(pi - pj) < 1e-15:
                    continue
                li = (energy - tau * pj) / (pi - pj)
                if not (1e-12 < li < tau - 1e-12):
                    continue
                # battery must survive to the end of the first partition
                if pi > u and li * (pi - u) > b0 + 1e-12 * max(energy, 1.0):
                    continue
                candidates.append(([i, j], [li, tau - li], [pi, pj]))
            # battery exhausted in one partition, the other on harvest alone
            if u > 0 and b0 > 0:
                for bat_layer, free_layer in ((i, j), (j, i)):
                    hb = heff[bat_layer]
                    qb, qf = q[bat_layer], q[free_layer]
                    hf = heff[free_layer]

                    def imbalance(pw, hb=hb, qb=qb, qf=qf, hf=hf):
                        z = hb * pw
                        return (
                            qb * (z - hb * u) / (1.0 + z)
                            - qb * math.log1p(z)
                            + qf * math.log1p(hf * u)
                        )

                    p_lo = u + b0 / tau
                    p_hi = u + b0 / (1e-6 * tau)
                    for pw in all_roots(imbalance, p_lo, p_hi, n=256, log=True):
                        lb = b0 / (pw - u)
                        if not (1e-12 < lb < tau - 1e-12):
                            continue
                        candidates.append(
                            ([bat_layer, free_layer], [lb, tau - lb], [pw, u])
                        )

    best = None
    for layers, lengths, powers in candidates:
        val = sum(
            q[m] * ll * math.log1p(heff[m] * pw)
            for m, ll, pw in zip(layers, lengths, powers)
            if pw > 0 and ll > 0
        )
        if best is None or val > best[0] + 1e-15:
            best = (val, layers, lengths, powers)
    _, layers, lengths, powers = best
    fr = _zero_frame(n)
    fr["phi"] = tau
    for m, ll, pw in zip(layers, lengths, powers):
        fr["l"][m] = ll
        fr["p"][m] = pw
        if pw >= u or u == 0:
            fr["beta"][m] = ll
            fr["e"][m] = (pw - u) * ll
        else:
            # below-harvest power: the surplus charges the battery
            fr["beta"][m] = ll * pw / u
            fr["e"][m] = 0.0
    return _assemble([fr], dist, frame)


# ---------------------------------------------------------------------------
# resistive battery and circuit cost

_CONTEXT_CACHE: dict = {}
_CONTEXT_CACHE_MAX = 64


def _ctx_key(u, frame, bat, dist):
    return (
        round(u, 15), frame.tau, frame.p_c, frame.noise_power,
        bat.r, bat.v_b, dist.h.tobytes(), dist.p.tobytes(),
    )


class LtmFrameContext:
    """Per-harvest-level precomputation for the single-frame solver.

    The stationary drain rates of both the lone-partition and the paired
    regimes depend on the harvest, the channel and the battery but not on
    the stored energy, so they are solved once and reused across battery
    states (the dynamic-programming tables lean on this heavily).
    """

    def __init__(self, u, frame, bat, dist):
        self.u = float(u)
        self.frame = frame
        self.bat = bat
        self.dist = dist
        self.tau = frame.tau
        self.p_c = frame.p_c
        self.heff = dist.h / frame.noise_power
        self.q = dist.q
        self.n = dist.n
        self.va = idle_charge_rate(u, bat)
        self.fcva = charge_rate(self.va, bat)
        self.d_peak = bat.drain_peak
        self.d_hi = bat.drain_peak * (1 - 1e-12) if bat.r > 0 else 1e4
        self._x_lo = self._drain_floors()
        self.lone_roots = [self._lone_drain_roots(i) for i in range(self.n)]
        self.pair_roots = self._paired_drain_roots()

    # -- helpers ----------------------------------------------------------

    def _fd(self, x):
        return x - self.bat.r * x * x / self.bat.v_b**2

    def _fd_prime(self, x):
        return 1.0 - 2.0 * self.bat.r * x / self.bat.v_b**2

    def _power(self, x):
        return self.u + self._fd(x) - self.p_c

    def _drain_floors(self):
        """Per-layer minimum drain rate for a positive transmit power."""
        if self.u >= self.p_c:
            return np.zeros(self.n)
        need = self.p_c - self.u
        if self.bat.r > 0 and need >= self.bat.max_delivered:
            return np.full(self.n, math.inf)
        base = invert_discharge(need, self.bat)
        return np.full(self.n, base * (1 + 1e-12) + 1e-300)

    def _lone_drain_roots(self, i):
        """Drain rates balancing window extension against battery loss for
        a single transmitting partition."""
        x_lo = self._x_lo[i]
        if not math.isfinite(x_lo) or x_lo >= self.d_hi:
            return []
        h = self.heff[i]
        fcva = self.fcva

        def balance(x):
            pw = self._power(x)
            z = h * pw
            if z <= -1.0:
                return math.nan
            return h * (x + fcva) * self._fd_prime(x) - (1.0 + z) * math.log1p(z)

        hi = self.d_hi
        if self.bat.r == 0:
            hi = max(1.0, 2 * x_lo)
            while balance(hi) > 0 and hi < 1e12:
                hi *= 4.0
        return all_roots(balance, x_lo * (1 + 1e-12) + 1e-300, hi, n=256)

    def _price(self, i, x):
        pw = self._power(x)
        return self.heff[i] * self.q[i] * self._fd_prime(x) / (1.0 + self.heff[i] * pw)

    def _drain_at_price(self, i, price):
        """Invert the decreasing price profile of layer i."""
        lo, hi = self._x_lo[i], self.d_hi
        if not math.isfinite(lo) or self._price(i, lo) < price:
            return None
        if self._price(i, hi) > price:
            return hi
        for _ in range(80):
            mid = 0.5 * (lo + hi)
            if self._price(i, mid) > price:
                lo = mid
            else:
                hi = mid
        return 0.5 * (lo + hi)

    def _window_value(self, i, x):
        """Shadow value of lengthening the frame for layer i at drain x."""
        pw = self._power(x)
        z = self.heff[i] * pw
        return self.q[i] * math.log1p(z) - self.heff[i] * self.q[i] * (
            x + self.fcva
        ) * self._fd_prime(x) / (1.0 + z)

    def _paired_drain_roots(self):
        """For each layer pair, drain rates with matched price and matched
        window value, independent of the stored energy."""
        out = {}
        for i in range(self.n):
            if not math.isfinite(self._x_lo[i]):
                continue
            for j in range(i + 1, self.n):
                if not math.isfinite(self._x_lo[j]):
                    continue

                def mismatch(xi, i=i, j=j):
                    price = self._price(i, xi)
                    xj = self._drain_at_price(j, price)
                    if xj is None:
                        return math.nan
                    return self._window_value(i, xi) - self._window_value(j, xj)

                lo = self._x_lo[i] * (1 + 1e-9) + 1e-300
                pairs = []
                for xi in all_roots(mismatch, lo, self.d_hi, n=192):
                    xj = self._drain_at_price(j, self._price(i, xi))
                    if xj is not None:
                        pairs.append((xi, xj))
                if pairs:
                    out[(i, j)] = pairs
        return out

    # -- solving ----------------------------------------------------------

    def lone_candidates(self, b0, cap):
        """One-layer partial-window candidates: (obj, i, l_raw, l, e, p)."""
        res = []
        tau, fcva = self.tau, self.fcva
        for i in range(self.n):
            for x in self.lone_roots[i]:
                if x + fcva <= 0:
                    continue
                l_raw = (b0 + tau * fcva) / (x + fcva)
                l = l_raw
                if fcva > 0:
                    l = min(l, cap / fcva)
                l = min(l, tau)
                if l <= 0:
                    continue
                e = min(x * l, b0 + (tau - l) * fcva, cap)
                xe = min(e / l, self.d_peak)
                pw = self._power(xe)
                if pw <= 0:
                    continue
                obj = self.q[i] * l * math.log1p(self.heff[i] * pw)
                res.append((obj, i, l_raw, l, e, pw))
        return res

    def full_window_candidates(self, b0, cap):
        """Whole-frame candidates: list of per-partition tuples."""
        tau = self.tau
        avail = min(b0, cap)
        cands = []
        # all stored energy through one partition
        for i in range(self.n):
            x = min(avail / tau, self.d_peak) if avail > 0 else 0.0
            e = x * tau
            pw = self._power(x)
            if pw > 0:
                cands.append([(i, tau, e, pw)])
        # matched two-partition splits
        for (i, j), pairs in self.pair_roots.items():
            for xi, xj in pairs:
                if abs(xi - xj) < 1e-15:
                    continue
                li = (avail - tau * xj) / (xi - xj)
                hi_l = tau
                if self.fcva > 0:
                    hi_l = min(hi_l, cap / self.fcva)
                li = min(max(li, 0.0), hi_l)
                if li <= 1e-12 or li >= tau - 1e-12:
                    continue
                ei, ej = xi * li, xj * (tau - li)
                if ei > avail + 1e-9:
                    cands.extend(self._early_exhaustion(i, j, avail, cap))
                    continue
                pi, pj = self._power(xi), self._power(xj)
                part = []
                if pi > 0:
                    part.append((i, li, ei, pi))
                if pj > 0:
                    part.append((j, tau - li, ej, pj))
                if part:
                    cands.append(part)
        # battery drained entirely in one partition, the other direct-only
        if self.u > self.p_c and avail > 0:
            for i in range(self.n):
                for j in range(self.n):
                    if i == j:
                        continue
                    cands.extend(self._early_exhaustion(i, j, avail, cap))
        return cands

    def _early_exhaustion(self, i, j, avail, cap):
        """Battery emptied within partition i; partition j runs on harvest."""
        if self.u <= self.p_c or avail <= 0:
            return []
        tau = self.tau
        p_free = self.u - self.p_c
        zj = self.heff[j] * p_free

        def balance(l):
            x = min(avail / l, self.d_peak)
            pw = self._power(x)
            z = self.heff[i] * pw
            if z <= -1 or pw <= 0:
                return math.nan
            lhs = self.heff[i] * self.q[i] * (x + self.fcva) * self._fd_prime(x) / (1.0 + z)
            return lhs - self.q[i] * math.log1p(z) + self.q[j] * math.log1p(zj)

        l_lo = avail / self.d_peak if math.isfinite(self.d_peak) else 1e-9 * tau
        l_lo = max(l_lo, 1e-9 * tau)
        out = []
        for l in all_roots(balance, l_lo, tau * (1 - 1e-12), n=192):
            li = l
            if self.fcva > 0:
                li = min(li, cap / self.fcva)
            x = min(avail / li, self.d_peak)
            pw = self._power(x)
            if pw <= 0:
                continue
            part = [(i, li, x * li, pw)]
            if tau - li > 1e-12:
                part.append((j, tau - li, 0.0, p_free))
            out.append(part)
        return out

    def evaluate(self, parts):
        return sum(
            self.q[m] * ll * math.log1p(self.heff[m] * pw)
            for m, ll, ee, pw in parts
            if ll > 0 and pw > 0
        )

    def solve(self, b0, cap=None):
        """Best single-frame schedule given stored energy ``b0``.

        Returns (objective, frame dict).  ``cap`` bounds the battery level
        reachable during the frame (defaults to the battery capacity).
        """
        cap = self.bat.b_max if cap is None else cap
        n, tau = self.n, self.tau
        if b0 <= 0 and self.u <= 0:
            return 0.0, _zero_frame(n)
        lone = self.lone_candidates(b0, cap)
        best_lone = max(lone, default=None, key=lambda t: t[0])
        if best_lone is not None and best_lone[2] < tau * (1 - 1e-12):
            obj, i, _, l, e, pw = best_lone
            fr = _zero_frame(n)
            fr["phi"] = l
            fr["l"][i] = l
            fr["beta"][i] = l
            fr["e"][i] = e
            fr["p"][i] = pw
            fr["stored_idle"] = min(e - min(b0, e), (tau - l) * self.fcva)
            return obj, fr
        best_val, best_parts = -math.inf, None
        for parts in self.full_window_candidates(b0, cap):
            val = self.evaluate(parts)
            if val > best_val + 1e-15:
                best_val, best_parts = val, parts
        if best_parts is None or best_val <= 0:
            if b0 <= 0 and self.u <= 0:
                return 0.0, _zero_frame(n)
            raise NoFeasibleTransmission(
                "available energy cannot run the transmitter at a positive rate"
            )
        fr = _zero_frame(n)
        fr["phi"] = tau
        for m, ll, ee, pw in best_parts:
            fr["l"][m] = ll
            fr["beta"][m] = ll
            fr["e"][m] = ee
            fr["p"][m] = pw
        return best_val, fr


def ltm_frame_context(u, frame, bat, dist) -> LtmFrameContext:
    key = _ctx_key(u, frame, bat, dist)
    ctx = _CONTEXT_CACHE.get(key)
    if ctx is None:
        ctx = LtmFrameContext(u, frame, bat, dist)
        if len(_CONTEXT_CACHE) >= _CONTEXT_CACHE_MAX:
            _CONTEXT_CACHE.pop(next(iter(_CONTEXT_CACHE)))
        _CONTEXT_CACHE[key] = ctx
    return ctx


def solve_ltm_single(
    b0: float, u: float, frame: FrameConfig, bat: BatteryParams, dist: ChannelDist
) -> LtmAllocation:
    """Optimal single-frame time-multiplexed schedule.

    With a lossless battery and no circuit cost this reduces to the
    two-layer closed form over the whole frame.  Otherwise the one-layer
    partial-window candidates are tried first; if the best of them wants
    the whole frame, the paired whole-frame candidates decide.
    """
    if bat.r == 0 and frame.p_c == 0:
        return solve_ltm_single_ideal(
            min(b0, bat.b_max), u, frame.tau, dist, frame.noise_power
        )
    ctx = ltm_frame_context(u, frame, bat, dist)
    _, fr = ctx.solve(min(b0, bat.b_max))
    return _assemble([fr], dist, frame)
