"""Inter-frame energy transfer machinery.

A single frame that must move the battery from one level to another is a
one-dimensional family: the transmit window length fixes how much energy
the idle phase banks, and the gap to the target level is closed either by
draining during transmission or by splitting harvested power into a
concurrent charge.  Offline multi-frame solvers and the online policies
all reduce their inner step to this family plus the exact single-frame
solvers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import lsc as _lsc
from . import ltm as _ltm
from .errors import NoFeasibleTransmission
from .model import (
    BatteryParams,
    ChannelDist,
    FrameConfig,
    HarvestProfile,
    charge_rate,
    idle_charge_rate,
    invert_discharge,
)
from .rootfind import all_roots, golden_max

__all__ = [
    "StageEnv",
    "FrameAction",
    "solve_ltm_multiframe_convex",
    "solve_ltm_two_frame",
    "solve_lsc_two_frame",
    "battery_level_after",
]


def _charge_inverse(w, bat):
    """Smallest charge power whose accumulation rate is ``w``."""
    if bat.r == 0:
        return w
    cap = bat.v_b**2 / (4.0 * bat.r)
    if w > cap:
        return math.inf
    ratio = min(4.0 * bat.r * w / bat.v_b**2, 1.0)
    return bat.drain_peak * (1.0 - math.sqrt(1.0 - ratio))


@dataclass
class FrameAction:
    """One frame of a policy decision, in either strategy's terms."""

    strategy: str
    phi: float
    rate: float
    b_next: float
    l: np.ndarray | None = None
    powers: np.ndarray | None = None
    beta: np.ndarray | float = 0.0
    e: np.ndarray | float = 0.0
    stored_idle: float = 0.0


class StageEnv:
    """Per-harvest-level frame solver used by transfer searches and DP.

    ``draw_rate`` is the exact single-frame optimum when the battery level
    may only fall; ``store_rate`` maximizes the rate of the charging
    family when the level must rise.  ``action`` reconstructs the full
    schedule behind either.
    """

    def __init__(self, strategy, u, frame: FrameConfig, bat: BatteryParams,
                 dist: ChannelDist):
        if strategy not in ("ltm", "lsc"):
            raise ValueError("strategy must be 'ltm' or 'lsc'")
        self.strategy = strategy
        self.u = float(u)
        self.frame = frame
        self.bat = bat
        self.dist = dist
        self.tau = frame.tau
        self.p_c = frame.p_c
        self.heff = dist.h / frame.noise_power
        self.q = dist.q
        self.va = idle_charge_rate(u, bat)
        self.fcva = charge_rate(self.va, bat)
        self.d_peak = bat.drain_peak
        if strategy == "lsc":
            self.active = _lsc.find_active_layers(dist, frame.noise_power)
            try:
                self.ref_powers = _lsc.interior_power_profile(frame, bat, dist, self.u)
                self.ref_total = float(self.ref_powers.sum())
            except NoFeasibleTransmission:
                self.ref_powers, self.ref_total = None, 0.0
            self.ref_rate = (
                _lsc.rate_density_at_power(self.ref_total, self.active, self.q, self.heff)
                if self.ref_total > 0
                else 0.0
            )
            self.ctx = None
        else:
            self.ctx = _ltm.ltm_frame_context(u, frame, bat, dist)

    # -- constant-power rate ------------------------------------------------

    def rate_power(self, p):
        """Tail-weighted spectral rate per second at constant power ``p``."""
        arr = np.asarray(p, dtype=float)
        pos = np.clip(arr, 0.0, None)
        if self.strategy == "lsc":
            val = _lsc.rate_density_at_power(pos, self.active, self.q, self.heff)
        else:
            val = np.max(
                self.q * np.log1p(np.multiply.outer(pos, self.heff)), axis=-1
            )
            val = float(val) if arr.ndim == 0 else val
        if arr.ndim == 0:
            return float(val) if arr > 0 else 0.0
        out = np.asarray(val, dtype=float)
        out[arr <= 0] = 0.0
        return out

    def _fd(self, x):
        return x - self.bat.r * x * x / self.bat.v_b**2

    # -- draw side ------------------------------------------------------------

    def draw_rate(self, delta, cap=None):
        """Exact frame objective when ``delta`` joule may leave the battery."""
        cap = self.bat.b_max if cap is None else cap
        if self.strategy == "ltm":
            try:
                obj, _ = self.ctx.solve(max(delta, 0.0), cap)
            except NoFeasibleTransmission:
                return 0.0
            return obj
        return self._lsc_draw(max(delta, 0.0), cap)[0]

    def _lsc_draw(self, delta, cap):
        """Returns (rate, phi, e_used, total_power, interior_flag)."""
        tau, u, p_c = self.tau, self.u, self.p_c
        fcva = self.fcva
        if delta <= 0 and u <= 0:
            return 0.0, 0.0, 0.0, 0.0, False

        def stored_at(phi):
            return min(delta + (tau - phi) * fcva, cap)

        def delivered(phi):
            s = stored_at(phi)
            if phi <= 0 or s <= 0:
                return 0.0, 0.0
            d = min(s / phi, self.d_peak)
            return self._fd(d), d * phi

        d_tau, e_tau = delivered(tau)
        p_tau = u + d_tau - p_c
        if self.ref_powers is not None and self.ref_total > 0:
            gap_tau = p_tau - self.ref_total
            if gap_tau < 0:
                # largest window sustaining the reference powers
                lo_ok, hi_bad = None, tau
                phi = tau
                for _ in range(60):
                    phi *= 0.5
                    dd, _ = delivered(phi)
                    if dd + u - self.ref_total - p_c >= 0:
                        lo_ok = phi
                        break
                    if phi < 1e-12 * tau:
                        break
                if lo_ok is not None:
                    lo, hi = lo_ok, hi_bad
                    for _ in range(80):
                        mid = 0.5 * (lo + hi)
                        dd, _ = delivered(mid)
                        if dd + u - self.ref_total - p_c >= 0:
                            lo = mid
                        else:
                            hi = mid
                    e_used = stored_at(lo)
                    return lo * self.ref_rate, lo, e_used, self.ref_total, True
        if p_tau > 0:
            return tau * self.rate_power(p_tau), tau, e_tau, p_tau, False
        return 0.0, 0.0, 0.0, 0.0, False

    # -- store side -----------------------------------------------------------

    def _store_eval(self, phi, delta, idle_cap):
        """Power and bookkeeping for net-storing ``delta`` with window phi."""
        tau, u, p_c = self.tau, self.u, self.p_c
        idle = min((tau - phi) * self.fcva, idle_cap)
        if phi <= 0:
            return None
        gap = delta - idle
        if gap <= 0:
            d = min(max(-gap, 0.0) / phi, self.d_peak)
            pw = u + self._fd(d) - p_c
            return pw, idle, d * phi, 0.0
        w = gap / phi
        v_t = _charge_inverse(w, self.bat)
        if not math.isfinite(v_t) or v_t > min(u, self.d_peak) + 1e-15:
            return None
        pw = u - v_t - p_c
        return pw, idle, 0.0, v_t

    def store_rate(self, delta, idle_cap=None):
        """Best frame rate while banking ``delta`` joule net."""
        if delta <= 0:
            return self.draw_rate(-delta)
        if self.u <= 0:
            return -math.inf
        idle_cap = math.inf if idle_cap is None else idle_cap
        if delta > self.tau * charge_rate(min(self.u, self.d_peak), self.bat) + 1e-15:
            return -math.inf

        def val(phi):
            ev = self._store_eval(phi, delta, idle_cap)
            if ev is None or ev[0] <= 0:
                return 0.0 if ev is not None else -math.inf
            return phi * self.rate_power(ev[0])

        _, best = golden_max(val, 0.0, self.tau, tol=1e-9 * self.tau, coarse=24)
        return best

    # -- combined -------------------------------------------------------------

    def rate_between(self, b_start, b_end):
        """Best rate moving the battery level from b_start to b_end."""
        if b_end <= b_start:
            return self.draw_rate(b_start - b_end, self.bat.b_max - b_end)
        return self.store_rate(b_end - b_start, self.bat.b_max - b_start)

    def action(self, b_start, b_end) -> FrameAction:
        """Full schedule for the best move from b_start toward b_end.

        The realized end level can exceed ``b_end`` when a drain-rate cap
        strands energy; it never falls below.
        """
        n = self.dist.n
        if b_end <= b_start:
            delta = b_start - b_end
            cap = self.bat.b_max - b_end
            if self.strategy == "ltm":
                try:
                    obj, fr = self.ctx.solve(delta, cap)
                except NoFeasibleTransmission:
                    obj, fr = 0.0, _ltm._zero_frame(n)
                drawn = float(fr["e"].sum())
                level = b_start + fr["stored_idle"] - drawn
                return FrameAction(
                    strategy="ltm", phi=fr["phi"], rate=obj,
                    b_next=min(max(level, b_end), self.bat.b_max),
                    l=fr["l"], powers=fr["p"], beta=fr["beta"], e=fr["e"],
                    stored_idle=fr["stored_idle"],
                )
            rate_v, phi, e_used, total, interior = self._lsc_draw(delta, cap)
            if phi <= 0:
                return FrameAction("lsc", 0.0, 0.0, b_start,
                                   powers=np.zeros(n), beta=0.0, e=0.0)
            powers = (
                self.ref_powers.copy()
                if interior
                else _lsc.layered_water_filling(total, self.active)
            )
            idle = max(e_used - delta, 0.0)
            level = b_start + idle - e_used
            return FrameAction(
                strategy="lsc", phi=phi, rate=rate_v,
                b_next=min(max(level, b_end), self.bat.b_max),
                powers=powers, beta=phi, e=e_used, stored_idle=idle,
            )
        # storing
        delta = b_end - b_start
        idle_cap = self.bat.b_max - b_start

        def val(phi):
            ev = self._store_eval(phi, delta, idle_cap)
            if ev is None:
                return -math.inf
            return phi * self.rate_power(ev[0]) if ev[0] > 0 else 0.0

        phi, _ = golden_max(val, 0.0, self.tau, tol=1e-10 * self.tau, coarse=24)
        ev = self._store_eval(phi, delta, idle_cap)
        if ev is None:
            # bank whatever the idle phase can; no transmission
            idle = min(self.tau * self.fcva, idle_cap)
            return FrameAction(self.strategy, 0.0, 0.0,
                               min(b_start + idle, b_end),
                               powers=np.zeros(n), stored_idle=idle)
        pw, idle, e_used, v_t = ev
        rate_v = phi * self.rate_power(pw) if pw > 0 else 0.0
        stored_tx = phi * charge_rate(v_t, self.bat)
        level = min(b_start + idle + stored_tx - e_used, self.bat.b_max)
        if self.strategy == "ltm":
            l = np.zeros(n)
            beta = np.zeros(n)
            e = np.zeros(n)
            p = np.zeros(n)
            if pw > 0 and phi > 0:
                i = int(np.argmax(self.q * np.log1p(self.heff * max(pw, 0.0))))
                l[i] = phi
                beta[i] = phi * (1.0 - v_t / self.u) if self.u > 0 else phi
                e[i] = e_used
                p[i] = pw
            return FrameAction("ltm", phi if pw > 0 else 0.0, rate_v, level,
                               l=l, powers=p, beta=beta, e=e, stored_idle=idle)
        powers = (
            _lsc.layered_water_filling(pw, self.active) if pw > 0 else np.zeros(n)
        )
        beta = phi * (1.0 - v_t / self.u) if self.u > 0 else phi
        return FrameAction("lsc", phi if pw > 0 else 0.0, rate_v, level,
                           powers=powers, beta=beta, e=e_used, stored_idle=idle)


_ENV_CACHE: dict = {}
_ENV_CACHE_MAX = 96


def stage_env(strategy, u, frame, bat, dist) -> StageEnv:
    key = (strategy, round(float(u), 15), frame.tau, frame.p_c,
           frame.noise_power, bat.r, bat.v_b, bat.b_max,
           dist.h.tobytes(), dist.p.tobytes())
    env = _ENV_CACHE.get(key)
    if env is None:
        env = StageEnv(strategy, u, frame, bat, dist)
        if len(_ENV_CACHE) >= _ENV_CACHE_MAX:
            _ENV_CACHE.pop(next(iter(_ENV_CACHE)))
        _ENV_CACHE[key] = env
    return env


def battery_level_after(action: FrameAction) -> float:
    return action.b_next


# ---------------------------------------------------------------------------
# multi-frame solvers


def _actions_to_ltm_allocation(actions, dist, frame):
    frames = []
    for a in actions:
        frames.append({
            "l": a.l if a.l is not None else np.zeros(dist.n),
            "beta": np.asarray(a.beta) if np.ndim(a.beta) else np.zeros(dist.n),
            "e": np.asarray(a.e) if np.ndim(a.e) else np.zeros(dist.n),
            "p": a.powers if a.powers is not None else np.zeros(dist.n),
            "phi": a.phi,
            "stored_idle": a.stored_idle,
        })
    return _ltm._assemble(frames, dist, frame)


def solve_ltm_multiframe_convex(
    profile: HarvestProfile, frame: FrameConfig, bat: BatteryParams,
    dist: ChannelDist,
) -> _ltm.LtmAllocation:
    """Offline multi-frame optimum in the convex regime.

    Valid when the capacity constraint cannot activate (infinite capacity)
    or the battery is lossless.  Decomposes over the end-of-frame battery
    levels and runs cyclic exact line searches; each frame subproblem is
    solved by the single-frame machinery.
    """
    k_total = profile.k
    envs = [stage_env("ltm", u, frame, bat, dist) for u in profile.u]
    levels = np.zeros(k_total + 1)
    levels[0] = bat.b_0
    cap = bat.b_max

    def seg(k, lo_level, hi_level):
        return envs[k].rate_between(lo_level, hi_level)

    def total():
        return sum(seg(k, levels[k], levels[k + 1]) for k in range(k_total))

    best = total()
    for _ in range(200):
        improved = 0.0
        for k in range(1, k_total + 1):
            lo = 0.0
            hi = min(cap, levels[k - 1] + frame.tau * envs[k - 1].fcva)
            if hi <= lo:
                continue

            def f(t, k=k):
                val = seg(k - 1, levels[k - 1], t)
                if k < k_total:
                    val += seg(k, t, levels[k + 1])
                return val

            t_star, _ = golden_max(f, lo, hi, tol=1e-11 * max(hi, 1.0), coarse=48)
            old = levels[k]
            levels[k] = t_star
            new_total = total()
            if new_total > best + 1e-15:
                improved += new_total - best
                best = new_total
            else:
                levels[k] = old
        if improved < 1e-12 * max(best, 1.0):
            break
    actions = [envs[k].action(levels[k], levels[k + 1]) for k in range(k_total)]
    return _actions_to_ltm_allocation(actions, dist, frame)


def ltm_level_after(alloc: _ltm.LtmAllocation, k, b_before, u, bat, frame):
    """Battery level after frame k of a time-multiplexed allocation."""
    l = alloc.l[k]
    beta = alloc.beta[k]
    stored_tx = 0.0
    for i in range(l.size):
        if l[i] > 0 and beta[i] < l[i] - 1e-15:
            v = (1.0 - beta[i] / l[i]) * u
            stored_tx += l[i] * charge_rate(v, bat)
    level = b_before + alloc.stored_idle[k] + stored_tx - float(alloc.e[k].sum())
    return min(max(level, 0.0), bat.b_max)


def solve_ltm_two_frame(
    profile: HarvestProfile, frame: FrameConfig, bat: BatteryParams,
    dist: ChannelDist,
) -> _ltm.LtmAllocation:
    """Two-frame time-multiplexed optimum with a finite battery.

    Solves the capacity-relaxed convex problem first; if the energy parked
    at the frame boundary fits the battery the relaxed solution is
    returned unchanged, otherwise exactly one battery's worth is carried
    over and the frames are re-solved around that split.
    """
    if profile.k != 2:
        raise ValueError("two-frame solver needs a length-2 profile")
    relaxed = solve_ltm_multiframe_convex(
        profile, frame, bat.with_(b_max=math.inf), dist
    )
    b1 = ltm_level_after(
        relaxed, 0, bat.b_0, profile.u[0], bat.with_(b_max=math.inf), frame
    )
    if b1 <= bat.b_max + 1e-12:
        return relaxed
    env1 = stage_env("ltm", profile.u[0], frame, bat, dist)
    a1 = env1.action(bat.b_0, bat.b_max)
    f2 = _ltm.solve_ltm_single(min(a1.b_next, bat.b_max), profile.u[1], frame, bat, dist)
    frames = [{
        "l": a1.l, "beta": np.asarray(a1.beta), "e": np.asarray(a1.e),
        "p": a1.powers, "phi": a1.phi, "stored_idle": a1.stored_idle,
    }, {
        "l": f2.l[0], "beta": f2.beta[0], "e": f2.e[0], "p": f2.p[0],
        "phi": f2.phi[0], "stored_idle": f2.stored_idle[0],
    }]
    return _ltm._assemble(frames, dist, frame)


# ---------------------------------------------------------------------------
# two-frame superposition


def _lsc_frame_dict(powers, phi, beta, e, stored_idle):
    return {"powers": powers, "phi": phi, "beta": beta, "e": e,
            "stored_idle": stored_idle}


def _combine_lsc(frames, dist, frame):
    return _lsc._frame_rows(
        [f["powers"] for f in frames],
        [f["phi"] for f in frames],
        [f["beta"] for f in frames],
        [f["e"] for f in frames],
        [f["stored_idle"] for f in frames],
        dist, frame,
    )


def lsc_level_after(alloc: _lsc.LscAllocation, k, b_before, u, bat):
    phi, beta = alloc.phi[k], alloc.beta[k]
    stored_tx = 0.0
    if phi > 0 and beta < phi - 1e-15:
        v = (1.0 - beta / phi) * u
        stored_tx = phi * charge_rate(v, bat)
    level = b_before + alloc.stored_idle[k] + stored_tx - alloc.e[k]
    return min(max(level, 0.0), bat.b_max)


def _single_as_frame(alloc: _lsc.LscAllocation):
    return _lsc_frame_dict(
        alloc.powers[0], alloc.phi[0], alloc.beta[0], alloc.e[0],
        alloc.stored_idle[0],
    )


def solve_lsc_two_frame(
    profile: HarvestProfile, frame: FrameConfig, bat: BatteryParams,
    dist: ChannelDist,
) -> _lsc.LscAllocation:
    """Two-frame superposition optimum with a finite battery.

    Enumerates the regime candidates: independent greedy frames, battery
    shared across both frames at matched marginal value, charging through
    the first frame to feed the second, and a direct search over the
    energy parked at the frame boundary.  The best feasible candidate by
    total rate is returned.
    """
    if profile.k != 2:
        raise ValueError("two-frame solver needs a length-2 profile")
    u1, u2 = float(profile.u[0]), float(profile.u[1])
    b0 = bat.b_0
    tau, p_c = frame.tau, frame.p_c
    if bat.r == 0 and p_c == 0:
        return _lsc.solve_lsc_multiframe_ideal(profile, b0, bat.b_max, frame, dist)

    heff = dist.h / frame.noise_power
    active = _lsc.find_active_layers(dist, frame.noise_power)
    env1 = stage_env("lsc", u1, frame, bat, dist)

    def fd(x):
        return x - bat.r * x * x / bat.v_b**2

    def fd_p(x):
        return 1.0 - 2.0 * bat.r * x / bat.v_b**2

    def fc_p(v):
        return 1.0 - 2.0 * bat.r * v / bat.v_b**2

    def expcum_at_power(p_total):
        if p_total <= 0:
            return 1.0
        powers = _lsc.layered_water_filling(p_total, active)
        return float(_lsc.cumulative_rate_exp(powers, heff)[-1])

    def solve_single(b, u):
        try:
            return _lsc.solve_lsc_single(min(max(b, 0.0), bat.b_max), u, frame, bat, dist)
        except NoFeasibleTransmission:
            return _lsc.zero_lsc_allocation(1, dist, frame)

    candidates = []

    def add_pair(f1_dict, carry):
        g2 = solve_single(carry, u2)
        candidates.append(_combine_lsc([f1_dict, _single_as_frame(g2)], dist, frame))

    # independent greedy frames
    g1 = solve_single(b0, u1)
    add_pair(_single_as_frame(g1), lsc_level_after(g1, 0, b0, u1, bat))

    # direct search over the parked energy
    t_hi = min(bat.b_max, b0 + tau * env1.fcva)

    def transfer_value(t):
        r1 = env1.rate_between(b0, t)
        if not math.isfinite(r1):
            return -math.inf
        return r1 + solve_single(t, u2).objective

    t_star, _ = golden_max(transfer_value, 0.0, t_hi, tol=1e-9 * max(t_hi, 1.0), coarse=48)
    a1 = env1.action(b0, t_star)
    add_pair(
        _lsc_frame_dict(
            a1.powers, a1.phi, a1.beta if np.ndim(a1.beta) == 0 else a1.beta,
            a1.e if np.ndim(a1.e) == 0 else float(np.sum(a1.e)), a1.stored_idle,
        ),
        a1.b_next,
    )

    # marginal-value matched battery split, both frames transmitting full frame
    if b0 > 0:
        def split_gap(e1):
            carry = min(b0 - e1, bat.b_max)
            d1 = min(e1 / tau, bat.drain_peak)
            d2 = min(max(carry, 0.0) / tau, bat.drain_peak)
            p1 = u1 + fd(d1) - p_c
            p2 = u2 + fd(d2) - p_c
            return fd_p(d2) * expcum_at_power(p1) - fd_p(d1) * expcum_at_power(p2)

        hi = min(b0, bat.drain_peak * tau * (1 - 1e-12))
        for e1 in all_roots(split_gap, 0.0, hi, n=96):
            d1 = min(e1 / tau, bat.drain_peak)
            p1 = u1 + fd(d1) - p_c
            if p1 <= 0:
                continue
            f1 = _lsc_frame_dict(
                _lsc.layered_water_filling(p1, active), tau, tau, d1 * tau, 0.0
            )
            add_pair(f1, min(b0 - e1, bat.b_max))

    # frame 2 pinned at the reference powers, frame 1 drains a matched share
    if env1.ref_powers is not None and env1.ref_total > 0:
        s_ref = env1.ref_total
        need2 = s_ref + p_c - u2
        if 0 < need2 < bat.max_delivered:
            d2 = invert_discharge(need2, bat)
            e2cum = expcum_at_power(s_ref)

            def ref_gap(e1):
                d1 = min(e1 / tau, bat.drain_peak)
                p1 = u1 + fd(d1) - p_c
                return fd_p(d2) * expcum_at_power(p1) - fd_p(d1) * e2cum

            hi = min(b0, bat.drain_peak * tau * (1 - 1e-12))
            if hi > 0:
                for e1 in all_roots(ref_gap, 0.0, hi, n=96):
                    d1 = min(e1 / tau, bat.drain_peak)
                    p1 = u1 + fd(d1) - p_c
                    if p1 <= 0:
                        continue
                    f1 = _lsc_frame_dict(
                        _lsc.layered_water_filling(p1, active), tau, tau,
                        d1 * tau, 0.0,
                    )
                    add_pair(f1, min(b0 - e1, bat.b_max))

            # charging through frame 1 instead of draining
            if u1 > 0:
                def charge_gap(beta1):
                    v1 = (1.0 - beta1 / tau) * u1
                    p1 = beta1 * u1 / tau - p_c
                    return fd_p(d2) * fc_p(v1) * expcum_at_power(p1) - e2cum

                for beta1 in all_roots(charge_gap, 0.0, tau, n=96):
                    v1 = (1.0 - beta1 / tau) * u1
                    p1 = beta1 * u1 / tau - p_c
                    carry = min(b0 + tau * charge_rate(v1, bat), bat.b_max)
                    f1 = _lsc_frame_dict(
                        _lsc.layered_water_filling(max(p1, 0.0), active),
                        tau if p1 > 0 else 0.0, beta1, 0.0, 0.0,
                    )
                    add_pair(f1, carry)

    # charging through frame 1 with frame 2 draining everything over the frame
    if u1 > 0:
        def charge_full_gap(beta1):
            v1 = (1.0 - beta1 / tau) * u1
            p1 = beta1 * u1 / tau - p_c
            carry = min(b0 + tau * charge_rate(v1, bat), bat.b_max)
            d2 = min(carry / tau, bat.drain_peak)
            p2 = u2 + fd(d2) - p_c
            return fd_p(d2) * fc_p(v1) * expcum_at_power(p1) - expcum_at_power(p2)

        for beta1 in all_roots(charge_full_gap, 0.0, tau, n=96):
            v1 = (1.0 - beta1 / tau) * u1
            p1 = beta1 * u1 / tau - p_c
            carry = min(b0 + tau * charge_rate(v1, bat), bat.b_max)
            f1 = _lsc_frame_dict(
                _lsc.layered_water_filling(max(p1, 0.0), active),
                tau if p1 > 0 else 0.0, beta1, 0.0, 0.0,
            )
            add_pair(f1, carry)

    best = max(candidates, key=lambda c: c.objective)
    return best
