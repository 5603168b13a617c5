"""Physical and statistical substrate shared by every solver.

Battery charge/discharge loss functions with a quadratic internal-resistance
penalty, the log rate function and its inverse, and quantization of a Gamma
fading distribution to a discrete channel.

Units: energies in joules, powers in watts, time in seconds.  Rates are in
nats; the experiment layer converts to bits and scales by bandwidth.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import special

from .errors import DrainBeyondPeak, InfeasibleDelivery

__all__ = [
    "BatteryParams",
    "ChannelDist",
    "FrameConfig",
    "HarvestProfile",
    "charge_rate",
    "discharge_delivered",
    "invert_discharge",
    "idle_charge_rate",
    "rate",
    "inv_rate",
    "quantize_gamma_channel",
]

IDEAL_BATTERY_R = 0.0


@dataclass(frozen=True)
class BatteryParams:
    """Battery with a series internal resistance.

    r: internal resistance (ohm), v_b: nominal voltage (volt),
    b_max: capacity (joule), b_0: initial stored energy (joule).
    """

    r: float
    v_b: float
    b_max: float
    b_0: float = 0.0

    def __post_init__(self):
        if self.r < 0:
            raise ValueError("internal resistance must be >= 0")
        if self.v_b <= 0:
            raise ValueError("nominal voltage must be > 0")
        if self.b_max < 0:
            raise ValueError("capacity must be >= 0")
        if not 0 <= self.b_0 <= self.b_max:
            raise ValueError("initial energy must lie in [0, b_max]")

    @property
    def drain_peak(self) -> float:
        """Drain rate beyond which delivered power decreases (watt)."""
        if self.r == 0:
            return math.inf
        return self.v_b**2 / (2.0 * self.r)

    @property
    def max_delivered(self) -> float:
        """Largest power the battery can deliver to the load (watt)."""
        if self.r == 0:
            return math.inf
        return self.v_b**2 / (4.0 * self.r)

    def with_(self, **kw) -> "BatteryParams":
        d = {"r": self.r, "v_b": self.v_b, "b_max": self.b_max, "b_0": self.b_0}
        d.update(kw)
        return BatteryParams(**d)


@dataclass(frozen=True, eq=False)
class ChannelDist:
    """Discrete channel power-gain distribution.

    ``h`` must be strictly increasing and positive; ``p`` sums to one.
    Tail weights ``q_i = sum_{j>=i} p_j`` and inverse gains ``s_i = 1/h_i``
    are derived at construction; ``s_ext`` appends the sentinel 0.
    """

    h: np.ndarray
    p: np.ndarray
    q: np.ndarray = field(init=False)
    s: np.ndarray = field(init=False)

    def __post_init__(self):
        h = np.asarray(self.h, dtype=float)
        p = np.asarray(self.p, dtype=float)
        if h.ndim != 1 or p.shape != h.shape:
            raise ValueError("h and p must be 1-d arrays of equal length")
        if h.size == 0:
            raise ValueError("need at least one channel state")
        if np.any(h <= 0) or np.any(np.diff(h) <= 0):
            raise ValueError("gains must be positive and strictly increasing")
        if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-12:
            raise ValueError("probabilities must be nonnegative and sum to 1")
        object.__setattr__(self, "h", h)
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "q", p[::-1].cumsum()[::-1])
        object.__setattr__(self, "s", 1.0 / h)

    @property
    def n(self) -> int:
        return self.h.size

    @property
    def s_ext(self) -> np.ndarray:
        """Inverse gains with the sentinel s_{N+1} = 0 appended."""
        return np.append(self.s, 0.0)


@dataclass(frozen=True)
class FrameConfig:
    """Frame length, circuit power and receiver noise parameters."""

    tau: float = 1.0
    p_c: float = 0.0
    bandwidth: float = 1.0
    n0: float = 1.0

    def __post_init__(self):
        if self.tau <= 0:
            raise ValueError("frame length must be > 0")
        if self.p_c < 0:
            raise ValueError("circuit power must be >= 0")
        if self.bandwidth <= 0 or self.n0 <= 0:
            raise ValueError("bandwidth and n0 must be > 0")

    @property
    def noise_power(self) -> float:
        """Total in-band noise power n0 * bandwidth (watt)."""
        return self.n0 * self.bandwidth


@dataclass(frozen=True, eq=False)
class HarvestProfile:
    """Per-frame harvested power, known non-causally to offline solvers."""

    u: np.ndarray

    def __post_init__(self):
        u = np.atleast_1d(np.asarray(self.u, dtype=float))
        if np.any(u < 0):
            raise ValueError("harvested power must be >= 0")
        object.__setattr__(self, "u", u)

    @property
    def k(self) -> int:
        return self.u.size


def charge_rate(v: float, bat: BatteryParams) -> float:
    """Rate at which energy accumulates when charging at ``v`` watts.

    Quadratic loss model: v - r*v^2/v_b^2.  Equals ``v`` for an ideal
    battery (r = 0) and is at most ``v`` otherwise.
    """
    return v - bat.r * v * v / (bat.v_b * bat.v_b)


def discharge_delivered(d: float, bat: BatteryParams) -> float:
    """Power delivered to the load when draining the battery at ``d`` watts.

    Only the non-wasteful branch d <= v_b^2/(2r) is admitted; beyond the
    peak a higher drain delivers less, which no solver should request.
    """
    if d > bat.drain_peak * (1.0 + 1e-12):
        raise DrainBeyondPeak(f"drain {d} W exceeds peak {bat.drain_peak} W")
    return d - bat.r * d * d / (bat.v_b * bat.v_b)


def invert_discharge(p_del: float, bat: BatteryParams) -> float:
    """Smallest drain rate that delivers ``p_del`` watts to the load."""
    if bat.r == 0:
        return p_del
    if p_del > bat.max_delivered * (1.0 + 1e-12):
        raise InfeasibleDelivery(
            f"requested {p_del} W exceeds deliverable max {bat.max_delivered} W"
        )
    ratio = min(4.0 * bat.r * p_del / bat.v_b**2, 1.0)
    return bat.drain_peak * (1.0 - math.sqrt(1.0 - ratio))


def idle_charge_rate(u: float, bat: BatteryParams) -> float:
    """Charge power maximizing accumulation when ``u`` watts are harvested.

    The quadratic accumulation rate peaks at v_b^2/(2r); with an ideal
    battery it is increasing, so all harvested power is applied.
    """
    if bat.r == 0:
        return u
    return min(u, bat.drain_peak)


def rate(snr):
    """Spectral rate ln(1 + snr) in nats."""
    return np.log1p(snr)


def inv_rate(rr):
    """SNR achieving spectral rate ``rr``: exp(rr) - 1."""
    return np.expm1(rr)


def quantize_gamma_channel(
    shape: float, rate_y: float, truncation: float, levels: int
) -> ChannelDist:
    """Quantize a Gamma(shape, rate) power gain to ``levels`` even steps.

    Levels are h_i = i*T/N on (0, T]; the top level absorbs the upper tail
    mass beyond the truncation point.  Bin masses come from the regularized
    incomplete gamma function.
    """
    if shape <= 0 or rate_y <= 0 or truncation <= 0:
        raise ValueError("shape, rate and truncation must be > 0")
    if levels < 1:
        raise ValueError("need at least one level")
    n = int(levels)
    edges = np.linspace(0.0, truncation, n + 1)
    cdf = special.gammainc(shape, rate_y * edges)
    p = np.diff(cdf)
    p[-1] = 1.0 - cdf[-2]
    p = np.clip(p, 0.0, None)
    p /= p.sum()
    h = edges[1:].copy()
    return ChannelDist(h=h, p=p)
