"""Learning-rate schedules and the compounded update weights they induce."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

KINDS = ("rescaled_linear", "constant", "polynomial", "linear")


class ScheduleError(ValueError):
    pass


@dataclass(frozen=True)
class Schedule:
    """A step-size rule eta_t.

    rescaled_linear: eta_t = 1 / (1 + c (1-gamma) t / max(log T, 1)^k)
    constant:        eta_t = eta
    polynomial:      eta_t = t^-omega, eta_0 = 1
    linear:          eta_t = 1/t,      eta_0 = 1

    For finite-horizon runs pass gamma = 1 - 1/H so that (1-gamma) = 1/H.
    """

    kind: str
    c: float = 1.0
    log_exponent: int = 3
    horizon_T: int = 2
    gamma: float = 0.9
    eta: float = 1.0
    omega: float = 0.5

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ScheduleError(f"unknown schedule kind {self.kind!r}; expected one of {KINDS}")
        if self.kind == "rescaled_linear":
            if self.c <= 0:
                raise ScheduleError("rescaled_linear needs c > 0")
            if self.log_exponent < 0:
                raise ScheduleError("log_exponent must be >= 0")
            if self.horizon_T < 2:
                raise ScheduleError("rescaled_linear needs horizon_T >= 2")
            if not (0.0 <= self.gamma < 1.0):
                raise ScheduleError("gamma must lie in [0, 1)")
        elif self.kind == "constant" and not (0.0 < self.eta <= 1.0):
            raise ScheduleError("constant eta must lie in (0, 1]")
        elif self.kind == "polynomial" and not (0.0 < self.omega < 1.0):
            raise ScheduleError("omega must lie in (0, 1)")

    def to_dict(self) -> dict:
        keep = {
            "rescaled_linear": ("c", "log_exponent", "horizon_T", "gamma"),
            "constant": ("eta",),
            "polynomial": ("omega",),
            "linear": (),
        }[self.kind]
        d = asdict(self)
        return {"kind": self.kind, **{k: d[k] for k in keep}}

    @classmethod
    def from_dict(cls, d: dict) -> "Schedule":
        fields = {"kind", "c", "log_exponent", "horizon_T", "gamma", "eta", "omega"}
        unknown = set(d) - fields
        if unknown:
            raise ScheduleError(f"unknown schedule fields {sorted(unknown)}")
        return cls(**d)

    def bind(self, gamma: float | None = None, horizon_T: int | None = None) -> "Schedule":
        """Copy with gamma / horizon_T filled in (no-op for kinds that ignore them)."""
        d = asdict(self)
        if gamma is not None:
            d["gamma"] = gamma
        if horizon_T is not None:
            d["horizon_T"] = max(int(horizon_T), 2)
        return Schedule(**d)


def rescaled_linear(gamma: float, horizon_T: int, c: float = 1.0, log_exponent: int = 3) -> Schedule:
    return Schedule("rescaled_linear", c=c, log_exponent=log_exponent, horizon_T=horizon_T, gamma=gamma)


def constant(eta: float) -> Schedule:
    return Schedule("constant", eta=eta)


def constant_for_accuracy(gamma: float, epsilon: float) -> Schedule:
    """Constant rate of order (1-gamma)^3 eps^2, the iteration-invariant choice for Q-learning."""
    return constant((1.0 - gamma) ** 3 * epsilon**2)


def finite_horizon(H: int, horizon_T: int, c: float = 1.0, log_exponent: int = 2) -> Schedule:
    """eta_t = 1 / (1 + c t / (H log^k T))."""
    return rescaled_linear(1.0 - 1.0 / H, horizon_T, c=c, log_exponent=log_exponent)


def async_constant_rate(T: int, mu_min: float, gamma: float, c1: float = 1.0) -> float:
    """eta = c1 log^3 T / ((1-gamma) T mu_min), capped at 1."""
    if not (0.0 < c1 <= 1.0):
        raise ScheduleError("c1 must lie in (0, 1]")
    if mu_min <= 0:
        raise ScheduleError("mu_min must be positive")
    return min(1.0, c1 * math.log(T) ** 3 / ((1.0 - gamma) * T * mu_min))


def rates(schedule: Schedule, t) -> np.ndarray:
    """Vectorised eta_t for an array of nonnegative integer t."""
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ScheduleError("t must be >= 0")
    kind = schedule.kind
    if kind == "rescaled_linear":
        log_T = max(math.log(schedule.horizon_T), 1.0)
        slope = schedule.c * (1.0 - schedule.gamma) / log_T**schedule.log_exponent
        return 1.0 / (1.0 + slope * t)
    if kind == "constant":
        return np.full(t.shape, schedule.eta)
    safe = np.maximum(t, 1.0)
    if kind == "polynomial":
        out = safe ** (-schedule.omega)
    else:
        out = 1.0 / safe
    return np.where(t == 0, 1.0, out)


def rate(schedule: Schedule, t: int) -> float:
    return float(rates(schedule, t))


def compounded_weights(schedule: Schedule, t: int) -> np.ndarray:
    """Weights eta_i^{(t)}, i = 0..t, of each update inside the iteration-t estimate.

    eta_0^{(t)} = prod_{j=1..t} (1 - eta_j), eta_i^{(t)} = eta_i prod_{j>i} (1 - eta_j).
    """
    if t < 1:
        raise ValueError("t must be >= 1")
    eta = rates(schedule, np.arange(1, t + 1))
    # tail[i] = prod_{j=i+1..t} (1 - eta_j) for i = 0..t, built right to left.
    tail = np.ones(t + 1)
    tail[:-1] = np.cumprod((1.0 - eta)[::-1])[::-1]
    w = np.empty(t + 1)
    w[0] = tail[0]
    w[1:] = eta * tail[1:]
    return w
