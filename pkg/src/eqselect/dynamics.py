"""Numerical integration of the uncontrolled and controlled replicator systems.

Both coordinates are integrated in log space. The gain uses u = ln g, so a
positive gain stays positive whatever the step size. The share uses the log
of its distance to the nearer boundary, w = ln x below one half and
w = ln(1 - x) above, switching charts at one half. Every reachable w maps
into the open interval (0, 1), the boundaries are reached only in the limit
exactly as for the ODE, and a strongly attracting boundary (dx/dt = -g x
with large g) becomes a constant drift in w instead of a stiff decay.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Iterator, Optional, Union

from .control import ControllerSpec, SystemState
from .game import DomainError, PayoffMatrix

__all__ = [
    "DEFAULT_G0",
    "AdaptiveRK45",
    "Convergence",
    "FixedRK4",
    "IntegratorConfig",
    "SystemState",
    "Terminal",
    "Trajectory",
    "integrate_controlled",
    "integrate_planar",
    "integrate_uncontrolled",
]


# initial gain used when a scenario does not give one
DEFAULT_G0 = 0.01


@dataclass(frozen=True)
class FixedRK4:
    dt: float = 0.01
    tol: float = 1e-9  # nominal accuracy, used for audit slack

    def __post_init__(self):
        if not self.dt > 0:
            raise DomainError("dt must be > 0")

    @property
    def tolerance(self) -> float:
        return self.tol


@dataclass(frozen=True)
class AdaptiveRK45:
    rel_tol: float = 1e-9
    abs_tol: float = 1e-11
    dt_min: float = 1e-10
    dt_max: float = 1.0

    def __post_init__(self):
        for name in ("rel_tol", "abs_tol"):
            v = getattr(self, name)
            if not (0 < v <= 1e-2):
                raise DomainError(f"{name} must lie in (0, 1e-2], got {v!r}")
        if not (0 < self.dt_min <= self.dt_max):
            raise DomainError("need 0 < dt_min <= dt_max")

    @property
    def tolerance(self) -> float:
        return max(self.rel_tol, self.abs_tol)

    @property
    def tol(self) -> float:
        return self.abs_tol


@dataclass(frozen=True)
class Convergence:
    """Settling test: |x - target_x| < eps_x and |dg/dt| < eps_g_settle over a window."""

    target_x: Optional[float] = None
    eps_x: float = 1e-3
    eps_g_settle: float = 1e-6
    window: float = 10.0
    stop: bool = False

    def __post_init__(self):
        if not self.window > 0:
            raise DomainError("convergence window must be > 0")


@dataclass(frozen=True)
class IntegratorConfig:
    method: Union[FixedRK4, AdaptiveRK45] = field(default_factory=AdaptiveRK45)
    horizon: float = 200.0
    record_stride: float = 10.0  # samples per unit time
    convergence: Convergence = field(default_factory=Convergence)
    log_gain_cap: float = 50.0

    def __post_init__(self):
        if not self.horizon > 0:
            raise DomainError("horizon must be > 0")
        if not self.record_stride > 0:
            raise DomainError("record_stride must be > 0")

    @property
    def tolerance(self) -> float:
        return self.method.tolerance


class Terminal(str, Enum):
    HORIZON = "HorizonReached"
    CONVERGED = "Converged"
    STEP_FAILURE = "StepFailure"
    GAIN_OVERFLOW = "GainOverflow"

    @property
    def failed(self) -> bool:
        return self in (Terminal.STEP_FAILURE, Terminal.GAIN_OVERFLOW)


@dataclass
class Trajectory:
    t: list[float]
    x: list[float]
    g: list[float]
    reason: Terminal
    config: IntegratorConfig
    steps: int = 0
    rejected: int = 0
    message: str = ""
    game: Optional[PayoffMatrix] = None
    controller: Optional[ControllerSpec] = None

    @property
    def t_end(self) -> float:
        return self.t[-1]

    @property
    def final(self) -> SystemState:
        return SystemState(self.x[-1], self.g[-1])

    @property
    def samples(self) -> Iterator[tuple[float, SystemState]]:
        for t, x, g in zip(self.t, self.x, self.g):
            yield t, SystemState(x, g)

    def __len__(self) -> int:
        return len(self.t)

    def at(self, t: float) -> SystemState:
        """Sample closest to time ``t``."""
        i = min(range(len(self.t)), key=lambda k: abs(self.t[k] - t))
        return SystemState(self.x[i], self.g[i])


# Dormand-Prince 5(4) tableau
_C = (0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0)
_A = (
    (),
    (1 / 5,),
    (3 / 40, 9 / 40),
    (44 / 45, -56 / 15, 32 / 9),
    (19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729),
    (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656),
    (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84),
)
_B = (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0)
_E = (
    71 / 57600,
    0.0,
    -71 / 16695,
    71 / 1920,
    -17253 / 339200,
    22 / 525,
    -1 / 40,
)


class _StepFailed(Exception):
    pass


class _Overflow(Exception):
    pass


_HALF = math.log(0.5)


def _record_times(horizon: float, stride: float) -> list[float]:
    n = int(math.floor(horizon * stride + 1e-9))
    times = [k / stride for k in range(1, n + 1)]
    if not times or horizon - times[-1] > 1e-9 * max(1.0, horizon):
        times.append(horizon)
    else:
        times[-1] = horizon
    return times


def integrate_planar(
    advantage: Callable[[float, float, float], float],
    phi: Optional[Callable[[float], float]],
    s0: SystemState,
    cfg: IntegratorConfig,
) -> Trajectory:
    """Integrate dx/dt = x (1 - x) advantage(x, 1 - x, g), du/dt = phi(x), g = exp(u).

    ``advantage`` is the reward of action 1 minus that of action 2. It
    receives both x and 1 - x so that neither boundary loses precision.
    ``phi=None`` freezes the gain at ``s0.g`` (the scalar uncontrolled case).
    Failures are reported through ``Trajectory.reason``, never raised.
    """
    x0, g0 = s0
    if not (0.0 <= x0 <= 1.0):
        raise DomainError(f"x0={x0!r} outside [0, 1]")
    if phi is None:
        u0 = 0.0
        fixed_gain = g0

        def gain(u):
            return fixed_gain

        def rate(x):
            return 0.0
    else:
        if not (g0 > 0 and math.isfinite(g0)):
            raise DomainError(f"initial gain must be > 0, got {g0!r}")
        u0 = math.log(g0)
        gain = math.exp
        rate = phi

    # chart flag: False -> w = ln x, True -> w = ln(1 - x)
    hi = x0 > 0.5

    def share(w):
        d = math.exp(w)
        return 1.0 - d if hi else d

    def f(w, u):
        d = math.exp(w)
        g = gain(u)
        if hi:
            x = 1.0 - d
            dw = -x * advantage(x, d, g)
        else:
            x = d
            dw = (1.0 - d) * advantage(d, 1.0 - d, g)
        # a trial stage may leave [0, 1]; fractional powers need a real base
        return dw, rate(min(max(x, 0.0), 1.0))

    def rechart(w):
        nonlocal hi
        if w > _HALF:
            hi = not hi
            return math.log1p(-math.exp(w)), True
        return w, False

    method = cfg.method
    conv = cfg.convergence
    cap = cfg.log_gain_cap
    traj = Trajectory([0.0], [x0], [g0], Terminal.HORIZON, cfg)

    if x0 in (0.0, 1.0):
        # the boundary is invariant; only the gain moves, at a constant rate
        slope = rate(x0)

        def advance(w, u, t, t_next):
            un = u0 + slope * t_next
            if un > cap:
                raise _Overflow((x0, cap, (cap - u0) / slope))
            return w, un

    elif isinstance(method, FixedRK4):

        def advance(w, u, t, t_next):
            n = max(1, math.ceil((t_next - t) / method.dt - 1e-9))
            h = (t_next - t) / n
            for i in range(n):
                try:
                    k1w, k1u = f(w, u)
                    k2w, k2u = f(w + 0.5 * h * k1w, u + 0.5 * h * k1u)
                    k3w, k3u = f(w + 0.5 * h * k2w, u + 0.5 * h * k2u)
                    k4w, k4u = f(w + h * k3w, u + h * k3u)
                except OverflowError:
                    raise _StepFailed(f"overflow inside fixed step h={h:g}") from None
                wn = w + h / 6 * (k1w + 2 * k2w + 2 * k3w + k4w)
                un = u + h / 6 * (k1u + 2 * k2u + 2 * k3u + k4u)
                if not (math.isfinite(wn) and math.isfinite(un)):
                    raise _StepFailed(f"non-finite state after fixed step h={h:g}")
                if wn >= 0.0:
                    raise _StepFailed(f"fixed step h={h:g} jumped across the whole simplex")
                w, _ = rechart(wn)
                u = un
                traj.steps += 1
                if u > cap:
                    raise _Overflow((share(w), u, t + (i + 1) * h))
            return w, u

    else:
        rtol, atol = method.rel_tol, method.abs_tol
        dt_prop = min(method.dt_max, 1.0 / cfg.record_stride, 1e-2)
        k_first = None

        def advance(w, u, t, t_next):
            nonlocal dt_prop, k_first
            k1 = k_first or f(w, u)
            while t < t_next:
                last = t_next - t <= dt_prop * (1 + 1e-12)
                h = t_next - t if last else dt_prop
                ks = [k1]
                try:
                    for i in range(1, 7):
                        a = _A[i]
                        wi = w + h * sum(a[j] * ks[j][0] for j in range(i))
                        ui = u + h * sum(a[j] * ks[j][1] for j in range(i))
                        ks.append(f(wi, ui))
                    wn = w + h * sum(_B[j] * ks[j][0] for j in range(7))
                    un = u + h * sum(_B[j] * ks[j][1] for j in range(7))
                    ew = h * sum(_E[j] * ks[j][0] for j in range(7))
                    eu = h * sum(_E[j] * ks[j][1] for j in range(7))
                except OverflowError:
                    wn = un = ew = eu = math.inf
                err = math.inf
                if all(math.isfinite(v) for v in (wn, un, ew, eu)) and wn < 0.0:
                    # an error of e in w is a relative error of e in the distance;
                    # once the distance is far below double precision only the
                    # magnitude of w matters
                    sw = atol + rtol * max(1.0, abs(w) / 40.0, abs(wn) / 40.0)
                    su = atol + rtol * max(abs(u), abs(un))
                    err = max(abs(ew) / sw, abs(eu) / su)
                if err <= 1.0:
                    t = t_next if last else t + h
                    w, switched = rechart(wn)
                    u = un
                    k1 = f(w, u) if switched else ks[6]
                    traj.steps += 1
                    fac = 5.0 if err == 0 else min(5.0, max(0.2, 0.9 * err**-0.2))
                    if not last or fac < 1.0:
                        dt_prop = min(method.dt_max, h * fac)
                    if u > cap:
                        raise _Overflow((share(w), u, t))
                else:
                    traj.rejected += 1
                    fac = 0.5 if not math.isfinite(err) else max(0.1, 0.9 * err**-0.2)
                    dt_prop = h * fac
                    if dt_prop < method.dt_min:
                        raise _StepFailed(f"step size fell below dt_min={method.dt_min:g} at t={t:g}")
            k_first = k1
            return w, u

    if x0 in (0.0, 1.0):
        w = -math.inf
    else:
        w = math.log1p(-x0) if hi else math.log(x0)
    u, t = u0, 0.0
    since: Optional[float] = None
    for t_next in _record_times(cfg.horizon, cfg.record_stride):
        try:
            w, u = advance(w, u, t, t_next)
        except _StepFailed as e:
            traj.reason = Terminal.STEP_FAILURE
            traj.message = str(e)
            break
        except _Overflow as e:
            xo, uo, to = e.args[0]
            traj.t.append(to)
            traj.x.append(xo)
            traj.g.append(math.exp(min(uo, 700.0)))
            traj.reason = Terminal.GAIN_OVERFLOW
            traj.message = f"ln g exceeded cap {cap:g}"
            break
        t = t_next
        x = x0 if x0 in (0.0, 1.0) else share(w)
        g = gain(u)
        traj.t.append(t)
        traj.x.append(x)
        traj.g.append(g)
        if conv.target_x is not None:
            if abs(x - conv.target_x) < conv.eps_x and abs(rate(x)) * g < conv.eps_g_settle:
                since = t if since is None else since
                if conv.stop and t - since >= conv.window:
                    traj.reason = Terminal.CONVERGED
                    break
            else:
                since = None
    if traj.reason is Terminal.HORIZON and since is not None and traj.t[-1] - since >= conv.window:
        traj.reason = Terminal.CONVERGED
    return traj


def integrate_uncontrolled(m: PayoffMatrix, x0: float, cfg: IntegratorConfig) -> Trajectory:
    k0 = m.a + m.d - m.b - m.c
    k1 = m.b - m.d

    def advantage(x, y, g):
        return k0 * x + k1

    traj = integrate_planar(advantage, None, SystemState(x0, 0.0), cfg)
    traj.game = m
    return traj


def integrate_controlled(m: PayoffMatrix, spec: ControllerSpec, s0: SystemState, cfg: IntegratorConfig) -> Trajectory:
    traj = integrate_planar(spec.advantage(m), spec.rate, SystemState(*s0), cfg)
    traj.game = m
    traj.controller = spec
    return traj
