"""Analytic cross-checks for simulated controlled systems.

Equilibria with Jacobian eigenvalues, the Lyapunov function of the set-point
controller and its audit along trajectories, and drivers that run forbidden
controllers to confirm they fail the way the impossibility results predict.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Optional

import numpy as np

from .control import (
    ControlMatrix,
    ControllerSpec,
    GuardVerdict,
    PowerShifted,
    PowerShiftedMirror,
    ProblemKind,
    ProblemSpec,
    Proportional,
    SystemState,
    guard_impossible,
)
from .dynamics import (
    DEFAULT_G0,
    IntegratorConfig,
    Terminal,
    Trajectory,
    integrate_controlled,
    integrate_planar,
)
from .game import DomainError, GameTag, PayoffMatrix, classify

# real parts below this count as zero when tagging equilibria
CENTER_TOL = 1e-9
# a forbidden controller "fails" if it ends at least this far from the target
FAILURE_MARGIN = 1e-2


class UnsupportedConfigurationError(ValueError):
    """The request lies outside the scenarios these checks are derived for."""


class ScenarioError(ValueError):
    """A negative test was asked to run a controller that is not forbidden."""


class StabilityTag(str, Enum):
    STABLE = "stable"
    SADDLE = "saddle"
    SOURCE = "source"
    CENTER_LIKE = "center_like"


@dataclass(frozen=True)
class EquilibriumReport:
    point: SystemState
    jacobian: np.ndarray
    eigenvalues: tuple[complex, complex]
    tag: StabilityTag


def jacobian(m: PayoffMatrix, spec: ControllerSpec, x: float, g: float) -> np.ndarray:
    """Closed-form Jacobian of the controlled field in (x, g) coordinates."""
    k0 = m.a + m.d - m.b - m.c
    k1 = m.b - m.d
    cx, c1 = spec.gain_coefficients()
    adv = k0 * x + k1 + cx * g * x + c1 * g * (1 - x)
    d_adv = k0 + (cx - c1) * g
    # phi' may be infinite at a boundary (q < 1); it only enters through g
    d_rate = 0.0 if g == 0 else g * spec.rate.derivative(x)
    return np.array(
        [
            [(1 - 2 * x) * adv + x * (1 - x) * d_adv, x * (1 - x) * (cx * x + c1 * (1 - x))],
            [d_rate, spec.rate(x)],
        ]
    )


def numeric_jacobian(m: PayoffMatrix, spec: ControllerSpec, x: float, g: float) -> np.ndarray:
    """Second-order finite-difference Jacobian of the controlled field.

    Central differences in the interior; one-sided ones where a central step
    would leave x in [0, 1] or g >= 0.
    """
    f = spec.vector_field(m)
    out = np.empty((2, 2))
    upper = (1.0, math.inf)
    for j, v in enumerate((x, g)):
        h = 1e-6 * max(1.0, abs(v))

        def at(k):
            s = [x, g]
            s[j] += k * h
            return np.array(f(*s))

        if v - h < 0.0:
            out[:, j] = (-3 * at(0) + 4 * at(1) - at(2)) / (2 * h)
        elif v + h > upper[j]:
            out[:, j] = (3 * at(0) - 4 * at(-1) + at(-2)) / (2 * h)
        else:
            out[:, j] = (at(1) - at(-1)) / (2 * h)
    return out


def stability_tag(eigenvalues) -> StabilityTag:
    re = [z.real for z in eigenvalues]
    if any(r > CENTER_TOL for r in re) and any(r < -CENTER_TOL for r in re):
        return StabilityTag.SADDLE
    if all(r < -CENTER_TOL for r in re):
        return StabilityTag.STABLE
    if all(r > CENTER_TOL for r in re):
        return StabilityTag.SOURCE
    return StabilityTag.CENTER_LIKE


def _report(m, spec, x, g) -> EquilibriumReport:
    jac = jacobian(m, spec, x, g)
    ev = sorted((complex(z) for z in np.linalg.eigvals(jac)), key=lambda z: (z.real, z.imag))
    return EquilibriumReport(SystemState(x, g), jac, (ev[0], ev[1]), stability_tag(ev))


def steady_gain(m: PayoffMatrix, spec: ControllerSpec, x: float) -> float:
    """Gain that makes both actions equally rewarding at share ``x``."""
    k0 = m.a + m.d - m.b - m.c
    k1 = m.b - m.d
    cx, c1 = spec.gain_coefficients()
    weight = cx * x + c1 * (1 - x)
    if weight == 0:
        raise UnsupportedConfigurationError("the controlled entry has no effect at this share")
    return -(k0 * x + k1) / weight


_REACHING = {
    ControlMatrix.G4: PowerShifted,
    ControlMatrix.G3: PowerShifted,
    ControlMatrix.G1: PowerShiftedMirror,
    ControlMatrix.G2: PowerShiftedMirror,
}
_SETPOINT_SIGN = {ControlMatrix.G3: 1, ControlMatrix.G2: -1}


def equilibria_controlled(m: PayoffMatrix, spec: ControllerSpec) -> list[EquilibriumReport]:
    """Equilibria of a consensus-reaching or set-point system, with eigenvalues.

    Reaching systems (coordination game, shifted power rate) have the rest
    points (0, 0), (1, 0) and (x*, 0). Set-point systems (dominant or
    anti-coordination game, proportional rate) have (0, 0), (1, 0) and
    (xbar, gbar).
    """
    cls = classify(m)
    rate = spec.rate
    if cls.tag is GameTag.COORDINATION and isinstance(rate, _REACHING.get(spec.matrix, ())):
        points = [(0.0, 0.0), (1.0, 0.0), (cls.mixed_ne, 0.0)]
    elif (
        cls.tag in (GameTag.DOMINANT_ACTION1, GameTag.DOMINANT_ACTION2, GameTag.ANTI_COORDINATION)
        and isinstance(rate, Proportional)
        and _SETPOINT_SIGN.get(spec.matrix) == rate.sign
    ):
        gbar = steady_gain(m, spec, rate.xbar)
        if not gbar > 0:
            raise UnsupportedConfigurationError(f"steady gain {gbar:g} is not positive for target {rate.xbar}")
        points = [(0.0, 0.0), (1.0, 0.0), (rate.xbar, gbar)]
    else:
        raise UnsupportedConfigurationError(
            f"{cls.tag.value} game with ({spec.matrix.value}, {rate.name}) is not a reaching or set-point system"
        )
    return [_report(m, spec, x, g) for x, g in points]


# ---------------------------------------------------------------------------
# Lyapunov function of the set-point controller


def lyapunov_constant(xbar: float, gbar: float, p: float) -> float:
    """Offset that puts the minimum of V at zero."""
    return -1 - (1 - xbar) * (math.log(xbar) - math.log(1 - xbar)) - (gbar / p) * (1 - math.log(gbar))


def lyapunov_V(x: float, g: float, xbar: float, gbar: float, p: float) -> float:
    if not (0.0 < x < 1.0):
        raise DomainError(f"V is defined for x in (0, 1), got {x!r}")
    if not g > 0:
        raise DomainError(f"V is defined for g > 0, got {g!r}")
    return (
        xbar / x
        + (1 - xbar) * (math.log(x) - math.log1p(-x))
        + (g - gbar * math.log(g)) / p
        + lyapunov_constant(xbar, gbar, p)
    )


def lyapunov_rate(x: float, xbar: float, beta: float) -> float:
    """dV/dt along the set-point system: -beta (xbar - x)**2 / (x xbar)."""
    return -beta * (xbar - x) ** 2 / (x * xbar)


@dataclass(frozen=True)
class LyapunovAudit:
    values: np.ndarray
    max_increase: float
    K: float
    slack: float

    @property
    def passed(self) -> bool:
        return self.max_increase <= self.slack


@dataclass(frozen=True)
class SetpointFrame:
    """A set-point system written in the orientation where its rate has sign +1."""

    game: PayoffMatrix
    xbar: float
    gbar: float
    p: float
    mirrored: bool

    @property
    def beta(self) -> float:
        return self.game.b - self.game.d

    def share(self, x: float) -> float:
        return 1 - x if self.mirrored else x


def setpoint_frame(m: PayoffMatrix, spec: ControllerSpec) -> SetpointFrame:
    rate = spec.rate
    cls = classify(m)
    if not (
        isinstance(rate, Proportional)
        and _SETPOINT_SIGN.get(spec.matrix) == rate.sign
        and cls.tag in (GameTag.DOMINANT_ACTION1, GameTag.DOMINANT_ACTION2, GameTag.ANTI_COORDINATION)
    ):
        raise UnsupportedConfigurationError(
            f"({spec.matrix.value}, {rate.name}) on a {cls.tag.value} game is not a set-point system"
        )
    gbar = steady_gain(m, spec, rate.xbar)
    mirrored = spec.matrix is ControlMatrix.G2
    game = m.relabeled() if mirrored else m
    frame = SetpointFrame(game, 1 - rate.xbar if mirrored else rate.xbar, gbar, rate.p, mirrored)
    if not (gbar > 0 and frame.beta > 0):
        raise UnsupportedConfigurationError("the set-point system has no positive steady gain here")
    return frame


def audit_lyapunov(traj: Trajectory, m: PayoffMatrix, xbar: float, p: float) -> LyapunovAudit:
    """Evaluate V along ``traj`` and measure its largest increase.

    The audit passes when no step between samples raises V by more than ten
    times the integrator tolerance.
    """
    spec = traj.controller
    if spec is None or traj.game != m:
        raise UnsupportedConfigurationError("trajectory was not produced by a controlled run on this game")
    frame = setpoint_frame(m, spec)
    if spec.rate.xbar != xbar or spec.rate.p != p:
        raise UnsupportedConfigurationError(
            f"trajectory uses xbar={spec.rate.xbar}, p={spec.rate.p}; audit asked for xbar={xbar}, p={p}"
        )
    values = np.array([lyapunov_V(frame.share(x), g, frame.xbar, frame.gbar, p) for x, g in zip(traj.x, traj.g)])
    jumps = np.diff(values)
    max_increase = float(max(jumps.max(initial=0.0), 0.0))
    return LyapunovAudit(
        values,
        max_increase,
        lyapunov_constant(frame.xbar, frame.gbar, p),
        10 * traj.config.tolerance,
    )


def reduced_system(xbar: float, gbar: float, p: float) -> tuple[Callable, Callable]:
    """Conservative core dx = -x**2 (1 - x)(g - gbar), dg = p g (x - xbar).

    Returned as (advantage, rate) for ``integrate_planar``; V is a first
    integral of this system.
    """

    def advantage(x, y, g):
        return -x * (g - gbar)

    def rate(x):
        return p * (x - xbar)

    return advantage, rate


def integrate_reduced(xbar: float, gbar: float, p: float, s0: SystemState, cfg: IntegratorConfig) -> Trajectory:
    advantage, rate = reduced_system(xbar, gbar, p)
    return integrate_planar(advantage, rate, s0, cfg)


# ---------------------------------------------------------------------------
# negative tests


class NegativeVerdict(str, Enum):
    FAILS_AS_PREDICTED = "FailsAsPredicted"
    UNEXPECTED = "Unexpected"


@dataclass(frozen=True)
class NegativeTestResult:
    verdict: NegativeVerdict
    guard: GuardVerdict
    trajectory: Trajectory
    distance: float  # |x(T) - target|

    @property
    def detail(self) -> str:
        return (
            f"{self.verdict.value}: terminal {self.trajectory.reason.value}, "
            f"|x(T) - target| = {self.distance:.3g}, g(T) = {self.trajectory.g[-1]:.6g}"
        )


def negative_test(
    problem: ProblemSpec,
    forbidden_spec: ControllerSpec,
    m: PayoffMatrix,
    cfg: IntegratorConfig,
    s0: SystemState = SystemState(0.99, DEFAULT_G0),
) -> NegativeTestResult:
    """Run a controller the guard forbids and check that it fails.

    The failure signature is a terminal share at least ``FAILURE_MARGIN``
    from the target, or a gain that hits the blow-up cap.
    """
    guard = guard_impossible(problem, forbidden_spec, classify(m))
    if not guard.rejected:
        raise ScenarioError(
            f"({forbidden_spec.matrix.value}, {forbidden_spec.rate.name}) is not forbidden for "
            f"{problem.kind.value} at x={problem.target}"
        )
    traj = integrate_controlled(m, forbidden_spec, s0, cfg)
    distance = abs(traj.x[-1] - problem.target)
    if traj.reason is Terminal.GAIN_OVERFLOW:
        verdict = NegativeVerdict.FAILS_AS_PREDICTED
    elif traj.reason is Terminal.STEP_FAILURE:
        verdict = NegativeVerdict.UNEXPECTED
    else:
        ok = distance >= FAILURE_MARGIN
        verdict = NegativeVerdict.FAILS_AS_PREDICTED if ok else NegativeVerdict.UNEXPECTED
    return NegativeTestResult(verdict, guard, traj, distance)
