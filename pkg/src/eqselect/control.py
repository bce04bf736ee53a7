"""Adaptive-gain controllers for the replicator equation.

A controller is a pair (control matrix, adaptation rate). The matrix picks the
single payoff entry that receives the additive gain ``g``; the rate ``phi``
drives the gain through ``dg/dt = phi(x) * g``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Callable, NamedTuple, Optional, Union

from .game import DomainError, GameClass, GameTag, PayoffMatrix, classify, mixed_ne

# Trailing window used to enforce "phi > payoff bound near the far consensus".
TRAILING_WINDOW = 0.05
TRAILING_MARGIN = 1.1

DEFAULT_P = 1.0
DEFAULT_Q = 1.0
DEFAULT_SETPOINT_P = 0.5


class DesignError(ValueError):
    """A controller cannot be produced for the request."""


class ClassMismatchError(DesignError):
    pass


class SideError(DesignError):
    pass


class MissingKnowledgeError(DesignError):
    def __init__(self, item: str, why: str):
        self.item = item
        super().__init__(f"missing knowledge: {item} ({why})")


class ImpossibleDesignError(DesignError):
    def __init__(self, verdict: "GuardVerdict"):
        self.verdict = verdict
        super().__init__(f"impossible by {verdict.citation}: {verdict.reason}")


class SystemState(NamedTuple):
    x: float
    g: float


# ---------------------------------------------------------------------------
# control matrices


class ControllerClass(str, Enum):
    CONFORMITY = "conformity"
    INNOVATION = "innovation"


class ControlMatrix(str, Enum):
    """Single-entry control matrices; the tag names the controlled entry."""

    G1 = "G1"  # (1,1)
    G2 = "G2"  # (1,2)
    G3 = "G3"  # (2,1)
    G4 = "G4"  # (2,2)

    @property
    def entries(self) -> tuple[tuple[int, int], tuple[int, int]]:
        return _ENTRIES[self]

    @property
    def controller_class(self) -> ControllerClass:
        if self in (ControlMatrix.G1, ControlMatrix.G4):
            return ControllerClass.CONFORMITY
        return ControllerClass.INNOVATION

    def mirrored(self) -> ControlMatrix:
        """Matrix acting on the same entry after swapping action labels."""
        return _MIRROR[self]


_ENTRIES = {
    ControlMatrix.G1: ((1, 0), (0, 0)),
    ControlMatrix.G2: ((0, 1), (0, 0)),
    ControlMatrix.G3: ((0, 0), (1, 0)),
    ControlMatrix.G4: ((0, 0), (0, 1)),
}
_MIRROR = {
    ControlMatrix.G1: ControlMatrix.G4,
    ControlMatrix.G4: ControlMatrix.G1,
    ControlMatrix.G2: ControlMatrix.G3,
    ControlMatrix.G3: ControlMatrix.G2,
}


def controller_class(g: ControlMatrix) -> ControllerClass:
    return g.controller_class


# ---------------------------------------------------------------------------
# adaptation rates


def _positive(name: str, v: float) -> None:
    if not (math.isfinite(v) and v > 0):
        raise DomainError(f"{name} must be > 0, got {v!r}")


def _open_unit(name: str, v: float) -> None:
    if not (0.0 < v < 1.0):
        raise DomainError(f"{name} must lie in (0, 1), got {v!r}")


@dataclass(frozen=True)
class PowerShifted:
    """p (x**q - delta**q): negative below delta, positive above."""

    p: float
    q: float
    delta: float
    name = "power_shifted"

    def __post_init__(self):
        _positive("p", self.p)
        _positive("q", self.q)
        _open_unit("delta", self.delta)

    def __call__(self, x: float) -> float:
        return self.p * (x**self.q - self.delta**self.q)

    def derivative(self, x: float) -> float:
        return self.p * self.q * x ** (self.q - 1)

    def roots(self) -> tuple[float, ...]:
        return (self.delta,)

    def mirrored(self) -> PowerShiftedMirror:
        return PowerShiftedMirror(self.p, self.q, 1 - self.delta)


@dataclass(frozen=True)
class Power:
    """p x**q."""

    p: float
    q: float
    name = "power"

    def __post_init__(self):
        _positive("p", self.p)
        _positive("q", self.q)

    def __call__(self, x: float) -> float:
        return self.p * x**self.q

    def derivative(self, x: float) -> float:
        return self.p * self.q * x ** (self.q - 1)

    def roots(self) -> tuple[float, ...]:
        return (0.0,)

    def mirrored(self) -> PowerMirror:
        return PowerMirror(self.p, self.q)


@dataclass(frozen=True)
class PowerShiftedMirror:
    """p ((1-x)**q - (1-delta)**q): positive below delta, negative above."""

    p: float
    q: float
    delta: float
    name = "power_shifted_mirror"

    def __post_init__(self):
        _positive("p", self.p)
        _positive("q", self.q)
        _open_unit("delta", self.delta)

    def __call__(self, x: float) -> float:
        return self.p * ((1 - x) ** self.q - (1 - self.delta) ** self.q)

    def derivative(self, x: float) -> float:
        return -self.p * self.q * (1 - x) ** (self.q - 1)

    def roots(self) -> tuple[float, ...]:
        return (self.delta,)

    def mirrored(self) -> PowerShifted:
        return PowerShifted(self.p, self.q, 1 - self.delta)


@dataclass(frozen=True)
class PowerMirror:
    """p (1-x)**q."""

    p: float
    q: float
    name = "power_mirror"

    def __post_init__(self):
        _positive("p", self.p)
        _positive("q", self.q)

    def __call__(self, x: float) -> float:
        return self.p * (1 - x) ** self.q

    def derivative(self, x: float) -> float:
        return -self.p * self.q * (1 - x) ** (self.q - 1)

    def roots(self) -> tuple[float, ...]:
        return (1.0,)

    def mirrored(self) -> Power:
        return Power(self.p, self.q)


@dataclass(frozen=True)
class Proportional:
    """sign * p (x - xbar)."""

    p: float
    xbar: float
    sign: int = 1
    name = "proportional"

    def __post_init__(self):
        _positive("p", self.p)
        _open_unit("xbar", self.xbar)
        if self.sign not in (1, -1):
            raise DomainError(f"sign must be +1 or -1, got {self.sign!r}")

    def __call__(self, x: float) -> float:
        return self.sign * self.p * (x - self.xbar)

    def derivative(self, x: float) -> float:
        return self.sign * self.p

    def roots(self) -> tuple[float, ...]:
        return (self.xbar,)

    def mirrored(self) -> Proportional:
        return Proportional(self.p, 1 - self.xbar, -self.sign)


@dataclass(frozen=True)
class Atan:
    """atan(x - xbar), a saturating proportional rate."""

    xbar: float
    name = "atan"

    def __post_init__(self):
        _open_unit("xbar", self.xbar)

    def __call__(self, x: float) -> float:
        return math.atan(x - self.xbar)

    def derivative(self, x: float) -> float:
        return 1.0 / (1.0 + (x - self.xbar) ** 2)

    def roots(self) -> tuple[float, ...]:
        return (self.xbar,)

    def mirrored(self):
        raise NotImplementedError("atan rate has no mirrored family")


@dataclass(frozen=True)
class Cubic:
    """(x - xbar)**3, a rate that wanes fast near the target."""

    xbar: float
    name = "cubic"

    def __post_init__(self):
        _open_unit("xbar", self.xbar)

    def __call__(self, x: float) -> float:
        return (x - self.xbar) ** 3

    def derivative(self, x: float) -> float:
        return 3 * (x - self.xbar) ** 2

    def roots(self) -> tuple[float, ...]:
        return (self.xbar,)

    def mirrored(self):
        raise NotImplementedError("cubic rate has no mirrored family")


AdaptationRate = Union[PowerShifted, Power, PowerShiftedMirror, PowerMirror, Proportional, Atan, Cubic]

RATE_FAMILIES: dict[str, type] = {
    cls.name: cls
    for cls in (PowerShifted, Power, PowerShiftedMirror, PowerMirror, Proportional, Atan, Cubic)
}


def rate_params(rate: AdaptationRate) -> dict:
    return {k: getattr(rate, k) for k in rate.__dataclass_fields__}


@dataclass(frozen=True)
class ControllerSpec:
    matrix: ControlMatrix
    rate: AdaptationRate

    def mirrored(self) -> ControllerSpec:
        return ControllerSpec(self.matrix.mirrored(), self.rate.mirrored())

    def gain_coefficients(self) -> tuple[int, int]:
        """(G11 - G21, G12 - G22): weights of g*x and g*(1-x) in the x equation."""
        (g11, g12), (g21, g22) = self.matrix.entries
        return g11 - g21, g12 - g22

    def vector_field(self, m: PayoffMatrix) -> Callable[[float, float], tuple[float, float]]:
        """Unchecked fast closure (x, g) -> (dx, dg) for integrators."""
        k0 = m.a + m.d - m.b - m.c
        k1 = m.b - m.d
        cx, c1 = self.gain_coefficients()
        phi = self.rate

        def f(x: float, g: float) -> tuple[float, float]:
            dx = x * (1 - x) * (k0 * x + k1 + cx * g * x + c1 * g * (1 - x))
            return dx, phi(x) * g

        return f

    def advantage(self, m: PayoffMatrix) -> Callable[[float, float, float], float]:
        """Controlled reward of action 1 minus action 2, as f(x, 1 - x, g)."""
        k0 = m.a + m.d - m.b - m.c
        k1 = m.b - m.d
        cx, c1 = self.gain_coefficients()

        def adv(x: float, y: float, g: float) -> float:
            return k0 * x + k1 + cx * g * x + c1 * g * y

        return adv


def controlled_rhs(m: PayoffMatrix, spec: ControllerSpec, s: SystemState) -> tuple[float, float]:
    x, g = s
    if not (0.0 <= x <= 1.0):
        raise DomainError(f"x={x!r} outside [0, 1]")
    if not (g >= 0.0 and math.isfinite(g)):
        raise DomainError(f"gain g={g!r} must be finite and >= 0")
    return spec.vector_field(m)(x, g)


# ---------------------------------------------------------------------------
# steady gains for set-point regulation


def gbar_dominant(m: PayoffMatrix, xbar: float) -> float:
    """Steady gain a - c + (b - d)(1 - xbar)/xbar for a game dominated by action 1."""
    _open_unit("xbar", xbar)
    if classify(m).tag is not GameTag.DOMINANT_ACTION1:
        raise ClassMismatchError("steady-gain formula needs a > c and b > d")
    return m.a - m.c + (m.b - m.d) * (1 - xbar) / xbar


def gbar_anticoordination(m: PayoffMatrix, xbar: float) -> float:
    """Steady gain a + d - c - b + (b - d)/xbar for an anti-coordination game."""
    _open_unit("xbar", xbar)
    cls = classify(m)
    if cls.tag is not GameTag.ANTI_COORDINATION:
        raise ClassMismatchError("steady-gain formula needs a < c and d < b")
    if not xbar < cls.mixed_ne:
        raise SideError(f"target {xbar} must lie below the mixed equilibrium {cls.mixed_ne}")
    return m.a + m.d - m.c - m.b + (m.b - m.d) / xbar


# ---------------------------------------------------------------------------
# problems


class ProblemKind(str, Enum):
    CONSENSUS_REACHING = "consensus_reaching"
    CONSENSUS_STABILIZATION = "consensus_stabilization"
    SET_POINT = "set_point"


class Side(str, Enum):
    BELOW = "below"
    ABOVE = "above"
    UNKNOWN = "unknown"


@dataclass(frozen=True)
class ProblemSpec:
    """What the designer wants and what they know.

    ``delta`` is the certified attraction radius around the target consensus
    (reaching only). ``payoff_bound`` upper-bounds the payoff gap that pushes
    the state to the far consensus (a - c when targeting 0, d - b when
    targeting 1). ``vanishing_gain`` asks for g -> 0; it is inherent in
    consensus reaching and can be requested for the other problems, where it
    is impossible.
    """

    kind: ProblemKind
    target: float
    delta: Optional[float] = None
    payoff_bound: Optional[float] = None
    side_of_mixed_ne: Side = Side.UNKNOWN
    vanishing_gain: Optional[bool] = None

    def __post_init__(self):
        if self.kind is ProblemKind.SET_POINT:
            _open_unit("set-point target", self.target)
        elif self.target not in (0, 1):
            raise DomainError(f"consensus target must be 0 or 1, got {self.target!r}")
        if self.delta is not None:
            _open_unit("delta", self.delta)

    @property
    def requires_vanishing_gain(self) -> bool:
        if self.vanishing_gain is not None:
            return self.vanishing_gain
        return self.kind is ProblemKind.CONSENSUS_REACHING

    def relabeled(self) -> ProblemSpec:
        side = {Side.BELOW: Side.ABOVE, Side.ABOVE: Side.BELOW}.get(self.side_of_mixed_ne, Side.UNKNOWN)
        target = 1 - self.target
        if self.kind is not ProblemKind.SET_POINT:
            target = int(target)
        return replace(self, target=target, side_of_mixed_ne=side)


def consensus_reaching(target: int, delta: Optional[float] = None, **kw) -> ProblemSpec:
    return ProblemSpec(ProblemKind.CONSENSUS_REACHING, target, delta=delta, **kw)


def consensus_stabilization(target: int, **kw) -> ProblemSpec:
    return ProblemSpec(ProblemKind.CONSENSUS_STABILIZATION, target, **kw)


def set_point(target: float, **kw) -> ProblemSpec:
    return ProblemSpec(ProblemKind.SET_POINT, target, **kw)


# ---------------------------------------------------------------------------
# impossibility guard


@dataclass(frozen=True)
class GuardVerdict:
    rejected: bool
    reason: str = ""
    citation: str = ""


NOT_REJECTED = GuardVerdict(False)
LEMMA_VANISHING_GAIN = "vanishing-gain impossibility lemma"
PROP_INNOVATION = "innovation-gain impossibility proposition"


def guard_impossible(problem: ProblemSpec, spec: Optional[ControllerSpec], m_class: GameClass) -> GuardVerdict:
    """Reject requests that the impossibility results rule out.

    ``NOT_REJECTED`` does not certify that the controller works.
    """
    if m_class.is_degenerate:
        return GuardVerdict(True, "degenerate game: equilibrium structure undefined", "classification")
    if problem.requires_vanishing_gain and problem.target not in m_class.stable_equilibria():
        return GuardVerdict(
            True,
            f"target {problem.target} is not a stable equilibrium of the uncontrolled game "
            f"({m_class.tag.value}); no controller with g -> 0 can guarantee convergence",
            LEMMA_VANISHING_GAIN,
        )
    if spec is not None and problem.kind is ProblemKind.CONSENSUS_STABILIZATION:
        bad = {0: ControlMatrix.G3, 1: ControlMatrix.G2}[int(problem.target)]
        if spec.matrix is bad or spec.matrix is ControlMatrix.G3:
            return GuardVerdict(
                True,
                f"innovation gain {spec.matrix.value} cannot stabilize the unstable consensus "
                f"x={problem.target} with a converging gain",
                PROP_INNOVATION,
            )
    return NOT_REJECTED


# ---------------------------------------------------------------------------
# sufficient-condition checks


class TheoremId(str, Enum):
    CONFORMITY_REACHING = "conformity_reaching"
    INNOVATION_REACHING = "innovation_reaching"
    STABILIZATION = "stabilization"
    SETPOINT_DOMINANT = "setpoint_dominant"
    SETPOINT_ANTICOORDINATION = "setpoint_anticoordination"


@dataclass(frozen=True)
class ConditionCheck:
    name: str
    passed: bool
    method: str  # "grid", "analytic", "heuristic", "structural"
    witness: Optional[float] = None
    detail: str = ""


@dataclass(frozen=True)
class ConditionReport:
    theorem: TheoremId
    checks: tuple[ConditionCheck, ...]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def certified(self) -> bool:
        return self.passed and not any(c.method == "heuristic" for c in self.checks)

    def to_dict(self) -> dict:
        return {
            "theorem": self.theorem.value,
            "passed": self.passed,
            "certified": self.certified,
            "checks": [
                {"name": c.name, "passed": c.passed, "method": c.method, "witness": c.witness, "detail": c.detail}
                for c in self.checks
            ],
        }


GRID_POINTS = 10_001
LIMIT_EXPONENTS = (0.5, 1.0, 2.0, 3.0)


def _grid(lo: float, hi: float, n: int = GRID_POINTS) -> list[float]:
    return [lo + (hi - lo) * i / (n - 1) for i in range(n)]


def _sign_check(name, phi, lo, hi, want_positive, roots, include_lo, include_hi) -> ConditionCheck:
    pts = [x for x in _grid(0.0, 1.0) if lo < x < hi]
    pts += [lo] if include_lo else []
    pts += [hi] if include_hi else []
    # probe just inside each end and on both sides of known roots
    eps = 1e-9
    pts += [lo + eps, hi - eps]
    pts += [r + s for r in roots for s in (-eps, eps) if lo < r + s < hi]
    for x in sorted(set(pts)):
        v = phi(x)
        ok = v > 0 if want_positive else v < 0
        if not ok:
            return ConditionCheck(name, False, "grid", x, f"phi({x:.6g}) = {v:.6g}")
    return ConditionCheck(name, True, "grid")


def _bound_check(name, phi, lo, hi, bound) -> ConditionCheck:
    for x in _grid(lo, hi, 1001):
        v = phi(x)
        if not v > bound:
            return ConditionCheck(name, False, "grid", x, f"phi({x:.6g}) = {v:.6g} <= {bound}")
    return ConditionCheck(name, True, "grid", detail=f"phi > {bound} on [{lo:g}, {hi:g}]")


def _limit_probe(phi) -> ConditionCheck:
    xs = [2.0**-k for k in range(4, 21)]
    for h in LIMIT_EXPONENTS:
        try:
            ratios = [phi(x) / x**h for x in xs]
        except (ZeroDivisionError, OverflowError):
            continue
        tail = ratios[-5:]
        if all(math.isfinite(r) and r > 0 for r in tail):
            spread = (max(tail) - min(tail)) / max(tail)
            if spread < 1e-2:
                return ConditionCheck(
                    "limit phi(x)/x^h -> k > 0 as x -> 0+",
                    True,
                    "heuristic",
                    detail=f"h~{h:g}, k~{tail[-1]:.6g} (sampled, not a certificate)",
                )
    return ConditionCheck("limit phi(x)/x^h -> k > 0 as x -> 0+", False, "heuristic", xs[-1], "no candidate exponent fits")


def verify_rate_conditions(
    rate: AdaptationRate,
    theorem: TheoremId,
    *,
    delta: Optional[float] = None,
    payoff_bound: Optional[float] = None,
    xbar: Optional[float] = None,
    mixed_ne: Optional[float] = None,
    mirror: bool = False,
) -> ConditionReport:
    """Check a rate against a theorem's sufficient conditions.

    ``mirror=True`` checks the conditions for target 1, i.e. against
    ``phi(1 - x)`` with the relabeled parameters. Failures come back as data.
    """
    if mirror:
        phi = lambda x: rate(1 - x)  # noqa: E731
        roots = tuple(1 - r for r in rate.roots())
    else:
        phi = rate
        roots = rate.roots()
    checks: list[ConditionCheck] = []

    if theorem in (TheoremId.CONFORMITY_REACHING, TheoremId.INNOVATION_REACHING):
        if delta is None:
            checks.append(ConditionCheck("delta supplied", False, "structural", detail="delta required"))
            return ConditionReport(theorem, tuple(checks))
        if isinstance(rate, (PowerShifted, PowerShiftedMirror)):
            root = rate.delta if not mirror else 1 - rate.delta
            exact = abs(phi(delta)) <= 1e-12 * max(1.0, rate.p)
            checks.append(ConditionCheck("phi(delta) = 0", exact, "analytic", None if exact else root))
        checks.append(_sign_check("phi < 0 on [0, delta)", phi, 0.0, delta, False, roots, True, False))
        checks.append(_sign_check("phi > 0 on (delta, 1]", phi, delta, 1.0, True, roots, False, True))
        if theorem is TheoremId.CONFORMITY_REACHING:
            if payoff_bound is None:
                checks.append(ConditionCheck("payoff bound supplied", False, "structural", detail="payoff_bound required"))
            else:
                checks.append(
                    _bound_check("phi > payoff bound near x = 1", phi, 1 - TRAILING_WINDOW, 1.0, payoff_bound)
                )

    elif theorem is TheoremId.STABILIZATION:
        checks.append(_sign_check("phi > 0 on (0, 1]", phi, 0.0, 1.0, True, roots, False, True))
        family = PowerMirror if mirror else Power
        if isinstance(rate, family):
            checks.append(
                ConditionCheck(
                    "limit phi(x)/x^h -> k > 0 as x -> 0+",
                    True,
                    "analytic",
                    detail=f"h={rate.q:g}, k={rate.p:g}",
                )
            )
        else:
            checks.append(_limit_probe(phi))
        if payoff_bound is not None:
            checks.append(_bound_check("phi > payoff bound near x = 1", phi, 1 - TRAILING_WINDOW, 1.0, payoff_bound))

    else:
        sign = -1 if mirror else 1
        is_prop = isinstance(rate, Proportional)
        checks.append(ConditionCheck("rate is proportional", is_prop, "structural"))
        if is_prop:
            checks.append(ConditionCheck(f"sign = {sign:+d}", rate.sign == sign, "structural"))
            if xbar is not None:
                checks.append(ConditionCheck("rate zero at target", rate.xbar == xbar, "structural", rate.xbar))
        if theorem is TheoremId.SETPOINT_ANTICOORDINATION and mixed_ne is not None and xbar is not None:
            ok = xbar > mixed_ne if mirror else xbar < mixed_ne
            checks.append(ConditionCheck("target on the designed side of x*", ok, "structural", xbar))
    return ConditionReport(theorem, tuple(checks))


# ---------------------------------------------------------------------------
# design factory


@dataclass(frozen=True)
class DesignResult:
    spec: ControllerSpec
    theorem: TheoremId
    certificate: ConditionReport
    predicted_gbar: Optional[float] = None
    notes: tuple[str, ...] = field(default_factory=tuple)


def _trailing_p(p: float, q: float, bound: float, base: float, shift: float) -> float:
    """Smallest-change p making p (base**q - shift) exceed ``bound`` on the window."""
    lowest = base**q - shift
    if lowest <= 0:
        raise DesignError("trailing window overlaps the negative part of the rate")
    if p * lowest > bound:
        return p
    return TRAILING_MARGIN * bound / lowest


def design(
    m: PayoffMatrix,
    problem: ProblemSpec,
    *,
    conformity: bool = False,
    p: Optional[float] = None,
    q: Optional[float] = None,
) -> DesignResult:
    """Pick a certified controller for ``problem`` on game ``m``.

    The controller choice uses only the class of ``m`` plus the knowledge
    flags carried by ``problem``; the payoffs themselves are read only to
    predict the steady gain of set-point designs. ``conformity=True`` selects
    the conformity controller for consensus reaching.
    """
    cls = classify(m)
    if cls.is_degenerate:
        raise ClassMismatchError("degenerate game (a == c or d == b): no design")
    verdict = guard_impossible(problem, None, cls)
    if verdict.rejected:
        raise ImpossibleDesignError(verdict)
    q = DEFAULT_Q if q is None else q
    mirror = problem.target == 1 or (problem.kind is ProblemKind.SET_POINT and _setpoint_mirrored(cls, problem))

    if problem.kind is ProblemKind.CONSENSUS_REACHING:
        return _design_reaching(cls, problem, conformity, DEFAULT_P if p is None else p, q)
    if problem.kind is ProblemKind.CONSENSUS_STABILIZATION:
        return _design_stabilization(cls, problem, DEFAULT_P if p is None else p, q)
    return _design_setpoint(m, cls, problem, DEFAULT_SETPOINT_P if p is None else p, mirror)


def _design_reaching(cls, problem, conformity, p, q) -> DesignResult:
    if cls.tag is not GameTag.COORDINATION:
        raise ClassMismatchError(f"consensus reaching needs a coordination game, got {cls.tag.value}")
    if problem.delta is None:
        raise MissingKnowledgeError("delta", "radius of the target's certified basin")
    mirror = problem.target == 1
    delta = problem.delta
    if conformity:
        if problem.payoff_bound is None:
            raise MissingKnowledgeError("payoff_bound", "conformity control must outgrow the payoff gap near the far consensus")
        p = _trailing_p(p, q, problem.payoff_bound, 1 - TRAILING_WINDOW, delta**q)
        theorem = TheoremId.CONFORMITY_REACHING
        matrix = ControlMatrix.G4
    else:
        theorem = TheoremId.INNOVATION_REACHING
        matrix = ControlMatrix.G3
    rate: AdaptationRate = PowerShifted(p, q, delta)
    if mirror:
        matrix, rate = matrix.mirrored(), rate.mirrored()
    report = verify_rate_conditions(
        rate, theorem, delta=delta, payoff_bound=problem.payoff_bound if conformity else None, mirror=mirror
    )
    return DesignResult(ControllerSpec(matrix, rate), theorem, report)


def _design_stabilization(cls, problem, p, q) -> DesignResult:
    target = int(problem.target)
    unstable_here = target not in cls.stable_equilibria() and cls.tag is not GameTag.COORDINATION
    if not unstable_here:
        raise ClassMismatchError(f"consensus x={target} is not unstable in a {cls.tag.value} game")
    dominant = cls.tag in (GameTag.DOMINANT_ACTION1, GameTag.DOMINANT_ACTION2)
    bound = None
    if dominant:
        if problem.payoff_bound is None:
            raise MissingKnowledgeError("payoff_bound", "dominant games need phi above the payoff gap near the far consensus")
        bound = problem.payoff_bound
        p = _trailing_p(p, q, bound, 1 - TRAILING_WINDOW, 0.0)
    rate: AdaptationRate = Power(p, q)
    matrix = ControlMatrix.G4
    if target == 1:
        matrix, rate = matrix.mirrored(), rate.mirrored()
    report = verify_rate_conditions(rate, TheoremId.STABILIZATION, payoff_bound=bound, mirror=target == 1)
    return DesignResult(ControllerSpec(matrix, rate), TheoremId.STABILIZATION, report)


def _setpoint_mirrored(cls: GameClass, problem: ProblemSpec) -> bool:
    if cls.tag is GameTag.DOMINANT_ACTION2:
        return True
    if cls.tag is GameTag.ANTI_COORDINATION:
        return problem.side_of_mixed_ne is Side.ABOVE
    return False


def _design_setpoint(m, cls, problem, p, mirror) -> DesignResult:
    xbar = problem.target
    if cls.tag in (GameTag.DOMINANT_ACTION1, GameTag.DOMINANT_ACTION2):
        theorem = TheoremId.SETPOINT_DOMINANT
        formula = gbar_dominant
    elif cls.tag is GameTag.ANTI_COORDINATION:
        if problem.side_of_mixed_ne is Side.UNKNOWN:
            raise MissingKnowledgeError("side_of_mixed_ne", "whether the target lies below or above x*")
        theorem = TheoremId.SETPOINT_ANTICOORDINATION
        formula = gbar_anticoordination
    else:
        raise ClassMismatchError("set-point regulation is not available for coordination games")

    if mirror:
        gbar = formula(m.relabeled(), 1 - xbar)
        spec = ControllerSpec(ControlMatrix.G2, Proportional(p, xbar, -1))
    else:
        gbar = formula(m, xbar)
        spec = ControllerSpec(ControlMatrix.G3, Proportional(p, xbar, 1))
    report = verify_rate_conditions(spec.rate, theorem, xbar=xbar, mixed_ne=cls.mixed_ne, mirror=mirror)
    return DesignResult(spec, theorem, report, predicted_gbar=gbar)
