"""Run metrics and (p, q) parameter sweeps."""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.stats import spearmanr

from .control import RATE_FAMILIES, ControlMatrix, ControllerSpec, SystemState
from .dynamics import DEFAULT_G0, IntegratorConfig, Trajectory, integrate_controlled
from .game import PayoffMatrix

DEFAULT_P_GRID = (0.25, 0.5, 1.0, 2.0, 4.0, 8.0)
DEFAULT_Q_GRID = (0.5, 1.0, 2.0, 3.0, 4.0)


@dataclass(frozen=True)
class RunMetrics:
    J_g: float
    g_max: float
    g_final: float
    x_final: float
    converged: bool
    settle_time: Optional[float]
    terminal_reason: str

    def to_dict(self) -> dict:
        return {
            "x_final": self.x_final,
            "g_final": self.g_final,
            "J_g": self.J_g,
            "g_max": self.g_max,
            "converged": self.converged,
            "settle_time": self.settle_time,
            "terminal_reason": self.terminal_reason,
        }


def settle_time(t: Sequence[float], x: Sequence[float], target: float, eps_x: float) -> Optional[float]:
    """First sample time after which |x - target| < eps_x holds to the end."""
    inside = np.abs(np.asarray(x) - target) < eps_x
    if not inside[-1]:
        return None
    outside = np.flatnonzero(~inside)
    return float(t[0] if outside.size == 0 else t[outside[-1] + 1])


def metrics(traj: Trajectory, target: float, eps_x: float = 1e-3) -> RunMetrics:
    """Control effort, peak and final gain, and settling of one run.

    A run counts as converged when it ends without failure, its share has
    settled within ``eps_x`` of ``target`` and, for controlled runs, the gain
    rate |phi(x)| g is below the configured settling threshold.
    """
    if not len(traj):
        raise ValueError("empty trajectory")
    t = np.asarray(traj.t)
    g = np.asarray(traj.g)
    ts = settle_time(t, traj.x, target, eps_x)
    converged = not traj.reason.failed and ts is not None
    if converged and traj.controller is not None:
        x_end, g_end = traj.final
        converged = abs(traj.controller.rate(x_end)) * g_end < traj.config.convergence.eps_g_settle
    return RunMetrics(
        J_g=float(np.trapezoid(g, t)),
        g_max=float(g.max()),
        g_final=float(g[-1]),
        x_final=float(traj.x[-1]),
        converged=converged,
        settle_time=ts,
        terminal_reason=traj.reason.value,
    )


@dataclass(frozen=True)
class Scenario:
    """A controlled run whose rate family is completed by (p, q) at sweep time.

    ``fixed`` holds the remaining rate parameters, e.g. ``{"delta": 0.4}``.
    """

    game: PayoffMatrix
    matrix: ControlMatrix
    family: str
    target: float
    fixed: dict = field(default_factory=dict)
    s0: SystemState = SystemState(0.7, DEFAULT_G0)
    cfg: IntegratorConfig = field(default_factory=IntegratorConfig)
    eps_x: float = 1e-3

    def __post_init__(self):
        if self.family not in RATE_FAMILIES:
            raise ValueError(f"unknown rate family {self.family!r}")

    def controller(self, p: float, q: float) -> ControllerSpec:
        return ControllerSpec(self.matrix, RATE_FAMILIES[self.family](p=p, q=q, **self.fixed))

    def run(self, p: float, q: float) -> Trajectory:
        return integrate_controlled(self.game, self.controller(p, q), self.s0, self.cfg)


def reaching_effort_scenario() -> Scenario:
    """Innovation control pulling a pure coordination game from x = 0.7 to 0."""
    return Scenario(PayoffMatrix(1, 0, 0, 1), ControlMatrix.G3, "power_shifted", 0.0, {"delta": 0.4})


def stabilization_gain_scenario() -> Scenario:
    """Conformity control holding the prisoner's dilemma at the unstable x = 0."""
    return Scenario(PayoffMatrix(1, 3, 0, 2), ControlMatrix.G4, "power", 0.0, s0=SystemState(0.99, DEFAULT_G0))


@dataclass(frozen=True)
class SweepCell:
    p: float
    q: float
    metrics: Optional[RunMetrics]
    error: str = ""


@dataclass(frozen=True)
class SweepResult:
    scenario: Scenario
    p_grid: tuple[float, ...]
    q_grid: tuple[float, ...]
    cells: tuple[SweepCell, ...]

    def table(self, name: str) -> np.ndarray:
        """Metric ``name`` as a (len(p_grid), len(q_grid)) array; NaN where a cell errored."""
        vals = [math.nan if c.metrics is None else getattr(c.metrics, name) for c in self.cells]
        return np.array(vals, dtype=float).reshape(len(self.p_grid), len(self.q_grid))


def _run_cell(scenario: Scenario, p: float, q: float) -> SweepCell:
    try:
        traj = scenario.run(p, q)
    except (ValueError, ArithmeticError) as e:
        return SweepCell(p, q, None, f"{type(e).__name__}: {e}")
    return SweepCell(p, q, metrics(traj, scenario.target, scenario.eps_x))


def sweep(
    scenario: Scenario,
    p_grid: Sequence[float] = DEFAULT_P_GRID,
    q_grid: Sequence[float] = DEFAULT_Q_GRID,
    parallelism: int = 1,
) -> SweepResult:
    """Run every (p, q) cell; results come back row-major by p, then q.

    ``parallelism > 1`` spreads cells over worker processes. The order of the
    result never depends on it.
    """
    if not p_grid or not q_grid:
        raise ValueError("sweep grids must be non-empty")
    if parallelism < 1:
        raise ValueError("parallelism must be >= 1")
    ps = [p for p in p_grid for _ in q_grid]
    qs = [q for _ in p_grid for q in q_grid]
    if parallelism == 1:
        cells = [_run_cell(scenario, p, q) for p, q in zip(ps, qs)]
    else:
        with ProcessPoolExecutor(max_workers=parallelism) as pool:
            cells = list(pool.map(_run_cell, [scenario] * len(ps), ps, qs))
    return SweepResult(scenario, tuple(p_grid), tuple(q_grid), tuple(cells))


def axis_correlations(values: np.ndarray, p_grid: Sequence[float], q_grid: Sequence[float]) -> dict:
    """Spearman correlation of ``values`` with the grid, one line at a time.

    Returns ``{"q": [...], "p": [...]}``: the correlation with q along each
    fixed-p row, and with p along each fixed-q column.
    """
    rows = [float(spearmanr(q_grid, values[i, :])[0]) for i in range(len(p_grid))]
    cols = [float(spearmanr(p_grid, values[:, j])[0]) for j in range(len(q_grid))]
    return {"q": rows, "p": cols}
