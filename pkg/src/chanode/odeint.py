"""Fixed-step explicit integrators that stay on the autodiff tape."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .autodiff import NonFiniteError, Tensor, lincomb

VectorField = Callable[[Tensor], Tensor]

METHODS = ("euler", "rk4")


class IntegrationError(FloatingPointError):
    def __init__(self, t: float, message: str = "non-finite state"):
        super().__init__(f"{message} at t={t:.6g}")
        self.t = t


@dataclass(frozen=True)
class TimeGrid:
    points: tuple[float, ...]
    substeps: int = 4

    def __post_init__(self):
        pts = tuple(float(p) for p in self.points)
        object.__setattr__(self, "points", pts)
        if not pts:
            raise ValueError("time grid needs at least one point")
        if any(b <= a for a, b in zip(pts, pts[1:])):
            raise ValueError("time grid must be strictly increasing")
        if self.substeps < 1:
            raise ValueError("substeps must be >= 1")

    @classmethod
    def blocks(cls, start: int, stop: int, total: int, substeps: int = 4) -> "TimeGrid":
        """Normalised block times ``n / total`` for ``n`` in ``[start, stop)``."""
        return cls(tuple(n / total for n in range(start, stop)), substeps)


def ode_step(method: str, f: VectorField, y: Tensor, t: float, h: float) -> Tensor:
    if h <= 0:
        raise ValueError("step size must be positive")
    try:
        if method == "euler":
            out = lincomb((1.0, h), (y, f(y)))
        elif method == "rk4":
            k1 = f(y)
            k2 = f(lincomb((1.0, h / 2), (y, k1)))
            k3 = f(lincomb((1.0, h / 2), (y, k2)))
            k4 = f(lincomb((1.0, h), (y, k3)))
            out = lincomb((1.0, h / 6, h / 3, h / 3, h / 6), (y, k1, k2, k3, k4))
        else:
            raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")
    except NonFiniteError as e:
        raise IntegrationError(t) from e
    return out


def ode_solve(f: VectorField, y0: Tensor, grid: TimeGrid, method: str = "rk4") -> list[Tensor]:
    """States at every grid point; the first entry is ``y0`` itself."""
    if not np.all(np.isfinite(y0.data)):
        raise IntegrationError(grid.points[0], "non-finite initial state")
    states = [y0]
    y = y0
    for a, b in zip(grid.points, grid.points[1:]):
        h = (b - a) / grid.substeps
        for s in range(grid.substeps):
            y = ode_step(method, f, y, a + s * h, h)
        states.append(y)
    return states


def solve_between(f: VectorField, y0: Tensor, t0: float, t1: float, substeps: int = 4,
                  method: str = "rk4") -> Tensor:
    return ode_solve(f, y0, TimeGrid((t0, t1), substeps), method)[-1]


def convergence_order(method: str, steps: Sequence[int] = (8, 16, 32, 64)) -> list[float]:
    """log2 error ratios for dy/dt = y on [0, 1] under successive step halving."""
    errs = []
    for n in steps:
        y = ode_solve(lambda x: x, Tensor(np.array([1.0])), TimeGrid((0.0, 1.0), n), method)[-1]
        errs.append(abs(float(y.data[0]) - np.e))
    return [float(np.log2(a / b)) for a, b in zip(errs, errs[1:])]
