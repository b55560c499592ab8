"""Pieces shared by the compression schemes."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .solver import CONVERGED, INFEASIBLE, LogDetProgram, MMResult, Point, SolverOptions, minorize_maximize, refine

CAP_FACTOR = 1e6


def noise_cap(sigma) -> float:
    """Largest admissible quantization-noise eigenvalue for a signal covariance.

    Noise this large makes the compressed signal worthless ("discard the
    dimension") while keeping every matrix finite.
    """
    sigma = np.atleast_2d(sigma)
    norm = float(np.linalg.norm(sigma, 2)) if sigma.size else 0.0
    return CAP_FACTOR * max(1.0, norm)


@dataclass
class MMOptions:
    """Outer-loop settings.

    ``refine`` follows the MM iterations with a damped-Newton pass on the
    nonconvex program itself (kept only if it improves the objective).
    """

    max_iter: int = 50
    tol: float = 1e-5
    solver: SolverOptions = field(default_factory=SolverOptions)
    refine: bool = True


@dataclass
class OptimizationRecord:
    """Outer-loop diagnostics kept with every optimized solution."""

    trace: list = field(default_factory=list)
    residuals: list = field(default_factory=list)
    outer_iters: int = 0
    status: str = "ok"
    monotone: bool = True

    @classmethod
    def from_mm(cls, mm: MMResult, status: str | None = None):
        return cls(list(mm.trace), list(mm.residuals), mm.iterations,
                   status or ("ok" if mm.status != "infeasible" else "infeasible"), mm.monotone)

    @property
    def residual(self) -> float:
        return max(self.residuals, default=0.0)

    def merge(self, other: "OptimizationRecord") -> "OptimizationRecord":
        """Concatenate per-edge or per-stage records."""
        status = self.status if self.status != "ok" else other.status
        return OptimizationRecord(self.trace + other.trace, self.residuals + other.residuals,
                                  self.outer_iters + other.outer_iters, status,
                                  self.monotone and other.monotone)

    def check(self, slack: float = 1e-7, feas_tol: float = 1e-6):
        """Assert monotone objective traces and feasible iterates."""
        assert self.monotone, "MM objective decreased"
        assert self.residual < feas_tol, f"infeasible iterate (residual {self.residual:.3e})"


def maximize(program: LogDetProgram, x0: Point, opts: MMOptions) -> tuple[Point, "OptimizationRecord"]:
    """MM from ``x0``, then the optional second-order refinement."""
    mm = minorize_maximize(program, x0, opts.max_iter, opts.tol, opts.solver)
    rec = OptimizationRecord.from_mm(mm)
    x = mm.x
    if opts.refine and mm.status != INFEASIBLE:
        rep = refine(program, x, opts.solver)
        if rep.objective > mm.objective:
            x = rep.x
            rec.trace.append(float(rep.objective))
            rec.residuals.append(float(rep.max_violation))
    return x, rec


def embedding(total: int, dim: int, offset: int) -> np.ndarray:
    """``total x dim`` matrix placing a ``dim`` block at row ``offset``."""
    S = np.zeros((total, dim), dtype=complex)
    S[offset + np.arange(dim), np.arange(dim)] = 1.0
    return S
