"""Picard iteration v <- M0 h + Q0(v, v) and end-to-end isometry checks."""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

from .geometry import (Frame, Immersion, Scenario, build_frame,
                       freeness_margin)
from .operators import apply_M0, apply_Q0
from .spectral import (SymTensorField, VecField, d, norm_C,
                       spectral_energy_fraction, sym_pairs)

log = logging.getLogger(__name__)

STALL_LIMIT = 5


class SolveError(RuntimeError):
    def __init__(self, message, report=None, immersion=None):
        super().__init__(message)
        self.report = report
        self.immersion = immersion


class NotConverged(SolveError):
    pass


class Diverged(SolveError):
    pass


@dataclass
class SolveConfig:
    max_iters: int = 100
    tol_step: float = 1e-12
    tol_residual: float = 1e-10
    divergence_factor: float = 50.0
    alpha: float = 0.5  # Hoelder exponent; reported, never used numerically
    dealias: bool = False

    def __post_init__(self):
        if int(self.max_iters) != self.max_iters or self.max_iters < 1:
            raise ValueError(f"max_iters must be a positive integer, got {self.max_iters!r}")
        for name in ("tol_step", "tol_residual", "divergence_factor"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)!r}")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha!r}")
        self.dealias = bool(self.dealias)


@dataclass
class SolveReport:
    converged: bool = False
    status: str = "running"
    iterations: int = 0
    step_norms: list = field(default_factory=list)
    contraction_ratios: list = field(default_factory=list)
    residuals: list = field(default_factory=list)
    final_residual: float | None = None
    freeness_margin: float = 0.0
    spectral_tail: float | None = None
    alpha: float = 0.5

    def to_dict(self) -> dict:
        return {k: _finite_or_none(v) for k, v in asdict(self).items()}

    @classmethod
    def from_dict(cls, data: dict) -> "SolveReport":
        return cls(**{k: data[k] for k in cls.__dataclass_fields__ if k in data})


def _finite_or_none(x):
    if isinstance(x, list):
        return [_finite_or_none(y) for y in x]
    if isinstance(x, float) and not math.isfinite(x):
        return None
    return x


def phi_step(frame: Frame, h: SymTensorField, v: VecField, *, dealias: bool = False,
             m0h: VecField | None = None) -> VecField:
    """One application of v -> M0 h + Q0(v, v)."""
    if m0h is None:
        m0h = apply_M0(frame, h)
    return m0h + apply_Q0(frame, v, v, dealias=dealias)


def isometry_residual(u: Immersion | VecField, g: SymTensorField) -> float:
    """max over (i, j) of sup |d_i u . d_j u - g_ij|."""
    vals = u.map.values if isinstance(u, Immersion) else u.values
    grid = g.grid
    du = [d(vals, grid, i) for i in range(grid.dim)]
    return max(float(np.max(np.abs(np.einsum("c...,c...->...", du[i], du[j]) - g[i, j])))
               for i, j in sym_pairs(grid.dim))


def perturbation_residual(u0: Immersion, v: VecField, h: SymTensorField) -> float:
    """max |u_i . d_j v + u_j . d_i v + d_i v . d_j v - h_ij|, an independent route to
    the isometry defect of u0 + v when h = g - pullback(u0)."""
    grid = v.grid
    ui = [d(u0.map.values, grid, i) for i in range(grid.dim)]
    dv = [d(v.values, grid, i) for i in range(grid.dim)]
    dot = lambda a, b: np.einsum("c...,c...->...", a, b)
    return max(float(np.max(np.abs(dot(ui[i], dv[j]) + dot(ui[j], dv[i]) + dot(dv[i], dv[j])
                                   - h[i, j])))
               for i, j in sym_pairs(grid.dim))


def spectral_tail(v: VecField, kmax: float | None = None) -> float:
    """Energy fraction of v above |k|_inf = kmax (default two thirds of Nyquist)."""
    if kmax is None:
        kmax = 2.0 * v.grid.nyquist / 3.0
    return spectral_energy_fraction(v, kmax)


def solve(scenario: Scenario, cfg: SolveConfig | None = None, *,
          frame: Frame | None = None,
          callback: Callable[[int, VecField, SolveReport], None] | None = None):
    """Iterate from v = 0 until the step norm falls below ``cfg.tol_step``.

    Returns ``(u, report)`` with u = u0 + v. Raises NotConverged or Diverged
    (carrying the partial report and last immersion) when the iteration does
    not settle, FreenessFailure when u0 is not free.
    """
    cfg = cfg or SolveConfig()
    if frame is None:
        frame = build_frame(scenario.u0)
    u0, h, g = scenario.u0, scenario.h, scenario.g
    report = SolveReport(freeness_margin=freeness_margin(frame), alpha=cfg.alpha)
    m0h = apply_M0(frame, h)

    v = VecField(u0.grid, np.zeros_like(u0.map.values))
    first_norm = None
    stall = 0
    failure = None
    for it in range(1, cfg.max_iters + 1):
        with np.errstate(all="ignore"):
            new_vals = phi_step(frame, h, v, dealias=cfg.dealias, m0h=m0h).values \
                if np.all(np.isfinite(v.values)) else None
        if new_vals is None or not np.all(np.isfinite(new_vals)):
            failure = Diverged(f"non-finite iterate at step {it}")
            break
        v_new = VecField(v.grid, new_vals)
        step = norm_C(v_new - v, 2)
        v = v_new
        report.iterations = it
        report.step_norms.append(step)
        if len(report.step_norms) > 1:
            prev = report.step_norms[-2]
            report.contraction_ratios.append(step / prev if prev > 0 else 0.0)
        report.residuals.append(isometry_residual(VecField(v.grid, u0.map.values + v.values), g))
        if callback is not None:
            callback(it, v, report)
        log.debug("iter %d step %.3e residual %.3e", it, step, report.residuals[-1])

        if step <= cfg.tol_step:
            break
        vnorm = norm_C(v, 2)
        if first_norm is None:
            first_norm = vnorm
        elif vnorm > cfg.divergence_factor * first_norm:
            failure = Diverged(
                f"iterate norm {vnorm:.3e} exceeds {cfg.divergence_factor} x first step {first_norm:.3e}")
            break
        if report.contraction_ratios and report.contraction_ratios[-1] > 1.0:
            stall += 1
            if stall >= STALL_LIMIT:
                failure = Diverged(f"step norms grew for {STALL_LIMIT} consecutive iterations")
                break
        else:
            stall = 0
    else:
        failure = NotConverged(f"step norm above {cfg.tol_step:g} after {cfg.max_iters} iterations")

    u_vals = u0.map.values + v.values
    report.final_residual = report.residuals[-1] if report.residuals else None
    if np.all(np.isfinite(v.values)):
        report.spectral_tail = spectral_tail(v)

    if failure is None and not report.final_residual <= cfg.tol_residual:
        failure = NotConverged(
            f"step converged but isometry residual {report.final_residual:.3e} > {cfg.tol_residual:g}")

    try:
        u = Immersion(VecField(u0.grid, u_vals)) if np.all(np.isfinite(u_vals)) else None
    except ValueError:
        u = None
    if failure is not None:
        report.status = type(failure).__name__
        failure.report, failure.immersion = report, u
        raise failure
    if u is None:
        report.status = "NotConverged"
        raise NotConverged("converged map is not an immersion", report, None)
    report.converged = True
    report.status = "converged"
    return u, report


def basin_probe(family: Callable[[float], Scenario], cfg: SolveConfig | None = None, *,
                lo: float = 0.0, hi: float = 1.0, rel_width: float = 0.05,
                max_bisections: int = 60) -> float:
    """Bisect the perturbation amplitude between a converging ``lo`` and a failing ``hi``.

    Returns the bracket midpoint once (hi - lo) <= rel_width * hi.
    """
    cfg = cfg or SolveConfig()

    def converges(a):
        try:
            solve(family(a), cfg)
            return True
        except SolveError:
            return False

    if not converges(lo):
        raise ValueError(f"lower amplitude {lo} does not converge")
    if converges(hi):
        raise ValueError(f"upper amplitude {hi} converges; widen the bracket")
    for _ in range(max_bisections):
        if hi - lo <= rel_width * hi:
            break
        mid = 0.5 * (lo + hi)
        if converges(mid):
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)
