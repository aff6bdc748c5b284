"""Immersions of flat tori, their derivative frames, and built-in scenarios."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .spectral import (GridError, GridSpec, SymTensorField, VecField, d, dot,
                       inverse, make_grid, partial, sym_pairs)

FREENESS_TOL = 1e-10
MAX_GRAM_CONDITION = 1e12
IMMERSION_TOL = 1e-12


class FreenessFailure(ValueError):
    """The frame {u_i, u_ij} does not have full rank at some grid point."""

    def __init__(self, message, worst_point=None, margin=0.0):
        super().__init__(message)
        self.worst_point = worst_point
        self.margin = margin


class MetricError(ValueError):
    pass


def frame_size(n: int) -> int:
    return n + n * (n + 1) // 2


@dataclass(frozen=True, eq=False)
class Immersion:
    map: VecField

    def __post_init__(self):
        grid = self.map.grid
        du = np.stack([d(self.map.values, grid, i) for i in range(grid.dim)])
        # pointwise (N, n) Jacobians
        jac = np.moveaxis(du, (0, 1), (-1, -2)).reshape(-1, self.ambient_dim, grid.dim)
        smin = np.linalg.svd(jac, compute_uv=False)[:, -1].min()
        if smin <= IMMERSION_TOL:
            raise GridError(f"map is not an immersion (min singular value {smin:.3e})")

    @property
    def grid(self) -> GridSpec:
        return self.map.grid

    @property
    def ambient_dim(self) -> int:
        return self.map.ambient_dim

    def derivative(self, i: int) -> VecField:
        return partial(self.map, i)


@dataclass(frozen=True, eq=False)
class Frame:
    """Per-point frame [u_1..u_n, u_11, u_12, .., u_nn] and its Gram data.

    ``columns`` has shape (d, N, *grid.shape). ``gram`` and ``gram_inv`` are
    pointwise (P, d, d) arrays over the flattened grid, ``chol`` the lower
    Cholesky factor of ``gram`` (None when the Gram matrix is not positive
    definite everywhere).
    """

    grid: GridSpec
    columns: np.ndarray
    gram: np.ndarray
    chol: np.ndarray | None
    gram_inv: np.ndarray | None

    @property
    def n(self) -> int:
        return self.grid.dim

    @property
    def ncols(self) -> int:
        return self.columns.shape[0]

    @property
    def ambient_dim(self) -> int:
        return self.columns.shape[1]

    def first(self, i: int) -> np.ndarray:
        """u_i, shape (N, *grid.shape)."""
        return self.columns[i]

    def second(self, i: int, j: int) -> np.ndarray:
        i, j = sorted((i, j))
        return self.columns[self.n + sym_pairs(self.n).index((i, j))]

    def pointwise(self) -> np.ndarray:
        """Frame matrices E(x), shape (P, N, d)."""
        return self.columns.reshape(self.ncols, self.ambient_dim, -1).transpose(2, 1, 0)

    def solve_in_span(self, rhs: np.ndarray) -> np.ndarray:
        """Return the field v(x) in span E(x) with E(x)^T v(x) = rhs(x).

        ``rhs`` has shape (d, *grid.shape); the result has shape (N, *grid.shape).
        """
        if self.gram_inv is None:
            raise FreenessFailure("frame is not free; cannot solve in its span")
        r = rhs.reshape(self.ncols, -1).T
        coef = np.einsum("pab,pb->pa", self.gram_inv, r)
        v = np.einsum("pna,pa->pn", self.pointwise(), coef)
        return v.T.reshape((self.ambient_dim,) + self.grid.shape)


def build_frame(u: Immersion, *, freeness_tol: float = FREENESS_TOL,
                max_condition: float = MAX_GRAM_CONDITION, check: bool = True) -> Frame:
    grid, n = u.grid, u.grid.dim
    vals = u.map.values
    cols = [d(vals, grid, i) for i in range(n)]
    cols += [d(vals, grid, i, j) for i, j in sym_pairs(n)]
    columns = np.stack(cols)
    ncols = len(cols)
    E = columns.reshape(ncols, u.ambient_dim, -1).transpose(2, 1, 0)
    gram = np.einsum("pna,pnb->pab", E, E)
    eig = np.linalg.eigvalsh(gram)
    lo, hi = eig[:, 0], eig[:, -1]
    worst = int(np.argmin(lo))
    ok = u.ambient_dim >= ncols and lo[worst] > freeness_tol and \
        np.max(hi / np.maximum(lo, np.finfo(float).tiny)) <= max_condition
    if not ok:
        if check:
            point = np.unravel_index(worst, grid.shape)
            x = tuple(float(grid.x1d[a]) for a in point)
            raise FreenessFailure(
                f"frame is not free: Gram min eigenvalue {lo[worst]:.3e} at grid point "
                f"{point} (x={x}); ambient dim {u.ambient_dim}, frame columns {ncols}",
                worst_point=point, margin=float(np.sqrt(max(lo[worst], 0.0))))
        return Frame(grid, columns, gram, None, None)
    chol = np.linalg.cholesky(gram)
    eye = np.broadcast_to(np.eye(ncols), gram.shape)
    linv = np.linalg.solve(chol, eye)
    gram_inv = np.einsum("pka,pkb->pab", linv, linv)
    return Frame(grid, columns, gram, chol, gram_inv)


def freeness_margin(frame: Frame) -> float:
    """Min over the grid of the d-th singular value of the frame matrix."""
    if frame.ambient_dim < frame.ncols:
        return 0.0
    sv = np.linalg.svd(frame.pointwise(), compute_uv=False)
    return float(sv[:, -1].min())


def pullback_metric(u: Immersion) -> SymTensorField:
    du = [u.derivative(i) for i in range(u.grid.dim)]
    return SymTensorField.from_function(u.grid, lambda i, j: dot(du[i], du[j]).values)


def check_metric(g: SymTensorField) -> None:
    eig = np.linalg.eigvalsh(g.matrix())
    if eig.min() <= 0.0:
        raise MetricError(f"metric is not positive definite (min eigenvalue {eig.min():.3e})")


# -- perturbations ------------------------------------------------------------

@dataclass
class PerturbationSpec:
    """Recipe for the metric perturbation h.

    kind "constant": ``matrix`` is a symmetric n x n list.
    kind "modes": ``modes`` is a list of {"pair": [i, j], "k": [...], "amp": a},
        each contributing a * cos(k.x) to h_ij (0-based indices).
    kind "random": band-limited with |k|_inf <= ``max_wavenumber``, scaled so the
        largest entry sup |h_ij| equals ``amplitude``; reproducible from ``seed``.
    kind "zero": h = 0.
    """

    kind: str = "zero"
    matrix: list | None = None
    modes: list = field(default_factory=list)
    max_wavenumber: int = 3
    amplitude: float = 0.0
    seed: int = 0

    @classmethod
    def zero(cls):
        return cls("zero")

    @classmethod
    def constant(cls, matrix):
        return cls("constant", matrix=np.atleast_2d(matrix).tolist())

    @classmethod
    def from_modes(cls, modes):
        return cls("modes", modes=list(modes))

    @classmethod
    def random(cls, max_wavenumber, amplitude, seed):
        return cls("random", max_wavenumber=max_wavenumber, amplitude=amplitude, seed=seed)

    def scaled(self, factor: float) -> "PerturbationSpec":
        if self.kind == "constant":
            return PerturbationSpec.constant(np.asarray(self.matrix) * factor)
        if self.kind == "modes":
            return PerturbationSpec.from_modes(
                [dict(m, amp=m["amp"] * factor) for m in self.modes])
        if self.kind == "random":
            return PerturbationSpec.random(self.max_wavenumber, self.amplitude * factor, self.seed)
        return self


def make_perturbation(spec: PerturbationSpec, grid: GridSpec) -> SymTensorField:
    n = grid.dim
    if spec.kind == "zero":
        return SymTensorField(grid, np.zeros((n * (n + 1) // 2,) + grid.shape))
    if spec.kind == "constant":
        return SymTensorField.constant(grid, spec.matrix)
    if spec.kind == "modes":
        vals = np.zeros((n * (n + 1) // 2,) + grid.shape)
        pairs = sym_pairs(n)
        for mode in spec.modes:
            i, j = sorted(mode["pair"])
            k = np.asarray(mode["k"], dtype=float)
            if (i, j) not in pairs or k.shape != (n,):
                raise ValueError(f"bad mode {mode!r} for a {n}-dimensional grid")
            if np.any(np.abs(k) >= grid.nyquist):
                raise GridError(f"wavevector {k.tolist()} at or beyond Nyquist {grid.nyquist}")
            phase = sum(ka * xa for ka, xa in zip(k, grid.coords))
            vals[pairs.index((i, j))] += mode["amp"] * np.cos(phase)
        return SymTensorField(grid, vals)
    if spec.kind == "random":
        if spec.max_wavenumber >= grid.nyquist:
            raise GridError(f"max wavenumber {spec.max_wavenumber} at or beyond Nyquist")
        rng = np.random.default_rng(spec.seed)
        shape = (n * (n + 1) // 2,) + grid.shape
        coef = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
        vals = inverse(coef * grid.band_mask(spec.max_wavenumber), grid)
        peak = np.max(np.abs(vals))
        return SymTensorField(grid, vals * (spec.amplitude / peak))
    raise ValueError(f"unknown perturbation kind {spec.kind!r}")


# -- scenarios ----------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Scenario:
    name: str
    u0: Immersion
    g: SymTensorField
    h: SymTensorField

    @property
    def grid(self) -> GridSpec:
        return self.u0.grid


def _scenario(name, u0: Immersion, h_spec: PerturbationSpec) -> Scenario:
    h = make_perturbation(h_spec, u0.grid)
    g = pullback_metric(u0) + h
    check_metric(g)
    return Scenario(name, u0, g, h)


def circle_map(m: int) -> Immersion:
    grid = make_grid(1, m)
    (x,) = grid.coords
    return Immersion(VecField(grid, np.stack([np.cos(x), np.sin(x)])))


def flat_torus_r6_map(m: int) -> Immersion:
    grid = make_grid(2, m)
    x, y = grid.coords
    return Immersion(VecField(grid, np.stack([
        np.cos(x), np.sin(x), np.cos(y), np.sin(y), np.cos(x + y), np.sin(x + y)])))


def clifford_torus_map(m: int) -> Immersion:
    """(cos x, sin x, cos y, sin y): an immersion of T^2 in R^4 that is not free."""
    grid = make_grid(2, m)
    x, y = grid.coords
    return Immersion(VecField(grid, np.stack([np.cos(x), np.sin(x), np.cos(y), np.sin(y)])))


def scenario_circle(m: int, h_spec: PerturbationSpec | None = None) -> Scenario:
    return _scenario("circle", circle_map(m), h_spec or PerturbationSpec.zero())


def scenario_flat_torus_r6(m: int, h_spec: PerturbationSpec | None = None) -> Scenario:
    return _scenario("flat_torus_r6", flat_torus_r6_map(m), h_spec or PerturbationSpec.zero())


SCENARIOS: dict[str, Callable[..., Scenario]] = {
    "circle": scenario_circle,
    "flat_torus_r6": scenario_flat_torus_r6,
}

SCENARIO_MAPS: dict[str, Callable[[int], Immersion]] = {
    "circle": circle_map,
    "flat_torus_r6": flat_torus_r6_map,
}
