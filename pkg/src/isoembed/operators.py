"""
Linearized isometry operator, its pointwise right inverse, and the nonlocal
quadratic splitting that turns the embedding equation into a fixed point.

Notation: u_i, u_ij are first and second partials of the base immersion,
v is the displacement u - u0, and (L - 1) denotes Laplacian minus identity.

    (L0 v)_ij = d_i(u_j . v) + d_j(u_i . v) - 2 u_ij . v

    Q_i(v, v)  = (L-1)^-1 [ ((L-1) v) . d_i v ]
    Q_ij(v, v) = (L-1)^-1 [ 2 sum_k d_i d_k v . d_j d_k v + d_i v . d_j v
                            - 2 ((L-1) v) . d_i d_j v ]

so that d_i v . d_j v = d_i Q_j + d_j Q_i + Q_ij. Q0 is the frame-span vector
with u_i . Q0 = -Q_i and u_ij . Q0 = Q_ij / 2, which gives
L0(v - Q0(v, v)) = L0 v + d_i v . d_j v.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import Frame
from .spectral import (GridError, GridSpec, SymTensorField, VecField, d,
                       helmholtz, inv_helm, norm_C, sym_pairs, truncate)


@dataclass(frozen=True, eq=False)
class LoweredQ:
    """Q_i and Q_ij values; ``qi`` shape (n, *grid), ``qij`` shape (n(n+1)/2, *grid)."""

    grid: GridSpec
    qi: np.ndarray
    qij: np.ndarray

    def q(self, i: int) -> np.ndarray:
        return self.qi[i]

    def q2(self, i: int, j: int) -> np.ndarray:
        i, j = sorted((i, j))
        return self.qij[sym_pairs(self.grid.dim).index((i, j))]


def _check(frame: Frame | None, *fields: VecField):
    grid = fields[0].grid
    for f in fields[1:]:
        if f.grid != grid:
            raise GridError("fields live on different grids")
        if f.ambient_dim != fields[0].ambient_dim:
            raise ValueError("ambient dimension mismatch")
    if frame is not None:
        if frame.grid != grid:
            raise GridError("frame and field live on different grids")
        if frame.ambient_dim != fields[0].ambient_dim:
            raise ValueError(
                f"ambient dimension mismatch: frame {frame.ambient_dim}, "
                f"field {fields[0].ambient_dim}")


def _inner(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.einsum("c...,c...->...", a, b)


def apply_L0(frame: Frame, v: VecField) -> SymTensorField:
    _check(frame, v)
    grid, n = v.grid, v.grid.dim
    ui_v = [_inner(frame.first(i), v.values) for i in range(n)]
    out = [d(ui_v[j], grid, i) + d(ui_v[i], grid, j) - 2.0 * _inner(frame.second(i, j), v.values)
           for i, j in sym_pairs(n)]
    return SymTensorField(grid, np.stack(out))


def apply_M0(frame: Frame, h: SymTensorField) -> VecField:
    """Pointwise frame-span solution of u_i . v = 0, -2 u_ij . v = h_ij."""
    if h.grid != frame.grid:
        raise GridError("frame and tensor live on different grids")
    n = frame.n
    rhs = np.concatenate([np.zeros((n,) + h.grid.shape), -0.5 * h.values])
    return VecField(h.grid, frame.solve_in_span(rhs))


def q_lower(v: VecField, w: VecField, *, dealias: bool = False) -> LoweredQ:
    """Symmetric bilinear Q_i(v, w), Q_ij(v, w); the diagonal gives the quadratic forms."""
    _check(None, v, w)
    grid, n = v.grid, v.grid.dim
    V, W = v.values, w.values
    Hv, Hw = helmholtz(V, grid), helmholtz(W, grid)
    dv = [d(V, grid, i) for i in range(n)]
    dw = [d(W, grid, i) for i in range(n)]
    ddv = {(i, j): d(V, grid, i, j) for i, j in sym_pairs(n)}
    ddw = {(i, j): d(W, grid, i, j) for i, j in sym_pairs(n)}

    def dd(table, i, j):
        return table[(min(i, j), max(i, j))]

    def lower(integrand):
        if dealias:
            integrand = truncate(integrand, grid)
        return inv_helm(integrand, grid)

    qi = [lower(0.5 * (_inner(Hv, dw[i]) + _inner(Hw, dv[i]))) for i in range(n)]
    qij = []
    for i, j in sym_pairs(n):
        s = sum(_inner(dd(ddv, i, k), dd(ddw, j, k)) + _inner(dd(ddw, i, k), dd(ddv, j, k))
                for k in range(n))
        s = s + 0.5 * (_inner(dv[i], dw[j]) + _inner(dw[i], dv[j]))
        s = s - (_inner(Hv, dd(ddw, i, j)) + _inner(Hw, dd(ddv, i, j)))
        qij.append(lower(s))
    return LoweredQ(grid, np.stack(qi), np.stack(qij))


def q_quadratic(v: VecField) -> LoweredQ:
    """Q_i(v, v), Q_ij(v, v) evaluated straight from the quadratic formulas."""
    grid, n = v.grid, v.grid.dim
    V = v.values
    Hv = helmholtz(V, grid)
    qi = [inv_helm(_inner(Hv, d(V, grid, i)), grid) for i in range(n)]
    qij = []
    for i, j in sym_pairs(n):
        s = 2.0 * sum(_inner(d(V, grid, i, k), d(V, grid, j, k)) for k in range(n))
        s = s + _inner(d(V, grid, i), d(V, grid, j)) - 2.0 * _inner(Hv, d(V, grid, i, j))
        qij.append(inv_helm(s, grid))
    return LoweredQ(grid, np.stack(qi), np.stack(qij))


def splitting_residual(v: VecField) -> float:
    """sup |d_i v . d_j v - d_i Q_j - d_j Q_i - Q_ij| over pairs and grid."""
    grid, n = v.grid, v.grid.dim
    q = q_lower(v, v)
    dv = [d(v.values, grid, i) for i in range(n)]
    worst = 0.0
    for i, j in sym_pairs(n):
        r = _inner(dv[i], dv[j]) - d(q.q(j), grid, i) - d(q.q(i), grid, j) - q.q2(i, j)
        worst = max(worst, float(np.max(np.abs(r))))
    return worst


def apply_Q0(frame: Frame, v: VecField, w: VecField, *, dealias: bool = False) -> VecField:
    _check(frame, v, w)
    q = q_lower(v, w, dealias=dealias)
    rhs = np.concatenate([-q.qi, 0.5 * q.qij])
    return VecField(v.grid, frame.solve_in_span(rhs))


def embedding_lhs(frame: Frame, v: VecField) -> SymTensorField:
    """d_i(u_j . v) + d_j(u_i . v) - 2 u_ij . v + d_i v . d_j v."""
    grid = v.grid
    dv = [d(v.values, grid, i) for i in range(grid.dim)]
    quad = SymTensorField.from_function(grid, lambda i, j: _inner(dv[i], dv[j]))
    return apply_L0(frame, v) + quad


def composite_residual(frame: Frame, v: VecField, *, q0=apply_Q0) -> float:
    """sup |G(v) - L0(v - Q0(v, v))| where G is ``embedding_lhs``.

    ``q0`` can be swapped for a deliberately broken operator in regression checks.
    """
    _check(frame, v)
    rhs = apply_L0(frame, v - q0(frame, v, v))
    return norm_C(embedding_lhs(frame, v) - rhs, 0)
