"""
Pseudospectral calculus on the periodic box [0, 2pi)^n.

Fields are sampled on a uniform tensor-product grid with an even number of
points per axis. The forward transform is normalized by m**n so the zero
mode is the grid mean:

    f(x) = sum_k fhat_k exp(i k.x),    fhat_k = mean_x f(x) exp(-i k.x)

Derivatives are Fourier multipliers. For an odd power of an axis the Nyquist
coefficient is zeroed (keeps real fields real); even powers and the Helmholtz
symbol -(|k|^2 + 1) keep it.

All field containers hold a plain ndarray whose trailing ``n`` axes are the
spatial axes; the leading axes index ambient or tensor components. Every
operation in this module acts on the trailing axes only, so it works for
scalar, vector and tensor fields alike.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import cached_property

import numpy as np

MAX_GRID_POINTS = 2**22
IMAG_TOL = 1e-13


class GridError(ValueError):
    pass


@dataclass(frozen=True)
class GridSpec:
    """Uniform periodic grid with ``size`` points on each of ``dim`` axes."""

    dim: int
    size: int

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.size,) * self.dim

    @property
    def npoints(self) -> int:
        return self.size**self.dim

    @property
    def axes(self) -> tuple[int, ...]:
        return tuple(range(-self.dim, 0))

    @property
    def nyquist(self) -> int:
        return self.size // 2

    @cached_property
    def x1d(self) -> np.ndarray:
        return 2.0 * np.pi * np.arange(self.size) / self.size

    @cached_property
    def coords(self) -> tuple[np.ndarray, ...]:
        """Coordinate arrays x^1..x^n, each of shape ``self.shape``."""
        return tuple(np.meshgrid(*([self.x1d] * self.dim), indexing="ij"))

    @cached_property
    def k1d(self) -> np.ndarray:
        """Integer wavenumbers in FFT order (Nyquist appears as -m/2)."""
        return np.fft.fftfreq(self.size, d=1.0 / self.size)

    @cached_property
    def wavevectors(self) -> tuple[np.ndarray, ...]:
        return tuple(np.meshgrid(*([self.k1d] * self.dim), indexing="ij"))

    @cached_property
    def k_squared(self) -> np.ndarray:
        return sum(k**2 for k in self.wavevectors)

    @cached_property
    def k_max(self) -> np.ndarray:
        """Max-norm |k|_inf of every wavevector; 'wavenumber' in band limits."""
        return np.max(np.abs(np.stack(self.wavevectors)), axis=0)

    def multiplier(self, orders) -> np.ndarray:
        """Symbol of d^orders = prod_a (i k_a)^orders[a], Nyquist-safe."""
        out = np.ones(self.shape, dtype=complex)
        for k, p in zip(self.wavevectors, orders):
            if p == 0:
                continue
            sym = (1j * k) ** p
            if p % 2 == 1:
                sym = np.where(np.abs(k) == self.nyquist, 0.0, sym)
            out = out * sym
        return out

    def band_mask(self, kmax: float) -> np.ndarray:
        return self.k_max <= kmax


def make_grid(n: int, m: int, max_points: int = MAX_GRID_POINTS) -> GridSpec:
    if int(n) != n or n < 1:
        raise GridError(f"grid dimension must be a positive integer, got {n!r}")
    if int(m) != m or m < 8:
        raise GridError(f"grid size must be an integer >= 8, got {m!r}")
    if m % 2:
        raise GridError(f"grid size must be even, got {m}")
    if m**n > max_points:
        raise GridError(f"grid of {m}^{n} points exceeds the bound {max_points}")
    return GridSpec(int(n), int(m))


@dataclass(frozen=True, eq=False)
class Field:
    grid: GridSpec
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.shape[vals.ndim - self.grid.dim:] != self.grid.shape:
            raise GridError(
                f"values of shape {vals.shape} do not end in grid shape {self.grid.shape}"
            )
        if not np.all(np.isfinite(vals)):
            raise ValueError("field values must be finite")
        vals.flags.writeable = False
        object.__setattr__(self, "values", vals)

    @cached_property
    def spectrum(self) -> np.ndarray:
        return forward(self.values, self.grid)

    def _new(self, values):
        return type(self)(self.grid, values)

    def __add__(self, other):
        return self._new(self.values + _vals(other))

    def __sub__(self, other):
        return self._new(self.values - _vals(other))

    def __neg__(self):
        return self._new(-self.values)

    def __mul__(self, c):
        return self._new(self.values * c)

    __rmul__ = __mul__


def _vals(f):
    return f.values if isinstance(f, Field) else f


class ScalarField(Field):
    def __post_init__(self):
        super().__post_init__()
        if self.values.shape != self.grid.shape:
            raise GridError("scalar field must have exactly the grid shape")


class VecField(Field):
    """R^N-valued field, ``values`` of shape (N, *grid.shape)."""

    def __post_init__(self):
        super().__post_init__()
        if self.values.ndim != self.grid.dim + 1:
            raise GridError("vector field needs one leading component axis")

    @property
    def ambient_dim(self) -> int:
        return self.values.shape[0]

    def component(self, c: int) -> ScalarField:
        return ScalarField(self.grid, self.values[c])

    @classmethod
    def from_components(cls, comps) -> "VecField":
        comps = list(comps)
        return cls(comps[0].grid, np.stack([c.values for c in comps]))


def sym_pairs(n: int) -> list[tuple[int, int]]:
    """Index pairs (i, j), i <= j, in lexicographic order."""
    return [(i, j) for i in range(n) for j in range(i, n)]


class SymTensorField(Field):
    """Symmetric 2-tensor field storing the n(n+1)/2 entries with i <= j.

    ``values`` has shape (n(n+1)/2, *grid.shape) in ``sym_pairs`` order.
    """

    def __post_init__(self):
        super().__post_init__()
        n = self.grid.dim
        if self.values.shape[0] != n * (n + 1) // 2 or self.values.ndim != n + 1:
            raise GridError("tensor field needs n(n+1)/2 leading components")

    @property
    def dim(self) -> int:
        return self.grid.dim

    def __getitem__(self, ij) -> np.ndarray:
        i, j = sorted(ij)
        return self.values[sym_pairs(self.dim).index((i, j))]

    def matrix(self) -> np.ndarray:
        """Full pointwise matrices, shape (*grid.shape, n, n)."""
        n = self.dim
        out = np.empty(self.grid.shape + (n, n))
        for p, (i, j) in enumerate(sym_pairs(n)):
            out[..., i, j] = self.values[p]
            out[..., j, i] = self.values[p]
        return out

    @classmethod
    def from_function(cls, grid: GridSpec, fn) -> "SymTensorField":
        return cls(grid, np.stack([np.broadcast_to(fn(i, j), grid.shape)
                                   for i, j in sym_pairs(grid.dim)]))

    @classmethod
    def constant(cls, grid: GridSpec, matrix) -> "SymTensorField":
        mat = np.asarray(matrix, dtype=float)
        if mat.shape != (grid.dim, grid.dim) or not np.allclose(mat, mat.T, rtol=0, atol=0):
            raise ValueError(f"constant tensor must be a symmetric {grid.dim}x{grid.dim} matrix")
        return cls.from_function(grid, lambda i, j: np.full(grid.shape, mat[i, j]))


# -- transforms -------------------------------------------------------------

def forward(values: np.ndarray, grid: GridSpec) -> np.ndarray:
    return np.fft.fftn(values, axes=grid.axes) / grid.npoints


def inverse_complex(spectrum: np.ndarray, grid: GridSpec) -> np.ndarray:
    return np.fft.ifftn(spectrum * grid.npoints, axes=grid.axes)


def inverse(spectrum: np.ndarray, grid: GridSpec) -> np.ndarray:
    return inverse_complex(spectrum, grid).real


def apply_multiplier(values: np.ndarray, grid: GridSpec, symbol: np.ndarray) -> np.ndarray:
    return inverse(forward(values, grid) * symbol, grid)


def truncate(values: np.ndarray, grid: GridSpec, kmax: float | None = None) -> np.ndarray:
    """Zero all modes with |k|_inf > kmax (default: 2/3-rule cutoff m/3)."""
    if kmax is None:
        kmax = grid.size / 3
    return apply_multiplier(values, grid, grid.band_mask(kmax))


# -- calculus on raw arrays ---------------------------------------------------

def d(values: np.ndarray, grid: GridSpec, *axes: int) -> np.ndarray:
    """Mixed partial derivative along the given 0-based axes (repeats allowed)."""
    orders = [0] * grid.dim
    for a in axes:
        if not 0 <= a < grid.dim:
            raise IndexError(f"axis {a} out of range for a {grid.dim}-dimensional grid")
        orders[a] += 1
    if not axes:
        return np.array(values, dtype=float)
    return apply_multiplier(values, grid, grid.multiplier(orders))


def lap(values: np.ndarray, grid: GridSpec) -> np.ndarray:
    return apply_multiplier(values, grid, -grid.k_squared)


def helmholtz(values: np.ndarray, grid: GridSpec) -> np.ndarray:
    """(Laplacian - 1) applied to raw values."""
    return apply_multiplier(values, grid, -(grid.k_squared + 1.0))


def inv_helm(values: np.ndarray, grid: GridSpec) -> np.ndarray:
    return apply_multiplier(values, grid, -1.0 / (grid.k_squared + 1.0))


# -- field-level API ----------------------------------------------------------

def partial(f: Field, axis: int) -> Field:
    """d f / d x^axis (0-based axis) for any field type."""
    return f._new(d(f.values, f.grid, axis))


def laplacian(f: Field) -> Field:
    return f._new(lap(f.values, f.grid))


def helmholtz_op(f: Field) -> Field:
    return f._new(helmholtz(f.values, f.grid))


def inv_helmholtz(f: Field) -> Field:
    """Solve (Laplacian - 1) g = f; the symbol never vanishes."""
    return f._new(inv_helm(f.values, f.grid))


def dot(a: VecField, b: VecField) -> ScalarField:
    if a.grid != b.grid:
        raise GridError("fields live on different grids")
    if a.ambient_dim != b.ambient_dim:
        raise ValueError(f"ambient dimension mismatch: {a.ambient_dim} vs {b.ambient_dim}")
    return ScalarField(a.grid, np.einsum("c...,c...->...", a.values, b.values))


def multi_indices(n: int, order: int):
    """All derivative multi-indices of total order <= ``order`` as axis tuples."""
    for r in range(order + 1):
        yield from itertools.combinations_with_replacement(range(n), r)


def norm_C(f: Field, order: int) -> float:
    """Discrete C^order norm: sup over grid points, components and |beta| <= order."""
    if order not in (0, 1, 2, 3):
        raise ValueError(f"unsupported norm order {order}; expected 0..3")
    grid = f.grid
    spec = forward(f.values, grid)
    best = 0.0
    for beta in multi_indices(grid.dim, order):
        orders = [beta.count(a) for a in range(grid.dim)]
        vals = f.values if not beta else inverse(spec * grid.multiplier(orders), grid)
        best = max(best, float(np.max(np.abs(vals))))
    return best


def spectral_energy_fraction(f: Field, kmax: float) -> float:
    """Fraction of sum |fhat|^2 carried by modes with |k|_inf > kmax."""
    power = np.abs(forward(f.values, f.grid)) ** 2
    power = power.reshape((-1,) + f.grid.shape).sum(axis=0)
    total = power.sum()
    if total == 0.0:
        return 0.0
    return float(power[f.grid.k_max > kmax].sum() / total)


def random_band_limited(grid: GridSpec, kmax: float, rng: np.random.Generator,
                        lead: tuple[int, ...] = ()) -> np.ndarray:
    """Real random field(s) whose modes satisfy |k|_inf <= kmax."""
    if kmax >= grid.nyquist:
        raise GridError(f"band limit {kmax} reaches the Nyquist wavenumber {grid.nyquist}")
    shape = lead + grid.shape
    spec = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    spec = spec * grid.band_mask(kmax)
    return inverse(spec, grid)
