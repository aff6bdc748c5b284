"""Randomized checks of the operator identities behind the fixed-point form."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import PerturbationSpec, build_frame, circle_map, flat_torus_r6_map, make_perturbation
from .operators import (apply_L0, apply_M0, apply_Q0, composite_residual, q_lower,
                        q_quadratic, splitting_residual)
from .spectral import GridSpec, VecField, norm_C, random_band_limited

FIELD_AMPLITUDE = 0.05


@dataclass
class IdentityCheck:
    name: str
    residual: float
    bound: float

    @property
    def passed(self) -> bool:
        return self.residual <= self.bound

    @property
    def ratio(self) -> float:
        return self.residual / self.bound if self.bound > 0 else (0.0 if self.residual == 0 else np.inf)


def random_vec_field(grid: GridSpec, ambient_dim: int, rng: np.random.Generator,
                     kmax: float | None = None, amplitude: float = FIELD_AMPLITUDE) -> VecField:
    """Band-limited R^N field (default |k|_inf <= m/6 so products stay below Nyquist)."""
    if kmax is None:
        kmax = grid.size // 6
    vals = random_band_limited(grid, kmax, rng, (ambient_dim,))
    return VecField(grid, vals * (amplitude / np.max(np.abs(vals))))


def random_sym_spec(grid: GridSpec, rng: np.random.Generator, kmax: float | None = None,
                    amplitude: float = 0.01) -> PerturbationSpec:
    if kmax is None:
        kmax = grid.size // 6
    return PerturbationSpec.random(int(kmax), amplitude, int(rng.integers(2**31)))


def _worst(name, pairs):
    """Keep the sample with the largest residual/bound ratio."""
    checks = [IdentityCheck(name, r, b) for r, b in pairs]
    return max(checks, key=lambda c: c.ratio)


def run_identity_suite(size: int = 32, seed: int = 7, samples: int = 5, *, q0=apply_Q0) -> list[IdentityCheck]:
    rng = np.random.default_rng(seed)
    results = []
    for label, u0 in (("circle", circle_map(size)), ("torus", flat_torus_r6_map(size))):
        frame = build_frame(u0)
        grid, N = u0.grid, u0.ambient_dim

        pairs = []
        for _ in range(samples):
            h = make_perturbation(random_sym_spec(grid, rng), grid)
            r = norm_C(apply_L0(frame, apply_M0(frame, h)) - h, 0)
            pairs.append((r, 1e-11 * norm_C(h, 1)))
        results.append(_worst(f"right_inverse[{label}]", pairs))

        vs = [random_vec_field(grid, N, rng) for _ in range(samples)]
        results.append(_worst(f"splitting[{label}]",
                              [(splitting_residual(v), 1e-11 * norm_C(v, 2) ** 2) for v in vs]))
        results.append(_worst(f"composite[{label}]", [
            (composite_residual(frame, v, q0=q0), 1e-10 * (1 + norm_C(v, 2)) * norm_C(v, 2))
            for v in vs]))

        pairs = []
        for v in vs:
            w, v2 = random_vec_field(grid, N, rng), random_vec_field(grid, N, rng)
            a, b = rng.standard_normal(2)
            lhs = q_lower(a * v + b * v2, w)
            q1, q2 = q_lower(v, w), q_lower(v2, w)
            swap = q_lower(w, v)
            scale = max(np.abs(q1.qij).max(), np.abs(q2.qij).max(), np.abs(q1.qi).max(), 1e-300)
            err = max(np.abs(lhs.qi - (a * q1.qi + b * q2.qi)).max(),
                      np.abs(lhs.qij - (a * q1.qij + b * q2.qij)).max(),
                      np.abs(swap.qi - q1.qi).max(), np.abs(swap.qij - q1.qij).max())
            pairs.append((err, 1e-12 * scale * (1 + abs(a) + abs(b))))
        results.append(_worst(f"bilinearity[{label}]", pairs))

        pairs = []
        for v in vs:
            bil, quad = q_lower(v, v), q_quadratic(v)
            err = max(np.abs(bil.qi - quad.qi).max(), np.abs(bil.qij - quad.qij).max())
            pairs.append((err, 1e-12 * max(np.abs(quad.qij).max(), 1e-300)))
        results.append(_worst(f"diagonal[{label}]", pairs))
    return results


def format_table(checks: list[IdentityCheck]) -> str:
    width = max(len(c.name) for c in checks)
    lines = [f"{'identity':<{width}}  {'residual':>10}  {'bound':>10}  result"]
    for c in checks:
        lines.append(f"{c.name:<{width}}  {c.residual:10.3e}  {c.bound:10.3e}  "
                     f"{'PASS' if c.passed else 'FAIL'}")
    return "\n".join(lines)
