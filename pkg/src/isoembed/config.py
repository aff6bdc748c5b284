"""JSON run configuration for ``isoembed solve``."""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .geometry import SCENARIOS, PerturbationSpec
from .solver import SolveConfig
from .spectral import MAX_GRID_POINTS


class ConfigError(ValueError):
    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


@dataclass
class OutputPaths:
    report: Path
    embedding: Path | None = None
    trace: Path | None = None
    figures: Path | None = None


@dataclass
class RunConfig:
    scenario: str
    grid_size: int
    perturbation: PerturbationSpec
    solver: SolveConfig
    output: OutputPaths
    raw: dict = field(default_factory=dict, repr=False)

    @property
    def seed(self) -> int:
        return self.perturbation.seed

    def canonical_json(self) -> str:
        """Normalized config text; hashed into report provenance."""
        out = {
            "scenario": self.scenario,
            "grid_size": self.grid_size,
            "perturbation": asdict(self.perturbation),
            "solver": asdict(self.solver),
        }
        return json.dumps(out, sort_keys=True, separators=(",", ":"))


_PERTURBATION_KEYS = {"kind", "matrix", "modes", "max_wavenumber", "amplitude", "seed"}
_SOLVER_KEYS = set(SolveConfig.__dataclass_fields__)
_OUTPUT_KEYS = {"report", "embedding", "trace", "figures"}


def _require(mapping, key, where, kinds):
    if key not in mapping:
        raise ConfigError(f"{where}{key}", "missing required field")
    value = mapping[key]
    if not isinstance(value, kinds) or isinstance(value, bool) and bool not in kinds:
        raise ConfigError(f"{where}{key}", f"expected {' or '.join(k.__name__ for k in kinds)}, "
                                           f"got {type(value).__name__}")
    return value


def _unknown(mapping, allowed, where):
    extra = sorted(set(mapping) - allowed)
    if extra:
        raise ConfigError(f"{where}{extra[0]}", "unknown field")


def _path(value, base: Path, name: str) -> Path:
    if not isinstance(value, str) or not value:
        raise ConfigError(name, "expected a non-empty path string")
    p = Path(value)
    if not p.is_absolute():
        p = base / p
    parent = p.parent
    while not parent.exists():
        parent = parent.parent
    if not os.access(parent, os.W_OK):
        raise ConfigError(name, f"{p} is not writable")
    return p


def parse_config(data: dict, base_dir: Path | str = ".") -> RunConfig:
    base = Path(base_dir)
    if not isinstance(data, dict):
        raise ConfigError("<root>", "config must be a JSON object")
    _unknown(data, {"scenario", "grid_size", "perturbation", "solver", "output"}, "")

    scenario = _require(data, "scenario", "", (str,))
    if scenario not in SCENARIOS:
        raise ConfigError("scenario", f"unknown scenario {scenario!r}; known: {sorted(SCENARIOS)}")
    m = _require(data, "grid_size", "", (int,))
    if m < 8 or m % 2:
        raise ConfigError("grid_size", f"must be an even integer >= 8, got {m}")
    n = 1 if scenario == "circle" else 2
    if m**n > MAX_GRID_POINTS:
        raise ConfigError("grid_size", f"{m}^{n} points exceeds {MAX_GRID_POINTS}")

    pert = data.get("perturbation", {"kind": "zero"})
    if not isinstance(pert, dict):
        raise ConfigError("perturbation", "expected an object")
    _unknown(pert, _PERTURBATION_KEYS, "perturbation.")
    kind = _require(pert, "kind", "perturbation.", (str,))
    if kind == "zero":
        spec = PerturbationSpec.zero()
    elif kind == "constant":
        mat = _require(pert, "matrix", "perturbation.", (int, float, list))
        try:
            spec = PerturbationSpec.constant(mat)
        except (TypeError, ValueError) as exc:
            raise ConfigError("perturbation.matrix", str(exc)) from None
        if len(spec.matrix) != n or any(len(row) != n for row in spec.matrix):
            raise ConfigError("perturbation.matrix", f"expected a {n}x{n} matrix")
    elif kind == "modes":
        modes = _require(pert, "modes", "perturbation.", (list,))
        for idx, mode in enumerate(modes):
            where = f"perturbation.modes[{idx}]"
            if not isinstance(mode, dict) or set(mode) != {"pair", "k", "amp"}:
                raise ConfigError(where, "expected an object with keys pair, k, amp")
            if len(mode["pair"]) != 2 or not all(0 <= i < n for i in mode["pair"]):
                raise ConfigError(f"{where}.pair", f"expected two 0-based indices below {n}")
            if len(mode["k"]) != n or any(abs(k) >= m // 2 for k in mode["k"]):
                raise ConfigError(f"{where}.k", f"expected {n} integers below Nyquist {m // 2}")
        spec = PerturbationSpec.from_modes(modes)
    elif kind == "random":
        kmax = _require(pert, "max_wavenumber", "perturbation.", (int,))
        amp = _require(pert, "amplitude", "perturbation.", (int, float))
        seed = _require(pert, "seed", "perturbation.", (int,))
        if not 0 <= kmax < m // 2:
            raise ConfigError("perturbation.max_wavenumber", f"must lie in [0, {m // 2})")
        if amp < 0:
            raise ConfigError("perturbation.amplitude", "must be non-negative")
        spec = PerturbationSpec.random(kmax, float(amp), seed)
    else:
        raise ConfigError("perturbation.kind", f"unknown kind {kind!r}")

    solver_data = data.get("solver", {})
    if not isinstance(solver_data, dict):
        raise ConfigError("solver", "expected an object")
    _unknown(solver_data, _SOLVER_KEYS, "solver.")
    try:
        solver = SolveConfig(**solver_data)
    except (TypeError, ValueError) as exc:
        key = next((k for k in solver_data if k in str(exc)), "")
        raise ConfigError(f"solver.{key}" if key else "solver", str(exc)) from None

    out = _require(data, "output", "", (dict,))
    _unknown(out, _OUTPUT_KEYS, "output.")
    report = _path(_require(out, "report", "output.", (str,)), base, "output.report")
    output = OutputPaths(
        report=report,
        embedding=_path(out["embedding"], base, "output.embedding") if out.get("embedding") else None,
        trace=_path(out["trace"], base, "output.trace") if out.get("trace") else None,
        figures=(report.parent if "figures" not in out
                 else _path(out["figures"], base, "output.figures") if out["figures"] else None),
    )
    return RunConfig(scenario, m, spec, solver, output, raw=data)


def load_config(path: Path | str) -> RunConfig:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigError("<file>", f"{path} does not exist") from None
    except json.JSONDecodeError as exc:
        raise ConfigError("<file>", f"invalid JSON: {exc}") from None
    return parse_config(data, path.parent)
