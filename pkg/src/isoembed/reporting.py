"""Report JSON, embedding CSV and iteration-trace CSV writers/readers."""

from __future__ import annotations

import csv
import hashlib
import json
import platform
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .spectral import GridSpec, make_grid
from .solver import SolveReport

TIMESTAMP_KEY = "timestamp"


def build_report(report: SolveReport, *, scenario: str, n: int, ambient_dim: int,
                 grid_size: int, config_json: str, seed: int, solution: dict | None = None,
                 message: str | None = None) -> dict:
    return {
        "scenario": {"name": scenario, "n": n, "N": ambient_dim, "grid_size": grid_size},
        "report": report.to_dict(),
        "solution": solution or {},
        "message": message,
        "provenance": {
            "config_sha256": hashlib.sha256(config_json.encode()).hexdigest(),
            "package_version": __version__,
            "numpy_version": np.__version__,
            "python_version": platform.python_version(),
            "seed": seed,
            TIMESTAMP_KEY: datetime.now(timezone.utc).isoformat(timespec="seconds"),
        },
    }


def dumps_report(doc: dict) -> str:
    return json.dumps(doc, indent=2, sort_keys=True, allow_nan=False) + "\n"


def write_report(doc: dict, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps_report(doc))


def read_report(path: Path) -> dict:
    return json.loads(Path(path).read_text())


def strip_timestamps(doc: dict) -> dict:
    doc = json.loads(json.dumps(doc))
    doc.get("provenance", {}).pop(TIMESTAMP_KEY, None)
    return doc


def write_embedding_csv(values: np.ndarray, grid: GridSpec, path: Path) -> None:
    """Rows x1..xn,u1..uN over grid points in row-major (first axis slowest) order."""
    path.parent.mkdir(parents=True, exist_ok=True)
    n, N = grid.dim, values.shape[0]
    cols = [c.ravel() for c in grid.coords] + [values[c].ravel() for c in range(N)]
    header = ",".join([f"x{i + 1}" for i in range(n)] + [f"u{c + 1}" for c in range(N)])
    np.savetxt(path, np.column_stack(cols), fmt="%.17g", delimiter=",", header=header, comments="")


def read_embedding_csv(path: Path) -> tuple[GridSpec, np.ndarray]:
    """Inverse of ``write_embedding_csv``: the grid and (N, *grid.shape) samples."""
    with open(path) as fh:
        header = fh.readline().strip().split(",")
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    n = sum(1 for h in header if h.startswith("x"))
    m = round(data.shape[0] ** (1.0 / n))
    grid = make_grid(n, m)
    u = data[:, n:].T.reshape((-1,) + grid.shape)
    return grid, u


def write_trace_csv(report: SolveReport, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["iter", "step_norm", "contraction_ratio", "residual"])
        for k, step in enumerate(report.step_norms):
            ratio = report.contraction_ratios[k - 1] if k > 0 else ""
            res = report.residuals[k] if k < len(report.residuals) else ""
            w.writerow([k + 1, repr(step), repr(ratio) if ratio != "" else "", repr(res)])


def read_trace_csv(path: Path) -> list[dict]:
    def num(text):
        return float(text) if text else None

    with open(path, newline="") as fh:
        return [{"iter": int(row["iter"]), "step_norm": num(row["step_norm"]),
                 "contraction_ratio": num(row["contraction_ratio"]), "residual": num(row["residual"])}
                for row in csv.DictReader(fh)]
