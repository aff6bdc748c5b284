import json
import subprocess
import sys

import numpy as np
import pytest

from isoembed import cli
from isoembed.config import ConfigError, load_config, parse_config
from isoembed.geometry import PerturbationSpec, clifford_torus_map, scenario_flat_torus_r6
from isoembed.reporting import (dumps_report, read_embedding_csv, read_report, read_trace_csv,
                                strip_timestamps)
from isoembed.solver import SolveReport
from oracles import fd8, fd8_symbol


def write_config(tmp_path, name="run", **overrides):
    cfg = {
        "scenario": "circle",
        "grid_size": 64,
        "perturbation": {"kind": "constant", "matrix": [[0.1]]},
        "solver": {"max_iters": 30, "tol_step": 1e-12, "tol_residual": 1e-12},
        "output": {"report": f"{name}.json", "embedding": f"{name}_u.csv", "trace": f"{name}_trace.csv"},
    }
    cfg.update(overrides)
    path = tmp_path / f"{name}_config.json"
    path.write_text(json.dumps(cfg))
    return path


def torus_config(tmp_path, name="torus", **kw):
    return write_config(
        tmp_path, name, scenario="flat_torus_r6", grid_size=32,
        perturbation={"kind": "random", "max_wavenumber": 3, "amplitude": 0.01, "seed": 7},
        solver={"max_iters": 50, "tol_step": 1e-12, "tol_residual": 1e-10}, **kw)


class TestSolveCommand:
    def test_circle_converges(self, tmp_path, capsys):
        code = cli.run_solve(write_config(tmp_path))
        assert code == cli.EXIT_OK
        doc = read_report(tmp_path / "run.json")
        assert doc["report"]["converged"] is True
        assert doc["solution"]["v_amplitude"] == pytest.approx(np.sqrt(1.1) - 1, abs=1e-12)
        assert "converged" in capsys.readouterr().out

    def test_outputs_written(self, tmp_path):
        cli.run_solve(write_config(tmp_path))
        for name in ("run.json", "run_u.csv", "run_trace.csv",
                     "run_convergence.png", "run_displacement.png"):
            assert (tmp_path / name).stat().st_size > 0

    def test_no_figures(self, tmp_path):
        cli.run_solve(write_config(tmp_path), figures=False)
        assert not list(tmp_path.glob("*.png"))

    def test_figures_disabled_in_config(self, tmp_path):
        path = write_config(tmp_path, output={"report": "r.json", "figures": None})
        cli.run_solve(path)
        assert not list(tmp_path.glob("*.png"))

    def test_unknown_scenario(self, tmp_path, capsys):
        code = cli.run_solve(write_config(tmp_path, scenario="sphere"))
        assert code == cli.EXIT_INVALID_CONFIG
        assert "scenario" in capsys.readouterr().err

    @pytest.mark.parametrize("overrides,field", [
        (dict(grid_size=31), "grid_size"),
        (dict(grid_size="64"), "grid_size"),
        (dict(perturbation={"kind": "wobbly"}), "perturbation.kind"),
        (dict(perturbation={"kind": "random", "max_wavenumber": 40, "amplitude": 0.1, "seed": 1}),
         "perturbation.max_wavenumber"),
        (dict(solver={"alpha": 2.0}), "solver.alpha"),
        (dict(solver={"tolerance": 1.0}), "solver.tolerance"),
        (dict(output={}), "output.report"),
        (dict(extra=1), "extra"),
    ])
    def test_invalid_fields_named(self, tmp_path, capsys, overrides, field):
        code = cli.run_solve(write_config(tmp_path, **overrides))
        assert code == cli.EXIT_INVALID_CONFIG
        assert field in capsys.readouterr().err

    def test_malformed_json(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text("{not json")
        assert cli.run_solve(path) == cli.EXIT_INVALID_CONFIG

    def test_indefinite_metric(self, tmp_path):
        path = write_config(tmp_path, perturbation={"kind": "constant", "matrix": [[-3.0]]})
        assert cli.run_solve(path) == cli.EXIT_INVALID_CONFIG

    def test_divergence(self, tmp_path):
        path = write_config(tmp_path, perturbation={"kind": "constant", "matrix": [[20.0]]},
                            solver={})
        code = cli.run_solve(path)
        assert code in (cli.EXIT_DIVERGED, cli.EXIT_NOT_CONVERGED)
        doc = read_report(tmp_path / "run.json")
        assert doc["report"]["converged"] is False
        assert doc["message"]

    def test_not_converged_code(self, tmp_path):
        path = write_config(tmp_path, solver={"max_iters": 2})
        assert cli.run_solve(path) == cli.EXIT_NOT_CONVERGED

    def test_freeness_failure(self, tmp_path, monkeypatch):
        def clifford_scenario(m, spec):
            from isoembed.geometry import Scenario, pullback_metric
            u0 = clifford_torus_map(m)
            g = pullback_metric(u0)
            return Scenario("clifford", u0, g, g - g)

        monkeypatch.setitem(cli.SCENARIOS, "flat_torus_r6", clifford_scenario)
        code = cli.run_solve(torus_config(tmp_path))
        assert code == cli.EXIT_FREENESS
        doc = read_report(tmp_path / "torus.json")
        assert doc["report"]["status"] == "FreenessFailure"
        assert doc["report"]["converged"] is False

    def test_exit_codes_distinct(self):
        assert len(set(cli.EXIT_CODES.values())) == len(cli.EXIT_CODES)


class TestFiles:
    def test_report_schema_round_trip(self, tmp_path):
        cli.run_solve(write_config(tmp_path))
        doc = read_report(tmp_path / "run.json")
        fields = set(SolveReport.__dataclass_fields__)
        assert fields <= set(doc["report"])
        rep = SolveReport.from_dict(doc["report"])
        assert SolveReport.from_dict(json.loads(json.dumps(rep.to_dict()))) == rep
        assert json.loads(dumps_report(doc)) == doc
        prov = doc["provenance"]
        assert {"config_sha256", "package_version", "numpy_version", "seed", "timestamp"} <= set(prov)

    def test_trace_matches_report(self, tmp_path):
        cli.run_solve(write_config(tmp_path))
        rep = read_report(tmp_path / "run.json")["report"]
        rows = read_trace_csv(tmp_path / "run_trace.csv")
        assert [r["iter"] for r in rows] == list(range(1, rep["iterations"] + 1))
        assert [r["step_norm"] for r in rows] == rep["step_norms"]
        assert [r["contraction_ratio"] for r in rows[1:]] == rep["contraction_ratios"]
        assert rows[0]["contraction_ratio"] is None
        assert rows[-1]["residual"] == rep["final_residual"]

    def test_embedding_header_and_order(self, tmp_path):
        cli.run_solve(torus_config(tmp_path))
        header = (tmp_path / "torus_u.csv").read_text().splitlines()[0]
        assert header == "x1,x2,u1,u2,u3,u4,u5,u6"
        data = np.loadtxt(tmp_path / "torus_u.csv", delimiter=",", skiprows=1)
        assert data.shape == (1024, 8)
        # row-major: x2 varies fastest
        assert data[1, 0] == 0.0 and data[1, 1] == pytest.approx(2 * np.pi / 32)

    def test_embedding_lossless(self, tmp_path):
        cli.run_solve(torus_config(tmp_path))
        grid, u = read_embedding_csv(tmp_path / "torus_u.csv")
        from isoembed.solver import solve
        s = scenario_flat_torus_r6(32, PerturbationSpec.random(3, 0.01, 7))
        u_direct, _ = solve(s)
        np.testing.assert_array_equal(u, u_direct.map.values)

    def test_dump_consistent_with_reported_residual(self, tmp_path):
        cli.run_solve(torus_config(tmp_path))
        reported = read_report(tmp_path / "torus.json")["report"]["final_residual"]
        grid, u = read_embedding_csv(tmp_path / "torus_u.csv")
        g = scenario_flat_torus_r6(32, PerturbationSpec.random(3, 0.01, 7)).g
        h = 2 * np.pi / grid.size
        du = [fd8(u, h, axis=1 + a) for a in range(2)]
        fd_res = max(np.max(np.abs(np.einsum("c...,c...->...", du[i], du[j]) - g[i, j]))
                     for i, j in [(0, 0), (0, 1), (1, 1)])
        # exact per-mode FD derivative error, summed over the dumped spectrum
        spec = np.fft.fftn(u, axes=(1, 2)) / grid.npoints
        derr = max(np.sum(np.abs(spec) * np.abs(k - fd8_symbol(k, h))) for k in grid.wavevectors)
        dmax = max(np.max(np.abs(x)) for x in du)
        bound = 2 * dmax * derr + derr**2
        assert abs(fd_res - reported) <= bound + 1e-12


class TestDeterminism:
    def test_two_runs_identical(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        a.mkdir(), b.mkdir()
        cli.run_solve(torus_config(a, name="t"), figures=False)
        cli.run_solve(torus_config(b, name="t"), figures=False)
        ra, rb = (dumps_report(strip_timestamps(read_report(p / "t.json"))) for p in (a, b))
        assert ra == rb
        assert (a / "t_u.csv").read_bytes() == (b / "t_u.csv").read_bytes()


class TestVerifyCommand:
    def test_passes(self, capsys):
        assert cli.run_verify(32, 7) == cli.EXIT_OK
        out = capsys.readouterr().out
        assert "all identities pass" in out and "FAIL" not in out

    def test_deterministic_table(self, capsys):
        cli.run_verify(32, 7)
        first = capsys.readouterr().out
        cli.run_verify(32, 7)
        assert capsys.readouterr().out == first

    def test_corrupted_q0_sign(self, capsys):
        assert cli.run_verify(32, 7, corrupt_q0_sign=True) == cli.EXIT_VERIFY_FAILED
        out = capsys.readouterr().out
        assert "FAILED: composite" in out

    def test_bad_size(self):
        assert cli.main(["verify", "--size", "7"]) == cli.EXIT_INVALID_CONFIG


class TestScenariosCommand:
    def test_listing(self, capsys):
        assert cli.main(["scenarios"]) == 0
        out = capsys.readouterr().out.splitlines()
        assert out[0] == "circle: n=1, N=2, margin 1"
        assert out[1].startswith("flat_torus_r6: n=2, N=6, margin 0.5176380902")


class TestConfigParsing:
    def test_paths_relative_to_config(self, tmp_path):
        cfg = load_config(write_config(tmp_path))
        assert cfg.output.report == tmp_path / "run.json"
        assert cfg.output.figures == tmp_path

    def test_error_names_field(self):
        with pytest.raises(ConfigError) as info:
            parse_config({"scenario": "circle", "grid_size": 64, "output": {"report": 3}})
        assert info.value.field == "output.report"

    def test_modes(self, tmp_path):
        cfg = parse_config({"scenario": "flat_torus_r6", "grid_size": 16,
                            "perturbation": {"kind": "modes", "modes": [
                                {"pair": [0, 1], "k": [1, 0], "amp": 0.01}]},
                            "output": {"report": str(tmp_path / "r.json")}})
        assert cfg.perturbation.modes[0]["amp"] == 0.01

    def test_canonical_hash_stable(self, tmp_path):
        a = load_config(write_config(tmp_path))
        b = load_config(write_config(tmp_path))
        assert a.canonical_json() == b.canonical_json()


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "isoembed", "solve", str(write_config(tmp_path)),
                           "--no-figures"], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert "converged" in proc.stdout
