import json
from pathlib import Path

import numpy as np
import pytest

from asyncadmm import (BenchmarkSpec, Custom, ExperimentConfig, Free, Graph,
                       ProbeFlags, ProblemSource, Quadratic, SeparableProblem,
                       ConstraintSystem, dump_problem, generate_benchmark,
                       load_problem, parse_config, render_config,
                       run_experiment)
from asyncadmm.cli import main as cli_main
from asyncadmm.errors import (ParseError, UnknownBenchmark, ValidationError)


MINIMAL = """
{
  "problem": {"benchmark": {"name": "consensus-quadratic", "graph": "g.txt"}},
  "T": 50
}
"""


def write_cycle_graph(path: Path, n=5):
    path.write_text(Graph.cycle(n).to_text())


class TestParseConfig:
    def test_minimal_defaults(self):
        cfg = parse_config(MINIMAL)
        assert cfg.beta == 1.0
        assert cfg.seeds == (0,)
        assert cfg.stride == 1
        assert cfg.probes == ProbeFlags(False, False, False)
        assert cfg.workers == 1

    def test_unknown_field_named(self):
        bad = json.dumps({"problem": {"file": "p.json"}, "T": 5, "betta": 2.0})
        with pytest.raises(ParseError, match="betta"):
            parse_config(bad)

    def test_unknown_nested_field_named(self):
        bad = json.dumps({"problem": {"file": "p.json"}, "T": 5,
                          "probes": {"shadwo": True}})
        with pytest.raises(ParseError, match="shadwo"):
            parse_config(bad)

    def test_block_probs_must_sum_to_one(self):
        bad = json.dumps({"problem": {"file": "p.json"}, "T": 5,
                          "block_probs": [0.5, 0.4]})
        with pytest.raises(ValidationError, match="sum"):
            parse_config(bad)

    def test_seed_range_string(self):
        cfg = parse_config(json.dumps(
            {"problem": {"file": "p.json"}, "T": 5, "seeds": "0..9"}))
        assert cfg.seeds == tuple(range(10))

    def test_bad_json_position_reported(self):
        with pytest.raises(ParseError, match="JSON"):
            parse_config("{nope}")

    def test_t_required(self):
        with pytest.raises(ParseError, match="T"):
            parse_config(json.dumps({"problem": {"file": "p.json"}}))

    def test_round_trip(self):
        cfg = parse_config(json.dumps({
            "problem": {"benchmark": {"name": "consensus-lad", "graph": "g.txt",
                                      "a": [1.0, 2.0, 3.0]}},
            "T": 123, "seeds": [3, 1, 4], "beta": 0.5,
            "blocks": [[0, 1], [2, 3], [4, 5]],
            "block_probs": [0.25, 0.5, 0.25],
            "probes": {"shadow": True, "ergodic": True},
            "stride": 7, "out": "results", "workers": 2,
            "reference": "none"}))
        assert parse_config(render_config(cfg)) == cfg


class TestProblemFile:
    def make_problem(self):
        cs = ConstraintSystem(n=1, N=2, W=2,
                              entries=((0, 0, 1.0), (1, 1, -1.0)),
                              h_diag=np.array([-1.0, -2.0]))
        return SeparableProblem(
            terms=(Quadratic(np.array([1.0]), 2.0), Quadratic(np.array([0.0]))),
            x_sets=(Free(1), Free(1)), z_set=Free(2), constraints=cs, beta=1.5)

    def test_round_trip(self):
        prob = self.make_problem()
        text = dump_problem(prob)
        prob2 = load_problem(text)
        assert prob2.beta == prob.beta
        assert prob2.constraints.entries == prob.constraints.entries
        np.testing.assert_array_equal(prob2.constraints.h_diag,
                                      prob.constraints.h_diag)
        assert prob2.terms[0].weight == 2.0

    def test_missing_field(self):
        doc = json.loads(dump_problem(self.make_problem()))
        doc.pop("H_diag")
        with pytest.raises(ParseError, match="H_diag"):
            load_problem(json.dumps(doc))

    def test_unknown_field(self):
        doc = json.loads(dump_problem(self.make_problem()))
        doc["extra"] = 1
        with pytest.raises(ParseError, match="extra"):
            load_problem(json.dumps(doc))

    def test_custom_terms_not_serializable(self):
        cs = ConstraintSystem(n=1, N=1, W=1, entries=((0, 0, 1.0),),
                              h_diag=np.array([1.0]))
        prob = SeparableProblem(
            terms=(Custom(fn=lambda u: 0.0, dim=1, scalar_convex=True),),
            x_sets=(Free(1),), z_set=Free(1), constraints=cs, beta=1.0)
        with pytest.raises(ValidationError, match="code-only"):
            dump_problem(prob)


class TestBenchmarks:
    def test_quadratic_triangle_reference(self):
        bench = generate_benchmark(BenchmarkSpec("consensus-quadratic",
                                                 a=[1.0, 2.0, 3.0]),
                                   Graph.cycle(3))
        np.testing.assert_allclose(bench.reference, [2.0])

    def test_lad_reference(self):
        bench = generate_benchmark(BenchmarkSpec("consensus-lad",
                                                 a=[0.0, 0.0, 10.0]),
                                   Graph.cycle(3))
        np.testing.assert_allclose(bench.reference, [0.0])

    def test_lasso_large_penalty(self):
        bench = generate_benchmark(BenchmarkSpec("lasso-toy", w=[1.0, 1.0],
                                                 b=[1.0, 2.0], pi=10.0),
                                   Graph.cycle(3))
        np.testing.assert_allclose(bench.reference, [0.0], atol=1e-10)

    def test_unknown_name(self):
        with pytest.raises(UnknownBenchmark):
            BenchmarkSpec("consensus-mean")


class TestRunExperiment:
    def config_for(self, tmp_path, T=40, stride=1, seeds=(0,), probes=None,
                   out="out"):
        write_cycle_graph(tmp_path / "g.txt")
        return ExperimentConfig(
            problem=ProblemSource("benchmark",
                                  {"name": "consensus-quadratic",
                                   "graph": "g.txt",
                                   "a": [1.0, 2.0, 3.0, 4.0, 5.0]}),
            T=T, seeds=tuple(seeds), stride=stride,
            probes=probes or ProbeFlags(ergodic=True), out=out)

    def test_artifacts_and_row_counts(self, tmp_path):
        cfg = self.config_for(tmp_path, T=40, stride=4, seeds=(0, 1))
        assert run_experiment(cfg, base_dir=tmp_path) == 0
        for seed in (0, 1):
            lines = (tmp_path / "out" / f"seed_{seed}.csv").read_text().splitlines()
            assert lines[0] == ("iter,objective,objective_error,"
                                "feasibility_violation,ergodic_objective_error,"
                                "ergodic_feasibility,lyapunov,active_block")
            assert len(lines) == 1 + 40 // 4
        assert (tmp_path / "out" / "mean.csv").exists()
        summary = json.loads((tmp_path / "out" / "summary.json").read_text())
        assert summary["invariants"]["steps"] == 80
        assert summary["seeds"] == [0, 1]

    def test_deterministic_outputs(self, tmp_path):
        cfg = self.config_for(tmp_path, T=60, seeds=(0, 1, 2), out="a")
        assert run_experiment(cfg, base_dir=tmp_path) == 0
        cfg2 = self.config_for(tmp_path, T=60, seeds=(0, 1, 2), out="b")
        assert run_experiment(cfg2, base_dir=tmp_path) == 0
        for name in ("seed_0.csv", "seed_1.csv", "seed_2.csv", "mean.csv",
                     "summary.json"):
            assert (tmp_path / "a" / name).read_bytes() == \
                (tmp_path / "b" / name).read_bytes()

    def test_shadow_probe_counters(self, tmp_path):
        cfg = self.config_for(tmp_path, T=25,
                              probes=ProbeFlags(shadow=True, ergodic=True))
        assert run_experiment(cfg, base_dir=tmp_path) == 0
        summary = json.loads((tmp_path / "out" / "summary.json").read_text())
        inv = summary["invariants"]
        assert inv["shadow_checks"] == 25 == inv["freeze_checks"]
        assert inv["shadow_failures"] == 0 == inv["freeze_failures"]

    def test_missing_graph_is_config_error(self, tmp_path):
        cfg = ExperimentConfig(
            problem=ProblemSource("benchmark", {"name": "consensus-quadratic",
                                                "graph": "missing.txt"}),
            T=5, out="out")
        assert run_experiment(cfg, base_dir=tmp_path) == 2

    def test_divergence_exit_code(self, tmp_path):
        # pathological custom term nearly cancels the huge-beta quadratic
        beta = 1e9
        cs = ConstraintSystem(n=1, N=1, W=1, entries=((0, 0, 1.0),),
                              h_diag=np.array([-1.0]))
        bad = Custom(fn=lambda u: -(0.5 * beta - 5.0) * float(u[0]) ** 2,
                     dim=1, scalar_convex=True)
        prob = SeparableProblem(terms=(bad,), x_sets=(Free(1),),
                                z_set=Free(1), constraints=cs, beta=beta)
        cfg = ExperimentConfig(problem=ProblemSource("object", prob),
                               T=500, out="out", z0=(1.0,),
                               reference="none")
        assert run_experiment(cfg, base_dir=tmp_path) == 1

    def test_worker_pool_matches_serial(self, tmp_path):
        cfg = self.config_for(tmp_path, T=30, seeds=(0, 1), out="serial")
        assert run_experiment(cfg, base_dir=tmp_path) == 0
        cfg_par = ExperimentConfig(problem=cfg.problem, T=30, seeds=(0, 1),
                                   probes=cfg.probes, out="parallel",
                                   workers=2)
        assert run_experiment(cfg_par, base_dir=tmp_path) == 0
        for name in ("seed_0.csv", "seed_1.csv", "mean.csv"):
            assert (tmp_path / "serial" / name).read_bytes() == \
                (tmp_path / "parallel" / name).read_bytes()

    def test_lyapunov_auto_reference(self, tmp_path):
        cfg = self.config_for(tmp_path, T=10,
                              probes=ProbeFlags(lyapunov=True, ergodic=True))
        assert run_experiment(cfg, base_dir=tmp_path) == 0
        lines = (tmp_path / "out" / "seed_0.csv").read_text().splitlines()
        header = lines[0].split(",")
        vals = [float(ln.split(",")[header.index("lyapunov")])
                for ln in lines[1:]]
        assert all(np.isfinite(vals))


class TestCli:
    def test_run_and_validate(self, tmp_path, capsys):
        write_cycle_graph(tmp_path / "g.txt")
        cfg_path = tmp_path / "exp.json"
        cfg_path.write_text(json.dumps({
            "problem": {"benchmark": {"name": "consensus-quadratic",
                                      "graph": "g.txt"}},
            "T": 30, "probes": {"ergodic": True}, "out": "res"}))
        assert cli_main(["validate", str(cfg_path)]) == 0
        out = capsys.readouterr().out
        assert "constraints valid" in out
        assert cli_main(["run", str(cfg_path)]) == 0
        assert (tmp_path / "res" / "seed_0.csv").exists()

    def test_bench_subcommand(self, tmp_path):
        write_cycle_graph(tmp_path / "g.txt", n=3)
        out = tmp_path / "res"
        rc = cli_main(["bench", "consensus-quadratic",
                       "--graph", str(tmp_path / "g.txt"),
                       "--seeds", "0..2", "--T", "25",
                       "--out", str(out)])
        assert rc == 0
        assert sorted(p.name for p in out.glob("seed_*.csv")) == \
            ["seed_0.csv", "seed_1.csv", "seed_2.csv"]

    def test_slope_subcommand(self, tmp_path, capsys):
        rows = ["iter,objective,objective_error,feasibility_violation,"
                "ergodic_objective_error,ergodic_feasibility,lyapunov,"
                "active_block"]
        for t in range(1, 301):
            rows.append(f"{t},1.0,nan,{1.0 / t!r},nan,{2.0 / t!r},nan,0")
        csv = tmp_path / "m.csv"
        csv.write_text("\n".join(rows) + "\n")
        assert cli_main(["slope", str(csv),
                         "--column", "ergodic_feasibility"]) == 0
        out = capsys.readouterr().out
        slope = float(out.split("slope=")[1].split()[0])
        assert slope == pytest.approx(-1.0, abs=1e-6)

    def test_validate_reports_violations(self, tmp_path, capsys):
        doc = {"n": 1, "N": 1, "W": 1, "beta": 1.0,
               "terms": [{"kind": "quadratic", "center": [0.0]}],
               "x_sets": [{"kind": "free", "dim": 1}],
               "z_set": {"kind": "free", "dim": 1},
               "D_rows": [[0, 0, 1.0]],
               "H_diag": [0.0]}
        cfg_path = tmp_path / "exp.json"
        cfg_path.write_text(json.dumps({"problem": {"inline": doc}, "T": 5}))
        assert cli_main(["validate", str(cfg_path)]) == 2
        assert "H not invertible" in capsys.readouterr().err

    def test_config_error_exit(self, tmp_path, capsys):
        bad = tmp_path / "bad.json"
        bad.write_text('{"problem": {"file": "p.json"}, "T": 5, "oops": 1}')
        assert cli_main(["run", str(bad)]) == 2
        assert "oops" in capsys.readouterr().err

    def test_missing_file_exit(self, tmp_path):
        assert cli_main(["run", str(tmp_path / "nope.json")]) == 3

    def test_env_var_output_dir(self, tmp_path, monkeypatch):
        write_cycle_graph(tmp_path / "g.txt", n=3)
        cfg_path = tmp_path / "exp.json"
        cfg_path.write_text(json.dumps({
            "problem": {"benchmark": {"name": "consensus-quadratic",
                                      "graph": "g.txt"}},
            "T": 10}))
        monkeypatch.setenv("ASYNCADMM_OUT", str(tmp_path / "envout"))
        assert cli_main(["run", str(cfg_path)]) == 0
        assert (tmp_path / "envout" / "seed_0.csv").exists()
