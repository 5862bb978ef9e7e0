import json

import pytest

from robust_recourse.cli import cli_main


@pytest.fixture
def workdir(tmp_path):
    cfg = {
        "K": 1,
        "rho": [0.1],
        "delta_add": 1.0,
        "mode": "nonparametric",
        "bootstrap": {"B": 20},
        "m2": {"trials": 10},
        "synthetic": {"n_per_class": 120},
    }
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps(cfg))
    return tmp_path, cfg_path


def run(args):
    return cli_main([str(a) for a in args])


class TestPipeline:
    def test_end_to_end(self, workdir, capsys):
        base, cfg = workdir
        data = base / "data"
        assert run(["synth", "--config", cfg, "--out", data, "--seed", 7,
                    "--n-shifts", 6, "--kind", "all"]) == 0
        assert (data / "original.csv").exists()
        shifted = sorted(data.glob("shift_*.csv"))
        assert len(shifted) == 6
        # kinds split 2/2/2
        assert sum("mean" in p.name for p in shifted) == 2

        belief = base / "belief.json"
        assert run(["estimate", "--config", cfg, "--data", data / "original.csv",
                    "--out", belief, "--seed", 7]) == 0
        payload = json.loads(belief.read_text())
        assert payload["dimension"] == 3
        assert payload["components"][0]["radius"] == 0.1

        recourses = base / "recourses.csv"
        assert run(["generate", "--config", cfg, "--belief", belief,
                    "--data", data / "original.csv", "--out", recourses,
                    "--max-instances", 8, "--seed", 7]) == 0

        report = base / "report"
        args = ["evaluate", "--config", cfg, "--belief", belief,
                "--recourses", recourses, "--out", report, "--seed", 7,
                "--shifted", *shifted]
        assert run(args) == 0
        rep = json.loads((base / "report.json").read_text())
        assert rep["m1_validity"] == 1.0
        assert 0.0 <= rep["m2_validity"] <= 1.0
        assert (base / "report.csv").exists()

        frontier = base / "frontier.csv"
        assert run(["sweep", "--config", cfg, "--belief", belief,
                    "--data", data / "original.csv", "--out", frontier,
                    "--deltas", "0,1.0", "--rhos", "0.1",
                    "--max-instances", 4, "--seed", 7,
                    "--shifted", *shifted]) == 0
        lines = frontier.read_text().strip().splitlines()
        assert len(lines) == 3  # header + 2 cells

    def test_byte_identical_reruns(self, workdir):
        base, cfg = workdir
        data = base / "data"
        run(["synth", "--config", cfg, "--out", data, "--seed", 3, "--n-shifts", 3,
             "--kind", "mean"])
        belief = base / "belief.json"
        run(["estimate", "--config", cfg, "--data", data / "original.csv",
             "--out", belief, "--seed", 3])
        out_a = base / "a.csv"
        out_b = base / "b.csv"
        for out in (out_a, out_b):
            run(["generate", "--config", cfg, "--belief", belief,
                 "--data", data / "original.csv", "--out", out,
                 "--max-instances", 5, "--seed", 3])
        assert out_a.read_bytes() == out_b.read_bytes()

        # synth determinism: regenerate into a second directory
        data2 = base / "data2"
        run(["synth", "--config", cfg, "--out", data2, "--seed", 3, "--n-shifts", 3,
             "--kind", "mean"])
        assert (data / "original.csv").read_bytes() == (data2 / "original.csv").read_bytes()


class TestUsageErrors:
    def test_negative_delta_add_exits_1(self, workdir):
        base, cfg = workdir
        bad = base / "bad.json"
        bad.write_text(json.dumps({"delta_add": -0.5}))
        code = run(["generate", "--config", bad, "--belief", base / "nope.json",
                    "--data", base / "nope.csv", "--out", base / "x.csv"])
        assert code == 1

    def test_unknown_config_key_exits_1(self, workdir):
        base, cfg = workdir
        bad = base / "bad.json"
        bad.write_text(json.dumps({"not_a_key": 1}))
        assert run(["synth", "--config", bad, "--out", base / "d"]) == 1

    def test_missing_required_flag_exits_1(self):
        assert run(["estimate"]) == 1

    def test_unreadable_data_exits_2(self, workdir):
        base, cfg = workdir
        belief = base / "belief.json"
        belief.write_text(json.dumps({
            "dimension": 3, "weights": [1.0], "theta0": [1.0, 0.0, 0.0],
            "components": [{"mean": [1.0, 0.0, 0.0],
                            "covariance": [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
                            "radius": 0.1}],
        }))
        code = run(["generate", "--config", cfg, "--belief", belief,
                    "--data", base / "missing.csv", "--out", base / "x.csv"])
        assert code == 2

    def test_bad_mode_exits_1(self, workdir):
        base, cfg = workdir
        bad = base / "bad.json"
        bad.write_text(json.dumps({"mode": "fancy"}))
        assert run(["synth", "--config", bad, "--out", base / "d"]) == 1
