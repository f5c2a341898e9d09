import csv
import json

import pytest

from snis_abc.cli import default_workers, main
from snis_abc.config import (
    BUNDLED,
    ConfigError,
    apply_overrides,
    experiment_config,
    load_tree,
)
from snis_abc.demo import DemoOptions, build_scene, mean_errors
from snis_abc.estimators import Method

QUICK_VALIDATE = [
    "validate.cases=50", "validate.zero_bias_trials=2000", "validate.n1_trials=4000",
    "validate.leading_queries=2", "validate.leading_trials=2000", "validate.pool_size=5000",
    "validate.leading_tolerance=10.0",
]


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


class TestConfig:
    @pytest.mark.parametrize("name", BUNDLED)
    def test_bundled_configs_parse(self, name):
        cfg = experiment_config(load_tree(name))
        assert cfg.tau == 0.1 and cfg.n_grid == tuple(sorted(cfg.n_grid))

    def test_desk_configs_match_protocols(self):
        toy = experiment_config(load_tree("toy_scaling_desk.toml"))
        assert (toy.pool_size, toy.query_count, toy.trials, toy.replacement) == (200_000, 100, 50_000, True)
        assert toy.n_grid == (16, 32, 64, 128, 256, 512)
        base = experiment_config(load_tree("appendix_f_desk.toml"))
        assert (base.pool_size, base.query_count, base.trials, base.replacement) == (50_000, 200, 2000, False)
        assert set(base.methods) == set(Method) and base.query_scheme.value == "isotropic-gaussian"

    def test_overrides(self):
        tree = apply_overrides({}, ["harness.trials=7", "harness.n_grid=[4, 8]", "distributions.query_scheme=from-p",
                                    "harness.methods=['standard']"])
        cfg = experiment_config(tree, seed=11)
        assert cfg.trials == 7 and cfg.n_grid == (4, 8) and cfg.master_seed == 11
        assert cfg.methods == (Method.STANDARD,)

    @pytest.mark.parametrize("item", ["harness.trials", "harness.bogus=1", "nosection.x=1", "trials=3"])
    def test_bad_overrides(self, item):
        with pytest.raises(ConfigError):
            apply_overrides({}, [item])

    def test_unknown_key(self, tmp_path):
        p = tmp_path / "c.toml"
        p.write_text("[harness]\ntrails = 3\n")
        with pytest.raises(ConfigError, match="trails"):
            load_tree(p)

    def test_missing_file(self):
        with pytest.raises(ConfigError):
            load_tree("no/such/config.toml")


class TestScalingCommand:
    def test_minimal_run(self, tmp_path, capsys):
        out = tmp_path / "res"
        code = main(["scaling", "--config", "toy_scaling_desk.toml", "--out", str(out), "--workers", "1",
                     "--overrides", "harness.trials=1", "harness.n_grid=[4]"])
        assert code == 0
        rows = read_csv(out / "scaling.csv")
        assert rows[0] == ["n", "method", "bias_corrected", "bias_naive", "total_variance", "mean_time_us",
                           "clamped_count", "retries"]
        # one row per configured method at the single n
        assert [r[:2] for r in rows[1:]] == [["4", "standard"], ["4", "abc"]]
        assert (out / "scaling.json").exists() and (out / "scaling_loglog.dat").exists()
        assert "slope" in capsys.readouterr().out

    def test_single_method_single_row(self, tmp_path):
        out = tmp_path / "res"
        code = main(["scaling", "--config", "toy_scaling_desk.toml", "--out", str(out), "--workers", "1",
                     "--overrides", "harness.trials=1", "harness.n_grid=[4]", "harness.methods=['standard']",
                     "harness.timing=false"])
        assert code == 0
        assert len(read_csv(out / "scaling.csv")) == 2

    def test_missing_config(self, tmp_path, capsys):
        out = tmp_path / "res"
        code = main(["scaling", "--config", str(tmp_path / "absent.toml"), "--out", str(out)])
        assert code == 2
        assert not out.exists()
        assert "not found" in capsys.readouterr().err

    def test_config_required(self, tmp_path):
        assert main(["scaling", "--out", str(tmp_path / "res")]) == 2
        assert not (tmp_path / "res").exists()

    def test_invalid_value(self, tmp_path):
        out = tmp_path / "res"
        assert main(["scaling", "--config", "toy_scaling_desk.toml", "--out", str(out),
                     "--overrides", "harness.trials=0"]) == 2
        assert not out.exists()

    def test_experiment_error_exit_1(self, tmp_path):
        # at a tiny temperature every two-point batch is dominated, so jackknife exhausts its retries
        cfg = tmp_path / "c.toml"
        cfg.write_text(
            "[distributions]\ncenters = [[0.0, 0.0]]\nsigma = 1.0\npool_size = 2\nquery_count = 1\n"
            "replacement = false\n[kernel]\ntau = 1e-6\n"
            "[harness]\nn_grid = [2]\ntrials = 3\nmethods = ['standard', 'jackknife']\nmax_retries = 2\n"
        )
        out = tmp_path / "res"
        assert main(["scaling", "--config", str(cfg), "--out", str(out), "--workers", "1"]) == 1
        assert not out.exists()


class TestBaselinesCommand:
    def test_standard_only(self, tmp_path):
        out = tmp_path / "res"
        code = main(["baselines", "--config", "appendix_f_desk.toml", "--out", str(out), "--workers", "1",
                     "--overrides", "harness.methods=['standard']", "harness.trials=20", "harness.n_grid=[8]",
                     "distributions.query_count=3"])
        assert code == 0
        rows = read_csv(out / "baselines.csv")
        assert {r[1] for r in rows[1:]} == {"standard"}

    def test_seed_override(self, tmp_path):
        common = ["--workers", "1", "--overrides", "harness.trials=10", "harness.n_grid=[8]",
                  "distributions.query_count=2", "harness.timing=false"]
        assert main(["baselines", "--config", "appendix_f_desk.toml", "--out", str(tmp_path / "a")] + common) == 0
        assert main(["baselines", "--config", "appendix_f_desk.toml", "--out", str(tmp_path / "b"), "--seed", "5"]
                    + common) == 0
        a, b = read_csv(tmp_path / "a" / "baselines.csv"), read_csv(tmp_path / "b" / "baselines.csv")
        assert a[0] == b[0] and [r[:2] for r in a] == [r[:2] for r in b]
        assert json.loads((tmp_path / "b" / "baselines.json").read_text())["seeds"]["master_seed"] == 5


class TestValidateCommand:
    def test_quick_suite_passes(self, tmp_path, capsys):
        assert main(["validate", "--overrides", *QUICK_VALIDATE]) == 0
        out = capsys.readouterr().out
        assert out.count("[PASS]") == 9

    def test_single_property(self, capsys):
        assert main(["validate", "--properties", "convex-hull", "--overrides", "validate.cases=100"]) == 0
        out = capsys.readouterr().out
        assert out.count("[PASS]") == 1 and "convex-hull" in out

    def test_break_abc(self, capsys):
        code = main(["validate", "--break-abc", "--properties", "convex-hull", "abc-relation",
                     "--overrides", "validate.cases=100"])
        assert code == 1
        assert "failing properties: abc-relation" in capsys.readouterr().out

    def test_unknown_property(self):
        with pytest.raises(SystemExit):
            main(["validate", "--properties", "nonsense"])


class TestDemoCommand:
    def test_writes_scene(self, tmp_path, capsys):
        out = tmp_path / "demo"
        assert main(["demo", "--out", str(out)]) == 0
        rows = read_csv(out / "demo_points.csv")
        opts = DemoOptions()
        assert rows[0] == ["label", "cluster", "x", "y"]
        assert len(rows) - 1 == 3 * opts.points_per_cluster + 4
        labels = [r[0] for r in rows[-4:]]
        assert labels == ["query", "target", "standard", "abc"]
        first = (out / "demo_points.csv").read_bytes()
        assert main(["demo", "--out", str(out)]) == 0
        assert (out / "demo_points.csv").read_bytes() == first

    def test_scene_is_seeded(self):
        a, b = build_scene(DemoOptions(seed=3)), build_scene(DemoOptions(seed=3))
        assert (a.batch == b.batch).all() and (a.abc == b.abc).all()

    def test_mean_errors_small(self):
        err_std, err_abc = mean_errors(DemoOptions(), repeats=200)
        assert err_std > 0 and err_abc > 0


class TestWorkers:
    def test_env_fallback(self, monkeypatch):
        monkeypatch.setenv("SNIS_ABC_WORKERS", "3")
        assert default_workers() == 3

    def test_default_is_core_count(self, monkeypatch):
        monkeypatch.delenv("SNIS_ABC_WORKERS", raising=False)
        assert default_workers() >= 1
