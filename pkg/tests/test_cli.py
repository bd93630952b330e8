import csv
from dataclasses import replace

import numpy as np
import pytest

from mfrie import cli
from mfrie.cli import (
    FIGURES,
    ExperimentConfig,
    aggregate,
    emit_overlap_figure,
    main,
    parse_config,
    run,
    run_cell,
)

SMALL = """
x_prior = shifted_wigner:3
y_prior = gaussian
n = 40
alphas = 0.5
kappas = 0.5, 2
seeds = 0-2
estimators = rie_x, oracle_x, rie_y
"""


def _read_rows(path):
    with open(path, encoding="utf-8") as fh:
        lines = [line for line in fh if not line.startswith("#")]
    return list(csv.DictReader(lines))


class TestParseConfig:
    def test_keys(self):
        cfg = parse_config(SMALL)
        assert cfg.x_prior == "shifted_wigner:3"
        assert cfg.n == 40
        assert cfg.alphas == (0.5,)
        assert cfg.kappas == (0.5, 2.0)
        assert cfg.seeds == (0, 1, 2)
        assert cfg.estimators == ("rie_x", "oracle_x", "rie_y")
        assert cfg.eta_override is None
        assert cfg.dims(0.5) == (40, 80)

    def test_threshold_estimator(self):
        cfg = parse_config("estimators = rie_y, threshold_y(0.25), oracle_y\n")
        assert cfg.estimators == ("rie_y", "threshold_y(0.25)", "oracle_y")

    def test_comments_and_eta(self):
        cfg = parse_config("n = 10   # small\neta = 0.05\n")
        assert cfg.n == 10
        assert cfg.eta_override == 0.05

    def test_figure_preset_with_override(self):
        cfg = parse_config("figure = y_uniform\nn = 50\n")
        assert cfg.y_prior == "uniform:1:3"
        assert cfg.n == 50

    @pytest.mark.parametrize("text", ["colour = blue\n",
                                      "estimators = magic\n",
                                      "estimators = threshold_y(1.5)\n",
                                      "x_prior = cauchy\n",
                                      "y_prior = uniform:3\n",
                                      "kappas = \n"])
    def test_invalid(self, text):
        with pytest.raises(ValueError):
            parse_config(text)

    def test_presets_are_valid(self):
        for name, cfg in FIGURES.items():
            assert cfg.name == name
            cli._spec(cfg, cfg.kappas[0], cfg.alphas[0], 0)


class TestRunCell:
    def test_zero_snr_symmetric_prior(self):
        cfg = ExperimentConfig(x_prior="wigner", n=40, kappas=(0.0,), seeds=(0,),
                               estimators=("rie_y",))
        (row, _), = run_cell(cfg, 0, 0, 0)
        assert row["status"] == "ok"
        np.testing.assert_allclose(row["normalized_mse"], 1.0, atol=1e-6)

    def test_errors_become_rows(self):
        cfg = ExperimentConfig(x_prior="shifted_wigner:3", n=40, kappas=(0.0,), seeds=(0,),
                               estimators=("rie_y", "oracle_y"))
        rows = [r for r, _ in run_cell(cfg, 0, 0, 0)]
        assert rows[0]["status"].startswith("error: ValueError")
        assert np.isnan(rows[0]["normalized_mse"])
        assert rows[1]["status"] == "ok"

    def test_oracle_not_worse(self):
        cfg = parse_config(SMALL)
        rows = {r["estimator"]: r for r, _ in run_cell(cfg, 1, 0, 0)}
        assert rows["oracle_x"]["normalized_mse"] <= rows["rie_x"]["normalized_mse"] + 1e-12


class TestRun:
    def test_outputs_and_determinism(self, tmp_path):
        cfg = parse_config(SMALL)
        rows, summary = run(cfg, tmp_path / "a")
        run(cfg, tmp_path / "b")
        for name in ("results.csv", "aggregate.csv"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
        assert len(rows) == 3 * 2 * 3
        assert len(summary) == 3 * 2
        written = _read_rows(tmp_path / "a" / "results.csv")
        assert [r["estimator"] for r in written] == [r["estimator"] for r in rows]
        assert (tmp_path / "a" / "timings.csv").exists()

    def test_worker_count_does_not_matter(self, tmp_path):
        cfg = replace(parse_config(SMALL), kappas=(1.0,))
        run(cfg, tmp_path / "one", workers=1)
        run(cfg, tmp_path / "two", workers=2)
        assert ((tmp_path / "one" / "results.csv").read_bytes()
                == (tmp_path / "two" / "results.csv").read_bytes())

    def test_seed_offset(self, tmp_path):
        cfg = replace(parse_config(SMALL), kappas=(1.0,), seeds=(0,))
        rows, _ = run(cfg, tmp_path, seed_offset=5)
        assert {r["seed"] for r in rows} == {5}


class TestAggregate:
    def test_mean_and_stderr(self):
        rows = [dict(estimator="e", kappa=1.0, alpha=0.5, n=4, m=8, normalized_mse=v)
                for v in (1.0, 2.0, 3.0, float("nan"))]
        (out,) = aggregate(rows)
        assert out["count"] == 3
        np.testing.assert_allclose(out["mean"], 2.0)
        np.testing.assert_allclose(out["stderr"], 1.0 / np.sqrt(3))

    def test_single_value(self):
        (out,) = aggregate([dict(estimator="e", kappa=1.0, alpha=0.5, n=4, m=8,
                                 normalized_mse=0.5)])
        assert out["stderr"] == 0.0


class TestMain:
    def test_config_file(self, tmp_path, capsys):
        path = tmp_path / "run.cfg"
        path.write_text(SMALL)
        assert main(["--config", str(path), "--out", str(tmp_path / "out")]) == 0
        assert "rie_x" in capsys.readouterr().out
        assert len(_read_rows(tmp_path / "out" / "aggregate.csv")) == 6

    def test_figure_with_config_override(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text("n = 30\nkappas = 1\nseeds = 0\n")
        main(["--figure", "y_gaussian", "--config", str(path), "--out", str(tmp_path)])
        rows = _read_rows(tmp_path / "results.csv")
        assert {r["estimator"] for r in rows} == {"rie_y", "oracle_y"}
        assert {r["n"] for r in rows} == {"30"}

    def test_overlap_flags(self, tmp_path, capsys):
        path = tmp_path / "run.cfg"
        path.write_text("figure = overlap_x_wigner\nn = 30\nseeds = 0-2\n")
        main(["--config", str(path), "--out", str(tmp_path), "--overlap-modes", "3,15"])
        out_file = capsys.readouterr().out.strip()
        with open(out_file, encoding="utf-8") as fh:
            lines = fh.read().splitlines()
        assert lines[1] == "mode,lambda,theory,monte_carlo_mean,stderr"
        assert {line.split(",")[0] for line in lines[2:]} == {"3", "15"}

    def test_requires_source(self):
        with pytest.raises(SystemExit):
            main([])


class TestOverlapFigure:
    def _config(self, x_prior, n=60, seeds=8):
        return ExperimentConfig(x_prior=x_prior, n=n, kappas=(1.0,),
                                seeds=tuple(range(seeds)), estimators=("rie_x",))

    def test_symmetric_prior_is_even(self):
        cfg = self._config("wigner", n=80)
        out = emit_overlap_figure(cfg, [40], bins=80)[40]
        lam, theory = out[:, 0], out[:, 1]
        # spectrum of a fixed Wigner draw is only nearly symmetric
        np.testing.assert_allclose(theory, theory[::-1], atol=0.15 * theory.max())
        np.testing.assert_allclose(lam, -lam[::-1], atol=0.3)

    def test_modes_peak_at_distinct_places(self):
        cfg = self._config("shifted_wigner:3", n=60, seeds=12)
        out = emit_overlap_figure(cfg, [0, 30], bins=10)
        peaks = {i: out[i][np.argmax(out[i][:, 2]), 0] for i in out}
        assert peaks[0] > peaks[30]
        for table in out.values():
            assert np.all(np.isfinite(table[:, :3]))

    def test_y_factor(self, tmp_path):
        cfg = ExperimentConfig(x_prior="shifted_wigner:3", n=40, kappas=(1.0,),
                               seeds=(0, 1, 2), estimators=("rie_y",))
        path = tmp_path / "ov.csv"
        out = emit_overlap_figure(cfg, [5], path, factor="y", bins=5)
        assert out[5].shape == (5, 4)
        assert path.read_text().startswith("# ")

    def test_bad_factor(self):
        with pytest.raises(ValueError):
            emit_overlap_figure(self._config("wigner"), [0], factor="z")
