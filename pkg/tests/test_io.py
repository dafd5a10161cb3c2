"""CSV parsing, preprocessing and the key-value run configuration."""

import math

import numpy as np
import pytest

from bn2mf.config import RunConfig, load_config
from bn2mf.errors import ConfigError, ParseError
from bn2mf.io import load_csv, load_lod, parse_kv, preprocess, read_matrix, write_csv, write_matrix
from bn2mf.model import ExposureMatrix
from bn2mf.uncertainty import normalize_and_scale
from bn2mf.vi import FitConfig, fit


def _write(tmp_path, text, name="x.csv"):
    p = tmp_path / name
    p.write_text(text, encoding="utf-8")
    return p


class TestLoadCsv:
    def test_basic(self, tmp_path):
        x = load_csv(_write(tmp_path, "id,a,b\nr1,0,1\nr2,2,3\n"))
        np.testing.assert_array_equal(x.values, [[0, 1], [2, 3]])
        assert x.row_ids == ("r1", "r2") and x.col_ids == ("a", "b")

    @pytest.mark.parametrize("text,where", [
        ("id,a,b\nr1,0,1\nr2,-1,3\n", "(r2, a)"),
        ("id,a,b\nr1,0,x\nr2,1,3\n", "(r1, b)"),
        ("id,a,b\nr1,0,nan\nr2,1,3\n", "(r1, b)"),
        ("id,a,b\nr1,0\nr2,1,3\n", ":2:"),
    ])
    def test_errors_name_location(self, tmp_path, text, where):
        with pytest.raises(ParseError, match=__import__("re").escape(where)):
            load_csv(_write(tmp_path, text))

    def test_too_small(self, tmp_path):
        with pytest.raises(ParseError):
            load_csv(_write(tmp_path, "id,a\nr1,1\n"))

    def test_round_trip_bit_identical(self, tmp_path):
        rng = np.random.default_rng(0)
        vals = rng.gamma(0.3, 7.0, (6, 4)) * 10.0 ** rng.integers(-30, 30, (6, 4))
        x = ExposureMatrix(vals, tuple(f"s{i}" for i in range(6)), ("a", "b", "c", "d"))
        y = load_csv(write_matrix(tmp_path / "rt.csv", x))
        np.testing.assert_array_equal(y.values, x.values)
        assert y.row_ids == x.row_ids and y.col_ids == x.col_ids

    def test_signed_matrix(self, tmp_path):
        p = write_csv(tmp_path / "m.csv", [[-1.5, 2.0]], ["p1"], ["a", "b"])
        vals, rows, cols = read_matrix(p)
        np.testing.assert_array_equal(vals, [[-1.5, 2.0]])
        assert rows == ["p1"] and cols == ["a", "b"]


class TestPreprocess:
    def _x(self, vals):
        return ExposureMatrix(np.asarray(vals, float))

    def test_lod_substitution(self):
        x = preprocess(self._x([[1.0, 5.0], [3.0, 6.0]]), lod=[2.0, 2.0])
        assert x.values[0, 0] == pytest.approx(2 / math.sqrt(2)) and x.values[0, 0] == pytest.approx(1.41421, abs=1e-5)
        assert x.values[1, 0] == 3.0 and x.values[0, 1] == 5.0

    def test_sentinel_mask(self):
        x = preprocess(self._x([[0.0, 5.0], [3.0, 6.0]]), lod=[4.0, 1.0],
                       censored=np.array([[True, False], [False, False]]))
        assert x.values[0, 0] == pytest.approx(4 / math.sqrt(2)) and x.values[1, 0] == 3.0

    def test_scale_sd(self):
        x = preprocess(self._x([[0.0, 1.0], [8.0, 2.0], [4.0, 3.0]]), scale_sd=True)
        assert x.values.std(axis=0, ddof=1) == pytest.approx([1.0, 1.0])
        np.testing.assert_allclose(x.values[:, 0], [0, 2, 1])  # column sd 4 -> quartered, not centred

    def test_identity(self):
        raw = self._x([[1.0, 2.0], [3.0, 4.0]])
        np.testing.assert_array_equal(preprocess(raw).values, raw.values)

    def test_zero_variance_named(self):
        x = ExposureMatrix(np.array([[1.0, 2.0], [1.0, 3.0]]), col_ids=("mep", "mbp"))
        with pytest.raises(ValueError, match="mep"):
            preprocess(x, scale_sd=True)

    def test_nonpositive_lod(self):
        with pytest.raises(ValueError):
            preprocess(self._x([[1.0, 2.0], [3.0, 4.0]]), lod=[0.0, 1.0])

    def test_lod_file(self, tmp_path):
        p = _write(tmp_path, "column,lod\nb,0.5\na,2\n", "lod.csv")
        np.testing.assert_array_equal(load_lod(p, ["a", "b"]), [2.0, 0.5])
        with pytest.raises(ParseError):
            load_lod(p, ["a", "c"])

    def test_unit_chain(self):
        rng = np.random.default_rng(1)
        raw = ExposureMatrix(rng.gamma(2.0, 3.0, (40, 6)))
        x = preprocess(raw, lod=np.full(6, 1.0), scale_sd=True)
        res = fit(x, cfg=FitConfig(n_restarts=1, max_sweeps=200))
        scaled, normed = normalize_and_scale(res.scores, res.loadings)
        rec = scaled @ normed
        assert np.linalg.norm(rec - res.reconstruction) / np.linalg.norm(res.reconstruction) < 1e-10


class TestConfig:
    def test_defaults_documented(self):
        cfg = RunConfig()
        assert cfg.fit_config() == FitConfig()
        assert cfg.n_replicates == 20 and cfg.structure_list == [10, 0]

    def test_full_grid(self):
        cfg = RunConfig(full=True)
        assert cfg.n_replicates == 100 and len(cfg.structure_list) * len(cfg.noise_list) == 121

    def test_file_and_overrides(self, tmp_path):
        p = _write(tmp_path, "# comment\nn_restarts = 3\nt0 = 1.5\nscale_sd = yes\ninput = data/x.csv\n", "run.cfg")
        cfg = load_config(p, {"seed": 9})
        assert cfg.n_restarts == 3 and cfg.t0 == 1.5 and cfg.scale_sd is True and cfg.seed == 9
        assert cfg.input == str((tmp_path / "data" / "x.csv").resolve())

    def test_unknown_key(self, tmp_path):
        with pytest.raises(ConfigError, match="bogus"):
            load_config(_write(tmp_path, "bogus = 1\n", "c.cfg"))

    def test_bad_value(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(_write(tmp_path, "n_restarts = many\n", "c.cfg"))
        with pytest.raises(ConfigError):
            load_config(_write(tmp_path, "no equals sign\n", "d.cfg"))
        with pytest.raises(ConfigError):
            load_config(None, {"grid_methods": "bn2mf,lasso"})

    def test_text_round_trip(self, tmp_path):
        cfg = RunConfig(seed=4, noise_levels="0.2,0.5", full=False)
        p = _write(tmp_path, cfg.to_text(), "rt.cfg")
        assert load_config(p) == cfg

    def test_parse_kv(self):
        assert parse_kv("a = 1\n\nb=two # note\n") == {"a": "1", "b": "two"}
