"""Tests for config parsing, validation and resolution."""

import pytest


def _errors(text):
    from harness.config import ConfigError, load_config

    with pytest.raises(ConfigError) as info:
        load_config(text=text)
    return info.value.errors


class TestParsing:
    """Tests for the key = value format."""

    def test_typed_values(self):
        """Values are read with YAML typing."""
        from harness.config import parse_config_text

        values, errors = parse_config_text(
            "model = var-a  # comment\nn_list = [2, 4]\nmilstein = false\ndt = 1e-4\n"
        )
        assert errors == []
        assert values == {"model": "var-a", "n_list": [2, 4], "milstein": False, "dt": "1e-4"}

    def test_line_errors(self):
        """Malformed lines are reported with their line numbers."""
        from harness.config import parse_config_text

        _, errors = parse_config_text("just words\nT =\nseeds = 2\nseeds = 3\n", "a.cfg")
        assert len(errors) == 3
        assert "a.cfg:1: expected 'key = value'" in errors[0]
        assert "T has no value" in errors[1]
        assert "duplicate key 'seeds'" in errors[2]

    def test_from_values(self):
        """Dotted keys map to fields; model.* keys go to model_params."""
        from harness.config import ExperimentConfig

        cfg, errors = ExperimentConfig.from_values(
            {"grid.n_points": 81, "model.kappa": 2.0, "dt": "1e-3", "functionals": ["x", 1]}
        )
        assert errors == []
        assert cfg.grid_n_points == 81
        assert cfg.model_params == {"kappa": 2.0}
        assert cfg.dt == pytest.approx(1e-3)
        assert cfg.functionals == ["x", "1"]

    def test_type_errors(self):
        from harness.config import ExperimentConfig

        _, errors = ExperimentConfig.from_values({"seeds": "many", "milstein": 1, "x": 2})
        assert any(e.startswith("seeds: expected an integer") for e in errors)
        assert any(e.startswith("milstein: expected true/false") for e in errors)
        assert "unknown key 'x'" in errors


class TestValidation:
    """Tests for collected validation errors."""

    def test_defaults_are_runnable(self):
        """An empty config resolves to a stable whole-step dt."""
        from harness.config import DT_SAFETY, load_config

        cfg = load_config(text="")
        limit = cfg.stable_dt(cfg.build_model(), cfg.build_grid())
        assert cfg.dt <= DT_SAFETY * limit
        assert cfg.n_steps * cfg.dt == pytest.approx(cfg.T)

    def test_cfl_violation(self):
        assert any("violates the CFL bound" in e for e in _errors("dt = 0.1"))

    def test_characteristics_need_common_noise(self):
        errors = _errors("method = characteristics\nmodel.a = 0.0")
        assert any("needs sigma_com > 0 on the whole grid" in e for e in errors)

    def test_all_problems_reported_together(self):
        """Several problems come back in one ConfigError."""
        errors = _errors("n_list = [100, 50]\nT = 1.0\ndt = 0.3\nseeds = 0\nmodel.rho = 1\n")
        assert any("must be strictly increasing" in e for e in errors)
        assert any("is not a whole number of steps" in e for e in errors)
        assert any(e.startswith("seeds must be an integer >= 1") for e in errors)
        assert any("Unknown parameters" in e for e in errors)

    def test_bad_names(self):
        errors = _errors(
            "functionals = [x, x^3]\npolicy.kind = greedy\nnash.deviations = ['tilt:1']\n"
        )
        assert len(errors) == 3

    def test_generator_particle_limit(self):
        errors = _errors("generator.n_list = [8, 100]")
        assert any("generator.n_list" in e for e in errors)

    def test_message_lists_problems(self):
        from harness.config import ConfigError

        err = ConfigError(["a", "b"])
        assert str(err).startswith("2 configuration problem(s)")
        assert isinstance(err, ValueError)


class TestResolution:
    """Tests for resolved configs and their identity."""

    def test_overrides(self):
        from harness.config import load_config

        cfg = load_config(text="seeds = 3", out="elsewhere", seed_offset=10, workers=2)
        assert cfg.out == "elsewhere"
        assert cfg.workers == 2
        assert cfg.seed_list == [10, 11, 12]

    def test_explicit_dt_kept(self):
        from harness.config import load_config

        cfg = load_config(text="T = 0.5\ndt = 0.005")
        assert cfg.dt == 0.005
        assert cfg.n_steps == 100

    def test_hash_ignores_runtime_keys(self):
        """out and workers do not change the content hash."""
        from harness.config import load_config

        a = load_config(text="seeds = 2", out="a", workers=1)
        b = load_config(text="seeds = 2", out="b", workers=4)
        c = load_config(text="seeds = 3")
        assert a.content_hash() == b.content_hash()
        assert a.content_hash() != c.content_hash()
        assert "out" not in a.to_dict()

    def test_model_params_filled_in(self):
        from harness.config import load_config
        from meanfield.model import MODEL_DEFAULTS

        data = load_config(text="model.kappa = 2.0").to_dict()
        assert data["model_params"] == {**MODEL_DEFAULTS["ou-common"], "kappa": 2.0}

    def test_reads_files(self, tmp_path):
        from harness.config import load_config

        path = tmp_path / "run.cfg"
        path.write_text("model = var-a\nseeds = 4\n")
        cfg = load_config(path)
        assert cfg.model == "var-a"
        assert cfg.seeds == 4
