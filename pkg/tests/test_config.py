import pytest

from proxsure.config import ExperimentConfig, config_to_text, parse_config
from proxsure.errors import ConfigError


def test_defaults_fill_missing_keys():
    cfg = parse_config("n = 8\n")
    assert cfg.n == 8
    assert cfg.model_iterations == 3
    assert cfg.sigma == [0.1]


def test_negative_sigma_names_field():
    with pytest.raises(ConfigError) as err:
        parse_config("sigma = -1\n")
    assert "sigma" in str(err.value)


def test_unknown_key_with_line_number():
    with pytest.raises(ConfigError) as err:
        parse_config("n = 8\nbogus = 1\n")
    assert "bogus" in str(err.value)
    assert "2" in str(err.value)


def test_duplicate_key_rejected():
    with pytest.raises(ConfigError):
        parse_config("n = 8\nn = 9\n")


def test_type_mismatch():
    with pytest.raises(ConfigError):
        parse_config("n = [1, 2]\n")
    with pytest.raises(ConfigError):
        parse_config("model.symmetric = 3\n")


def test_grid_must_increase():
    with pytest.raises(ConfigError):
        parse_config("n_train_grid = [16, 16]\n")


def test_cross_validation():
    with pytest.raises(ConfigError):
        parse_config("n = 4\ndata.rank = 9\n")
    with pytest.raises(ConfigError):
        parse_config("step.kind = ls\nstep.alpha = 1.5\n")
    with pytest.raises(ConfigError):
        parse_config("operator.kind = circular\n")


def test_scalar_promoted_to_list():
    cfg = parse_config('sigma = 0.25\nmodel.mode = "wc"\n')
    assert cfg.sigma == [0.25]
    assert cfg.modes() == ["wc"]


def test_sigma_pixel_preset_scaling():
    cfg = parse_config("sigma_pixel = [25, 50]\n")
    assert cfg.sigma == [25 / 255, 50 / 255]


def test_echo_roundtrip():
    cfg = parse_config(
        "n = 12\nsigma = [0.1, 0.2]\nmodel.mode = [\"ws\", \"wc\"]\n"
        "optimizer.epochs = 7\nout = \"somewhere\"\n"
    )
    assert parse_config(config_to_text(cfg)) == cfg


def test_comments_and_blank_lines():
    cfg = parse_config("# header\n\nn = 10  # trailing comment\n")
    assert cfg.n == 10


def test_minimal_empty_config():
    assert parse_config("") == ExperimentConfig()
