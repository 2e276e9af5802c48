import pytest

from overparam.config import (
    ConfigError,
    RunConfig,
    apply_overrides,
    config_to_text,
    eta_value,
    parse_config_text,
    tol_value,
)

SAMPLE = """\
# glm fitting run
model.family = glm
model.n = 20
model.p = 50
model.activation = tanh_linear
model.activation_scale = 0.3
model.data_seed = 7

optimizer.kind = gd
optimizer.eta = auto
optimizer.iters = 2000
optimizer.seed = 1

diag.nu = 8
diag.lambda = 0.5
"""


def test_parse_sample():
    cfg = parse_config_text(SAMPLE)
    assert cfg.family == "glm"
    assert cfg.n == 20 and cfg.p == 50
    assert cfg.activation_scale == 0.3
    assert cfg.eta == "auto" and eta_value(cfg) is None
    assert cfg.iters == 2000
    assert cfg.nu == 8.0


def test_unknown_key_rejected():
    with pytest.raises(ConfigError, match="unknown key"):
        parse_config_text("model.family = glm\nmodel.bogus = 3\n")


def test_duplicate_key_rejected():
    with pytest.raises(ConfigError, match="duplicate"):
        parse_config_text("model.n = 3\nmodel.n = 4\n")


def test_malformed_line_rejected():
    with pytest.raises(ConfigError, match="key = value"):
        parse_config_text("model.family glm\n")


def test_bad_value_types_rejected():
    with pytest.raises(ConfigError):
        parse_config_text("model.n = three\n")
    with pytest.raises(ConfigError):
        parse_config_text("diag.anchors = maybe\n")
    with pytest.raises(ConfigError):
        parse_config_text("optimizer.eta = fast\n")


def test_domain_validation():
    with pytest.raises(ConfigError):
        parse_config_text("model.family = cubic\n")
    with pytest.raises(ConfigError):
        parse_config_text("optimizer.kind = adam\n")
    with pytest.raises(ConfigError):
        parse_config_text("diag.lambda = 1.5\n")


def test_round_trip_lossless():
    cfg = parse_config_text(SAMPLE)
    text = config_to_text(cfg)
    again = parse_config_text(text)
    assert again == cfg
    assert config_to_text(again) == text


def test_round_trip_with_numeric_eta_and_bools():
    cfg = RunConfig(family="linear", eta=0.5, anchors=True, identity_X=True)
    text = config_to_text(cfg)
    again = parse_config_text(text)
    assert again == cfg
    assert eta_value(again) == 0.5
    assert "diag.anchors = on" in text
    assert "model.identity = on" in text


def test_overrides():
    cfg = parse_config_text(SAMPLE)
    new = apply_overrides(cfg, {"optimizer.eta": "0.25", "optimizer.iters": "10"})
    assert eta_value(new) == 0.25
    assert new.iters == 10
    with pytest.raises(ConfigError):
        apply_overrides(cfg, {"nonsense.key": "1"})


def test_tol_auto():
    cfg = parse_config_text(SAMPLE)
    assert tol_value(cfg) is None
    cfg2 = apply_overrides(cfg, {"optimizer.tol": "1e-8"})
    assert tol_value(cfg2) == 1e-8


def test_comments_and_blank_lines_ignored():
    cfg = parse_config_text("\n# hi\nmodel.n = 5  # trailing comment\n\n")
    assert cfg.n == 5
