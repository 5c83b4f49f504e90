import pytest

from gclab.config import ConfigError, load_config, preset_names, validate_config

BASE = """
[problem]
dim = 1
[controls]
labels = a, b
conductivities = 1, 4
"""


def test_presets_all_validate():
    names = preset_names()
    assert {"two_phase_1d", "poisson_1d", "chattering_1d", "cesari_1d"} <= set(names)
    for name in names:
        cfg = validate_config(name)
        assert cfg.source == f"preset:{name}"


def test_normalized_echo_fills_defaults():
    cfg = load_config(BASE + "[sweep]\neps = 1/8, 1/16\n")
    v = cfg.values
    assert v["sweep"]["eps"] == [0.125, 0.0625]
    assert v["problem"]["lengths"] == [1.0]
    assert v["controls"]["lower"] == 1.0 and v["controls"]["upper"] == 4.0
    assert v["optimize"]["levels"] == [0, 1, 2, 3]
    assert len(cfg.digest()) == 64


def test_bounds_violated():
    with pytest.raises(ConfigError, match="bounds violated"):
        load_config(BASE + "lower = 5\nupper = 1\n")
    with pytest.raises(ConfigError, match="bounds violated"):
        load_config(BASE + "lower = 2\nupper = 3\n")  # the phases leave [2, 3]


def test_unknown_nonlinearity_lists_registry():
    with pytest.raises(ConfigError) as err:
        load_config(BASE + "[nonlinearity]\nf = exponential\n")
    msg = str(err.value)
    assert "cubic-decreasing" in msg and "affine-decreasing" in msg and "bounded-saturating" in msg


def test_all_errors_are_reported_together():
    text = BASE + "[nonlinearity]\nf = nope\n[sweep]\nresolution = 1\n[mystery]\nx = 1\n"
    with pytest.raises(ConfigError) as err:
        load_config(text)
    assert len(err.value.errors) >= 3


def test_malformed_values():
    with pytest.raises(ConfigError, match="seed"):
        load_config(BASE.replace("dim = 1", "dim = 1\nseed = 1.5"))
    with pytest.raises(ConfigError, match="missing required key"):
        load_config("[problem]\ndim = 1\n")
    with pytest.raises(ConfigError, match="unknown key"):
        load_config(BASE + "colour = red\n")


def test_unreadable_file(tmp_path):
    with pytest.raises(OSError):
        validate_config(tmp_path / "nope.ini")


def test_anisotropic_tensors_and_modulation():
    cfg = load_config("""
[problem]
dim = 2
[controls]
labels = a, b
tensors = 2, 0.5, 0.5, 1; 3, 0, 0, 3
modulation = 0.2
""")
    assert cfg.space.depends_on_x()
    assert cfg.space.coefficient([0.25, 0.0], "b").entries[0, 0] == pytest.approx(3.6)
