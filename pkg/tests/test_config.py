import json

import numpy as np
import pytest

from psoct.config import ConfigError, RunConfig

PHANTOM = {"grid": {"n": 6, "h": 1.0}, "chi0": 0.05, "eps": 1e-3,
           "shapes": [{"kind": "gaussian", "center": [0, 0, 0], "size": 1.0,
                       "psi": [1.0, 0.4, 0.7, 0.5]}]}


def cfg(**over):
    d = {"phantom": PHANTOM}
    d.update(over)
    return RunConfig.from_dict(d)


def test_defaults_build():
    c = cfg()
    assert c.thetas.shape == (200, 3)
    assert np.all(c.thetas[:, 2] >= 0.3 - 1e-12)
    assert c.inverse_options.closure == "gram"
    mg = c.measurement_grid
    for w in c.frequencies.omegas:
        assert abs(w / mg.d_omega - round(w / mg.d_omega)) < 1e-9


def test_unknown_keys_rejected():
    with pytest.raises(ConfigError, match="unknown"):
        cfg(colour="red")
    with pytest.raises(ConfigError, match="detector.nope"):
        cfg(detector={"nope": 1})


def test_missing_phantom():
    with pytest.raises(ConfigError):
        RunConfig.from_dict({})
    with pytest.raises(FileNotFoundError):
        RunConfig.from_dict({"phantom": "does_not_exist.json"})


def test_missing_config_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        RunConfig.load(tmp_path / "absent.json")
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ConfigError):
        RunConfig.load(bad)


def test_relative_phantom_path(tmp_path):
    (tmp_path / "ph.json").write_text(json.dumps(PHANTOM))
    (tmp_path / "run.json").write_text(json.dumps({"phantom": "ph.json"}))
    c = RunConfig.load(tmp_path / "run.json")
    assert c.phantom.grid.shape == (6, 6, 6)


@pytest.mark.parametrize("lam", [0.0, -1.0])
def test_bad_lambda(lam):
    with pytest.raises(ConfigError):
        cfg(inverse={"lambda": lam})
    c = cfg()
    with pytest.raises(ConfigError):
        c.override(reg_lambda=lam)


def test_bad_detector():
    with pytest.raises(ConfigError):
        cfg(detector={"min_cos": 1.0})
    with pytest.raises(ConfigError):
        cfg(detector={"rho": 0.0})
    with pytest.raises(ConfigError):
        cfg(threads=0)


def test_resolution_check():
    ph = dict(PHANTOM, grid={"n": 6, "h": 2.0})
    with pytest.raises(ConfigError, match="lambda/10"):
        RunConfig.from_dict({"phantom": ph})


def test_delta_pulse_single_centre_frequency():
    ok = cfg(pulse={"kind": "delta"}, frequencies={"omegas": [0.45]})
    assert ok.pulse.is_delta
    with pytest.raises(ConfigError, match="delta"):
        cfg(pulse={"kind": "delta"})


def test_frequency_outside_band():
    with pytest.raises(ConfigError, match="outside the pulse band"):
        cfg(frequencies={"omegas": [0.3, 0.45, 0.9]})


def test_unknown_closure():
    with pytest.raises(ConfigError):
        cfg(inverse={"closure": "magic"})


def test_to_dict_resolves_phantom():
    d = cfg().to_dict()
    assert d["phantom_resolved"]["grid"]["shape"] == [6, 6, 6]
    json.dumps(d)
