import json

import numpy as np
import pytest

from geowave import config as cf
from geowave import solver as sv


def test_builtin_presets_validate_and_build():
    for name in cf.BUILTIN_PRESETS:
        cfg = cf.load_config(name)
        p = cfg.params()
        st = cfg.initial_state()
        assert st.U.shape[0] == cfg.doc["ensemble"]
        assert st.U.shape[-1] == cfg.ambient_dim
        assert cfg.n_steps * p.dt == pytest.approx(cfg.doc["time"]["horizon"])


def test_defaults_fill_and_dt_choice():
    cfg = cf.load_config({"grid": {"P": 32}})
    assert cfg.doc["time"]["dt"] == pytest.approx(0.25 / 32)
    cfg = cf.load_config({"grid": {"P": 32}, "scheme": {"m": 1e4}})
    assert cfg.doc["time"]["dt"] == pytest.approx(0.5 / np.sqrt(8e4))


@pytest.mark.parametrize("doc,path", [
    ({"grid": {"d": 4}}, "grid.d"),
    ({"grid": {"P": 4}}, "grid.P"),
    ({"grid": {"L": -1}}, "grid.L"),
    ({"grid": {"P": "many"}}, "grid.P"),
    ({"time": {"dt": 0.1}}, "time.dt"),
    ({"time": {"stride": 0}}, "time.stride"),
    ({"scheme": {"type": "implicit"}}, "scheme.type"),
    ({"manifold": {"preset": "torus"}}, "manifold.preset"),
    ({"coefficients": {"presets": [{"name": "wind"}]}}, "coefficients.presets[0].name"),
    ({"coefficients": {"presets": [{"name": "multiplicative_noise", "sigma": 1.0}]}}, "noise"),
    ({"noise": {"preset": "white"}}, "noise.preset"),
    ({"initial": {"preset": "vortex"}}, "initial.preset"),
    ({"diagnostics": {"names": ["entropy"]}}, "diagnostics.names[0]"),
    ({"ensemble": 0}, "ensemble"),
    ({"colour": "blue"}, "colour"),
    ({"finite_propagation": True, "time": {"horizon": 0.5}}, "grid.L"),
])
def test_validation_names_key_path(doc, path):
    with pytest.raises(cf.ConfigError) as info:
        cf.load_config(doc)
    assert info.value.path == path
    assert str(info.value).startswith(path)
    assert not info.value.numerical


def test_stiffness_is_numerical():
    with pytest.raises(cf.StiffnessConfigError) as info:
        cf.load_config({"grid": {"P": 16}, "scheme": {"m": 1e4}, "time": {"dt": 0.01}})
    assert info.value.path == "time.dt" and info.value.numerical


def test_load_from_file(tmp_path):
    path = tmp_path / "c.json"
    path.write_text(json.dumps(cf.BUILTIN_PRESETS["geodesic-s2"]))
    assert cf.load_config(str(path)).hash == cf.load_config("geodesic-s2").hash
    bad = tmp_path / "bad.json"
    bad.write_text("{ nope")
    with pytest.raises(cf.ConfigError, match="invalid JSON"):
        cf.load_config(str(bad))
    with pytest.raises(cf.ConfigError):
        cf.load_config(str(tmp_path / "missing.json"))


def test_hash_ignores_presentation():
    base = dict(cf.BUILTIN_PRESETS["sphere-pulse"])
    h = cf.config_hash(base)
    same = json.loads(json.dumps(base))
    same["description"] = "another wording"
    same["grid"] = {"L": 1, "P": 64, "d": 1}
    same["scheme"] = {"m": 1000, "type": "penalized", "projection": "momentum"}
    same["finite_propagation"] = False
    assert cf.config_hash(same) == h
    assert len(h) == 40


@pytest.mark.parametrize("key,value", [
    (("grid", "P"), 128), (("scheme", "m"), 999.0), (("time", "dt"), 0.00025), (("seed",), 2),
    (("ensemble",), 8), (("initial", "twist"), 0.25), (("noise", "mass"), 2.0), (("time", "horizon"), 2.0),
    (("coefficients", "mollify"), False),
])
def test_hash_changes_with_semantic_keys(key, value):
    base = cf.BUILTIN_PRESETS["sphere-pulse"]
    doc = json.loads(json.dumps(base))
    node = doc
    for k in key[:-1]:
        node = node[k]
    node[key[-1]] = value
    assert cf.config_hash(doc) != cf.config_hash(base)


def test_with_overrides_revalidates():
    cfg = cf.load_config("geodesic-s2")
    assert cfg.with_overrides(seed=5).doc["seed"] == 5
    with pytest.raises(cf.ConfigError):
        cfg.with_overrides(time={"dt": 1.0})


def test_random_initial_members_are_stable():
    cfg = cf.load_config({"grid": {"P": 32}, "initial": {"preset": "random_tangent_field"}, "ensemble": 3})
    all3 = cfg.initial_state()
    one = cfg.initial_state(members=[2])
    assert np.array_equal(all3.U[2], one.U[0])
    assert not np.array_equal(all3.U[0], all3.U[1])


def test_params_match_blocks():
    cfg = cf.load_config("damped-multiplicative")
    p = cfg.params()
    assert isinstance(p, sv.StepParams)
    assert p.penalty_strength == 100.0 and p.noisy
    assert p.coefficients.sup_norms["f0"] == pytest.approx(0.25)
