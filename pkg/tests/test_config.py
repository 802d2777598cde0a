"""Configuration parsing, validation, defaults, and hashing."""

import json

import pytest

from ttlaw.config import ExperimentConfig, load_config, parse_config
from ttlaw.errors import ConfigError
from ttlaw.rng import PLANT, substream
from ttlaw.systems import PlantedSpec, fput_system


def _minimal(**overrides):
    raw = {
        "system": {"kind": "planted", "d": 6},
        "dictionary": {"kind": "monomial", "max_degree": 2},
        "model": {"lam": 2, "rho": 2, "L": 1},
        "grid": {"M": [100]},
    }
    raw.update(overrides)
    return raw


# -- defaults and resolution ------------------------------------------------------


def test_minimal_config_fills_documented_defaults():
    cfg = parse_config(_minimal())
    assert cfg.seed == 0
    assert cfg.out_dir == "results"
    assert cfg.sigma_grid == (0.0,)
    assert cfg.restarts == 1
    assert cfg.m_prime == 20000
    assert cfg.options.max_sweeps == 10
    assert cfg.intervals == ((-1.0, 1.0),) * 6
    assert isinstance(cfg, ExperimentConfig)


def test_system_intervals_follow_the_kind():
    cfg = parse_config(_minimal(system={"kind": "lj", "d": 4}))
    assert cfg.intervals[0] == (0.75, 1.25)
    cfg = parse_config(_minimal(system={"kind": "dipole", "d": 4}))
    assert cfg.intervals[0][0] == 0.0


def test_explicit_sampler_intervals_validate_length():
    raw = _minimal(sampler={"intervals": [[-2.0, 2.0]] * 6})
    assert parse_config(raw).intervals == ((-2.0, 2.0),) * 6
    with pytest.raises(ConfigError):
        parse_config(_minimal(sampler={"intervals": [[-2.0, 2.0]] * 5}))


def test_planted_seed_defaults_to_master_seed():
    cfg = parse_config(_minimal(seed=17))
    assert cfg.system == PlantedSpec(d=6, seed=17)
    cfg = parse_config(_minimal(seed=17, system={"kind": "planted", "d": 6, "seed": 3}))
    assert cfg.system.seed == 3


def test_fput_random_constants_are_a_function_of_the_seed():
    raw = _minimal(system={"kind": "fput", "d": 5, "random_constants": True}, seed=9)
    cfg = parse_config(raw)
    expected = fput_system(5, rng=substream(9, PLANT))
    assert cfg.system == expected
    assert parse_config(raw).system == expected  # redraw is deterministic
    with pytest.raises(ConfigError):
        parse_config(
            _minimal(
                system={
                    "kind": "fput",
                    "d": 5,
                    "random_constants": True,
                    "kappa": [1.0] * 6,
                }
            )
        )


def test_fput_defaults_to_unit_constants():
    cfg = parse_config(_minimal(system={"kind": "fput", "d": 5}))
    assert cfg.system.kappa == (1.0,) * 6
    assert cfg.system.beta == (1.0,) * 6


def test_train_options_carry_master_seed():
    cfg = parse_config(_minimal(seed=23, train={"restarts": 4, "max_sweeps": 7}))
    assert cfg.options.seed == 23
    assert cfg.options.restarts == 4
    assert cfg.options.max_sweeps == 7


# -- strict validation ------------------------------------------------------------


def test_unknown_keys_are_rejected_everywhere():
    with pytest.raises(ConfigError):
        parse_config(_minimal(extra_section={}))
    with pytest.raises(ConfigError):
        parse_config(_minimal(system={"kind": "planted", "d": 6, "bananas": 1}))
    with pytest.raises(ConfigError):
        parse_config(_minimal(train={"sweeps": 10}))
    with pytest.raises(ConfigError):
        parse_config(_minimal(grid={"M": [100], "noise": [0.0]}))


def test_missing_required_sections_are_rejected():
    raw = _minimal()
    del raw["dictionary"]
    with pytest.raises(ConfigError):
        parse_config(raw)
    with pytest.raises(ConfigError):
        parse_config(_minimal(model={"lam": 2, "rho": 2}))


def test_empty_or_invalid_grids_are_rejected():
    with pytest.raises(ConfigError):
        parse_config(_minimal(grid={"M": []}))
    with pytest.raises(ConfigError):
        parse_config(_minimal(grid={"M": [100], "sigma": []}))
    with pytest.raises(ConfigError):
        parse_config(_minimal(grid={"M": [0]}))
    with pytest.raises(ConfigError):
        parse_config(_minimal(grid={"M": [100], "sigma": [-0.1]}))


def test_invalid_structure_parameters_are_rejected():
    with pytest.raises(ConfigError):
        parse_config(_minimal(model={"lam": -1, "rho": 2, "L": 1}))
    with pytest.raises(ConfigError):
        parse_config(_minimal(model={"lam": 2, "rho": 0, "L": 1}))
    with pytest.raises(ConfigError):
        parse_config(_minimal(dictionary={"kind": "fourier", "max_degree": 2}))
    with pytest.raises(ConfigError):
        parse_config(_minimal(eval={"m_prime": 0}))


def test_non_table_top_level_is_rejected():
    with pytest.raises(ConfigError):
        parse_config([1, 2, 3])
    with pytest.raises(ConfigError):
        parse_config(_minimal(system="fput"))


# -- hashing ----------------------------------------------------------------------


def test_hash_ignores_out_dir_but_not_science_fields():
    base = parse_config(_minimal())
    assert parse_config(_minimal(out_dir="elsewhere")).hash() == base.hash()
    assert parse_config(_minimal(seed=1)).hash() != base.hash()
    assert parse_config(_minimal(grid={"M": [200]})).hash() != base.hash()
    assert (
        parse_config(_minimal(model={"lam": 2, "rho": 3, "L": 1})).hash()
        != base.hash()
    )


def test_hash_covers_randomly_drawn_constants():
    raw = lambda s: _minimal(
        system={"kind": "fput", "d": 5, "random_constants": True, "seed": s}
    )
    assert parse_config(raw(1)).hash() != parse_config(raw(2)).hash()


# -- file loading -----------------------------------------------------------------


def test_load_json_and_toml_agree(tmp_path):
    raw = _minimal(seed=7)
    jpath = tmp_path / "study.json"
    jpath.write_text(json.dumps(raw))
    tpath = tmp_path / "study.toml"
    tpath.write_text(
        "\n".join(
            [
                "seed = 7",
                "[system]",
                'kind = "planted"',
                "d = 6",
                "[dictionary]",
                'kind = "monomial"',
                "max_degree = 2",
                "[model]",
                "lam = 2",
                "rho = 2",
                "L = 1",
                "[grid]",
                "M = [100]",
            ]
        )
    )
    assert load_config(jpath).hash() == load_config(tpath).hash()


def test_load_config_overrides_take_precedence(tmp_path):
    path = tmp_path / "study.json"
    path.write_text(json.dumps(_minimal(seed=7, out_dir="a")))
    cfg = load_config(path, seed=99, out_dir="b")
    assert cfg.seed == 99 and cfg.out_dir == "b"
    assert cfg.options.seed == 99


def test_load_config_reports_parse_errors(tmp_path):
    path = tmp_path / "study.json"
    path.write_text("{not json")
    with pytest.raises(ConfigError):
        load_config(path)
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.json")
    bad_toml = tmp_path / "study.toml"
    bad_toml.write_text("[system\nkind=")
    with pytest.raises(ConfigError):
        load_config(bad_toml)
