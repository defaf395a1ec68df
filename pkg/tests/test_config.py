import numpy as np
import pytest
import yaml

from jumpbvp.config import ConfigError, config_hash, load_config, parse_config
from jumpbvp.lattice import OperatorField, make_grid
from jumpbvp.ordexp import write_generator_table

MINIMAL = {"grid": {"L": 8.0, "N": 64}, "d": 1, "mu": [0.0], "experiment": {}}


def _write(tmp_path, doc, name="cfg.yaml"):
    p = tmp_path / name
    p.write_text("# units: hbar = 1\n" + yaml.safe_dump(doc))
    return p


def test_minimal_config_loads(tmp_path):
    cfg = load_config(_write(tmp_path, MINIMAL))
    assert cfg.d == 1 and cfg.grid.N == 64
    assert np.array_equal(cfg.sigma0, np.eye(1))
    assert cfg.experiment["kappas"] == [16.0, 32.0, 64.0, 128.0]


def test_complex_pairs():
    doc = dict(MINIMAL, d=2, mu=[1.0, 1.0],
               model={"eta": [[0.6, 0.0], [0.0, 0.8]], "S": [[0, [0, 1]], [[0, 1], 0]]})
    cfg = parse_config(doc)
    assert np.allclose(cfg.eta, [0.6, 0.8j])
    assert np.allclose(cfg.S, [[0, 1j], [1j, 0]])


def test_dimension_mismatch_names_both_fields():
    doc = dict(MINIMAL, d=2, mu=[1.0, 1.0], model={"H": [[1, 0], [0, -1]], "eta": [1, 0, 0]})
    with pytest.raises(ConfigError) as e:
        parse_config(doc)
    msg = str(e.value)
    assert "model.eta" in msg and "model.H" in msg


def test_all_errors_reported():
    doc = {"grid": {"L": -1, "N": 100}, "d": 1, "mu": [0.0],
           "model": {"S": [[2.0]], "rho0": [[-1.0]]},
           "experiment": {"kappas": [4.0], "band": 8.0, "mc_samples": 10}}
    with pytest.raises(ConfigError) as e:
        parse_config(doc)
    paths = [m.split(":")[0] for m in e.value.errors]
    for p in ("grid.L", "grid", "model.S", "model.rho0", "experiment.kappas", "experiment.mc_samples"):
        assert p in paths
    assert len(e.value.errors) >= 6


def test_missing_and_unparseable_files(tmp_path):
    with pytest.raises(ConfigError, match="not found"):
        load_config(tmp_path / "nope.yaml")
    bad = tmp_path / "bad.yaml"
    bad.write_text("grid: [1, 2\n")
    with pytest.raises(ConfigError, match="<parse>"):
        load_config(bad)


def test_generator_table_wrong_node_count(tmp_path):
    g = make_grid(8.0, 32)
    write_generator_table(tmp_path / "kappa.txt", OperatorField(g, np.zeros((32, 1, 1))))
    doc = dict(MINIMAL, model={"generator": {"kind": "table", "path": "kappa.txt"}})
    with pytest.raises(ConfigError, match="expected N=64"):
        load_config(_write(tmp_path, doc))


def test_generator_table_loads_and_enters_hash(tmp_path):
    g = make_grid(8.0, 64)
    vals = 0.1 * np.cos(g.z)[:, None, None] * np.ones((64, 1, 1))
    write_generator_table(tmp_path / "kappa.txt", OperatorField(g, vals))
    doc = dict(MINIMAL, model={"generator": {"kind": "table", "path": "kappa.txt"}})
    p = _write(tmp_path, doc)
    a = load_config(p)
    assert np.allclose(a.generator.field.values, vals)
    write_generator_table(tmp_path / "kappa.txt", OperatorField(g, 2 * vals))
    assert load_config(p).hash != a.hash


def test_sigma_must_commute_with_masses():
    doc = dict(MINIMAL, d=2, mu=[1.0, 2.0], model={"sigma0": [[0, 1], [1, 0]]})
    with pytest.raises(ConfigError, match="sigma0"):
        parse_config(doc)


def test_hash_is_order_independent():
    a = {"d": 1, "grid": {"N": 64, "L": 8.0}}
    b = {"grid": {"L": 8.0, "N": 64}, "d": 1}
    assert config_hash(a) == config_hash(b)
    assert config_hash(a) != config_hash(dict(a, d=2))
