import dataclasses

import pytest
import yaml

from nnda.config import (ConfigValidationError, ExperimentManifest, apply_override, dump_config,
                         load_config, manifest_from_dict, manifest_hash)
from nnda.errors import ConfigurationError


def test_defaults():
    m = load_config()
    assert m == ExperimentManifest()
    assert (m.model.n, m.model.forcing, m.letkf.ensemble_size, m.letkf.localization_radius) == (40, 8.0, 30, 3)
    assert (m.cycles.training, m.cycles.hindcast, m.emulator.n_regions) == (1200, 112, 6)
    assert m.train_config().learning_rate == 0.001 and m.train_config().max_epochs == 5000


@pytest.mark.parametrize("data,key", [
    ({"bogus": 1}, "bogus"),
    ({"model": {"nn": 3}}, "model.nn"),
    ({"model": {"n": 3}}, "model.n"),
    ({"letkf": {"inflation": 0.5}}, "letkf.inflation"),
    ({"training": {"max_epochs": 1.5}}, "training.max_epochs"),
    ({"compare_letkf": 1}, "compare_letkf"),
    ({"observations": {"density": 0}}, "observations.density"),
])
def test_errors_name_key(data, key):
    with pytest.raises(ConfigValidationError) as info:
        manifest_from_dict(data)
    assert info.value.key == key and info.value.constraint


def test_round_trip_lossless(tmp_path):
    m = load_config(None, ["letkf.inflation=1.1", "training.patience=5", "observations.schedule=alternating"], 7)
    p = tmp_path / "c.yaml"
    p.write_text(dump_config(m))
    assert load_config(p) == m
    assert manifest_hash(load_config(p)) == manifest_hash(m)


def test_file_then_overrides_then_seed(tmp_path):
    p = tmp_path / "c.yaml"
    p.write_text(yaml.safe_dump({"letkf": {"inflation": 1.2, "ensemble_size": 20}, "seed": 3}))
    m = load_config(p, ["letkf.inflation=1.3"], seed=9)
    assert (m.letkf.inflation, m.letkf.ensemble_size, m.seed) == (1.3, 20, 9)
    assert m.letkf_config().seed == 9 and m.train_config().shuffle_seed == 9


def test_missing_file():
    with pytest.raises(ConfigurationError):
        load_config("/nonexistent/config.yaml")


def test_override_syntax():
    with pytest.raises(ConfigValidationError):
        apply_override({}, "no-equals-sign")
    assert apply_override({}, "a.b=2") == {"a": {"b": 2}}


def all_fields(m):
    for f in dataclasses.fields(m):
        v = getattr(m, f.name)
        if dataclasses.is_dataclass(v):
            for g in dataclasses.fields(v):
                yield f"{f.name}.{g.name}", getattr(v, g.name)
        else:
            yield f.name, v


def changed(value):
    if isinstance(value, bool):
        return not value
    if value is None:
        return 3
    if isinstance(value, int):
        return value + 1
    if isinstance(value, float):
        return value * 1.001 if value else 0.5
    return {"lorenz96": "lorenz63", "every_cycle": "alternating", "none": "gaussian",
            "skip": "neighbours", "online": "batch"}[value]


def test_hash_changes_iff_field_changes():
    base = ExperimentManifest()
    h = manifest_hash(base)
    assert manifest_hash(load_config(None, ["letkf.inflation=1.05"])) == h
    seen = {h}
    for key, value in all_fields(base):
        if key == "model.kind":
            sets = ["model.kind=lorenz63", "model.n=3", "emulator.n_regions=3"]
        else:
            sets = [f"{key}={yaml.safe_dump(changed(value)).strip().removesuffix('...').strip()}"]
        m = load_config(None, sets)
        hm = manifest_hash(m)
        assert hm not in seen, key
        seen.add(hm)
