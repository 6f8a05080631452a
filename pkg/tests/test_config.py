from __future__ import annotations

import copy

import numpy as np
import pytest
import yaml

from fmcollide.config import (
    ConfigError,
    bundled_path,
    bundled_scenarios,
    dump_config,
    load_config,
    parse_config,
)
from fmcollide.mesh import generate_box
from fmcollide.msh import write_msh

BASE = {
    "name": "tiny",
    "domain": {"box": {"lo": [0, 0], "hi": [1, 2]}, "h": 0.02},
    "fluid": {"density": 1.0, "viscosity": 0.1, "gravity": [0, -981]},
    "bodies": [{"id": 0, "shape": {"type": "sphere", "radius": 0.1}, "density": 1.2, "center": [0.5, 1.0]}],
    "collision": {"mode": "spherical", "rho": 0.02, "eps": 1e-5, "eps_f": 5e-6},
    "time": {"dt": 0.001, "t_end": 0.01},
}


def _with(path: str, value):
    data = copy.deepcopy(BASE)
    node = data
    keys = path.split(".")
    for k in keys[:-1]:
        node = node[int(k)] if isinstance(node, list) else node[k]
    node[keys[-1]] = value
    return data


def test_bundled_scenarios_parse_and_build():
    names = bundled_scenarios()
    assert set(names) >= {"falling_disk_2d", "falling_sphere_3d", "ellipse_channel_2d", "ellipsoid_box_3d",
                          "two_disks_2d", "hundred_disks_2d", "stenosis_2d", "three_sphere_swimmer_2d"}
    for name in names:
        cfg = load_config(bundled_path(name))
        st = cfg.build_state()
        assert st.bodies and cfg.dt > 0 and cfg.t_end >= cfg.dt


def test_falling_disk_reference_parameters():
    cfg = load_config(bundled_path("falling_disk_2d"))
    b = cfg.build_bodies()[0]
    assert b.shape.radius == 0.125 and b.density == 1.25
    assert np.allclose(b.center, (1, 4))
    assert cfg.collision.rho == 0.015 and cfg.collision.eps_f == 5e-6 and cfg.dt == 0.001
    assert cfg.fluid.viscosity == 0.1 and cfg.fluid.gravity == (0.0, -981.0)


def test_hundred_disks_count():
    cfg = load_config(bundled_path("hundred_disks_2d"))
    bodies = cfg.build_bodies()
    assert len(bodies) == 100 and all(b.shape.radius == 0.03125 for b in bodies)
    assert cfg.build_bodies() == cfg.build_bodies() or all(
        np.array_equal(a.center, b.center) for a, b in zip(cfg.build_bodies(), cfg.build_bodies())
    )


@pytest.mark.parametrize("name", ["falling_disk_2d", "three_sphere_swimmer_2d", "ellipsoid_box_3d"])
def test_roundtrip(name):
    cfg = load_config(bundled_path(name))
    text = dump_config(cfg)
    again = parse_config(yaml.safe_load(text))
    assert dump_config(again) == text
    assert again.collision == cfg.collision and again.dt == cfg.dt and again.options == cfg.options


@pytest.mark.parametrize(
    "path,value,field",
    [
        ("collision.rho", 0.0, "collision.rho"),
        ("collision.rho", -1.0, "collision.rho"),
        ("collision.eps", "x", "collision.eps"),
        ("time.dt", 0, "time.dt"),
        ("time.t_end", 0.0001, "time.t_end"),
        ("collision.mode", "fancy", "collision.mode"),
        ("fluid.viscosity", -1, "fluid.viscosity"),
        ("bodies.0.shape", {"type": "cube"}, "bodies[0].shape.type"),
        ("bodies.0.center", [0.5], "bodies[0].center"),
        ("bodies.0.center", [0.95, 1.0], "bodies"),
        ("extra", 1, "extra"),
    ],
)
def test_validation_errors(path, value, field):
    with pytest.raises(ConfigError) as exc:
        parse_config(_with(path, value)).build_state()
    assert exc.value.field == field, str(exc.value)


def test_duplicate_ids():
    data = copy.deepcopy(BASE)
    data["bodies"].append(dict(data["bodies"][0], center=[0.5, 1.5]))
    with pytest.raises(ConfigError, match="duplicate"):
        parse_config(data)


def test_mesh_domain_with_missing_marker(tmp_path):
    mesh = generate_box((0, 0), (1, 1), 0.25)
    write_msh(mesh, tmp_path / "box.msh")
    data = copy.deepcopy(BASE)
    data["domain"] = {"mesh": "box.msh", "h": 0.25}
    data["collision"]["mode"] = "general"
    data["bodies"][0].update(fixed=True, marker="obstacle")
    (tmp_path / "c.yaml").write_text(yaml.safe_dump(data))
    with pytest.raises(ConfigError, match="obstacle"):
        load_config(tmp_path / "c.yaml").build_state()


def test_defaults_from_mesh_size():
    data = copy.deepcopy(BASE)
    data["collision"] = {"mode": "spherical"}
    cfg = parse_config(data)
    h = 0.02
    assert cfg.collision.rho == pytest.approx(1.5 * h)
    assert cfg.collision.eps == pytest.approx(h * h)
    assert cfg.collision.eps_f == pytest.approx(h * h / 2)
    assert cfg.collision.d_max_factor == 1.5


def test_yaml_syntax_error(tmp_path):
    p = tmp_path / "bad.yaml"
    p.write_text("name: [unclosed\n")
    with pytest.raises(ConfigError):
        load_config(p)
