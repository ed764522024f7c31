import numpy as np
import pytest

import sparselbm as slb
from sparselbm.geometry import GeometryError, GeometryParseError

from conftest import random_mixed_geometry


def assert_builder_invariants(geom):
    desc = geom.descriptors
    assert desc.neighbor_mask_is_symmetric()
    nonsolid = desc.type_tag != slb.NodeType.SOLID
    # every non-solid node keeps at least one non-solid neighbor
    assert np.all(desc.neighbor_mask[nonsolid] != 0)
    # porosity stored == recomputed
    assert geom.porosity == slb.porosity(geom)
    # solid nodes never sit directly next to plain fluid
    solid_y, solid_x = np.nonzero(~nonsolid)
    n_x, n_y = desc.dims
    for y, x in zip(solid_y, solid_x):
        for dy in (-1, 0, 1):
            for dx in (-1, 0, 1):
                xn, yn = x + dx, y + dy
                if 0 <= xn < n_x and 0 <= yn < n_y:
                    assert desc.type_tag[yn, xn] != slb.NodeType.FLUID


def test_cavity_counts_and_types():
    geom = slb.build_cavity(128, 128, 0.1)
    desc = geom.descriptors
    assert desc.count(slb.NodeType.VELOCITY_BC) == 128
    assert desc.count(slb.NodeType.BOUNCE_BACK_WALL) == 380
    assert desc.count(slb.NodeType.SOLID) == 0
    assert geom.porosity == 1.0
    # lid owns both top corners
    assert desc.type_tag[127, 0] == slb.NodeType.VELOCITY_BC
    assert desc.type_tag[127, 127] == slb.NodeType.VELOCITY_BC
    assert geom.provenance.params["L"] == "127"
    np.testing.assert_array_equal(
        geom.boundary_values.velocity(int(desc.bc_index[127, 64])), [0.1, 0.0])
    assert_builder_invariants(geom)


def test_cavity_accepts_zero_lid_and_rejects_tiny_dims():
    geom = slb.build_cavity(8, 8, 0.0)
    assert geom.porosity == 1.0
    with pytest.raises(GeometryError):
        slb.build_cavity(7, 8, 0.1)


def test_channel_chan_v_paper_dimensions():
    geom = slb.build_channel(4096, 512, slb.VelocityInlet((0.1, 0.0)))
    desc = geom.descriptors
    assert geom.provenance.case == "chan_v"
    assert desc.type_tag[256, 0] == slb.NodeType.VELOCITY_BC
    assert desc.type_tag[256, 4095] == slb.NodeType.PRESSURE_BC
    assert desc.type_tag[0, 2048] == slb.NodeType.BOUNCE_BACK_WALL
    assert desc.type_tag[511, 2048] == slb.NodeType.BOUNCE_BACK_WALL
    # outlet imposes rho = 1.0
    assert geom.boundary_values.pressure(int(desc.bc_index[256, 4095])) == 1.0
    # inlet corners belong to the inlet (velocity beats bounce-back)
    assert desc.type_tag[0, 0] == slb.NodeType.VELOCITY_BC
    assert desc.type_tag[511, 0] == slb.NodeType.VELOCITY_BC
    assert geom.porosity == 1.0


def test_channel_chan_p_settings():
    geom = slb.build_channel(4096, 512, slb.PressureInlet(1.016))
    desc = geom.descriptors
    assert geom.provenance.case == "chan_p"
    assert desc.type_tag[10, 0] == slb.NodeType.PRESSURE_BC
    assert geom.boundary_values.pressure(int(desc.bc_index[10, 0])) == 1.016
    assert_builder_invariants(geom)


def test_channel_miniature_and_errors():
    geom = slb.build_channel(64, 16, slb.VelocityInlet((0.05, 0.0)))
    assert geom.porosity == 1.0
    assert_builder_invariants(geom)
    with pytest.raises(GeometryError):
        slb.build_channel(16, 64, slb.VelocityInlet((0.05, 0.0)))
    with pytest.raises(GeometryError):
        slb.build_channel(64, 4, slb.VelocityInlet((0.05, 0.0)))
    with pytest.raises(GeometryError):
        slb.build_channel(64, 16, "plug flow")


def test_add_cylinder_circle_and_square():
    geom = slb.build_channel(512, 128, slb.VelocityInlet((0.1, 0.0)))
    slb.add_cylinder(geom, "circle", 64, (256, 64))
    desc = geom.descriptors
    n_solid = desc.count(slb.NodeType.SOLID)
    # every node within radius 32 of the center, integer-exact membership
    expected = sum(1 for y in range(128) for x in range(512)
                   if 4 * ((x - 256) ** 2 + (y - 64) ** 2) <= 64 * 64)
    assert n_solid == expected
    assert geom.porosity == pytest.approx(1 - expected / (512 * 128))
    assert_builder_invariants(geom)

    sq = slb.build_channel(512, 128, slb.VelocityInlet((0.1, 0.0)))
    slb.add_cylinder(sq, "square", 64, (256, 64))
    assert sq.descriptors.count(slb.NodeType.SOLID) == 64 * 64
    assert_builder_invariants(sq)


def test_add_cylinder_degenerate_single_node():
    geom = slb.build_cavity(32, 32, 0.1)
    slb.add_cylinder(geom, "circle", 1, (16, 16))
    desc = geom.descriptors
    assert desc.count(slb.NodeType.SOLID) == 1
    ring = desc.count(slb.NodeType.BOUNCE_BACK_WALL) - 3 * 32 + 2 + 2
    assert ring == 8
    assert_builder_invariants(geom)


def test_add_cylinder_bounds_and_overlap_errors():
    geom = slb.build_channel(128, 64, slb.VelocityInlet((0.1, 0.0)))
    with pytest.raises(GeometryError):
        slb.add_cylinder(geom, "circle", 64, (10, 32))  # pokes out of the inlet
    with pytest.raises(GeometryError):
        slb.add_cylinder(geom, "circle", 200, (64, 32))  # taller than the duct
    slb.add_cylinder(geom, "circle", 16, (64, 32))
    with pytest.raises(GeometryError):
        slb.add_cylinder(geom, "circle", 16, (70, 32))  # overlaps the first
    with pytest.raises(GeometryError):
        slb.add_cylinder(geom, "hexagon", 16, (100, 32))


def test_porous_regular_examples():
    geom = slb.build_porous_regular(256, 1.0)
    assert geom.porosity == 1.0
    assert geom.descriptors.count(slb.NodeType.SOLID) == 0

    geom = slb.build_porous_regular(512, 0.5)
    assert abs(geom.porosity - 0.5) <= 0.02
    # analytic estimate: r = n sqrt((1 - phi) / (64 pi)) ~ 25.5 nodes
    assert float(geom.provenance.params["radius"]) == pytest.approx(25.5, abs=3)
    assert_builder_invariants(geom)

    with pytest.raises(GeometryError):
        slb.build_porous_regular(512, 0.2)


def test_porous_regular_wall_types():
    geom = slb.build_porous_regular(256, 0.6)
    desc = geom.descriptors
    assert desc.type_tag[128, 0] == slb.NodeType.PRESSURE_BC
    assert geom.boundary_values.pressure(int(desc.bc_index[128, 0])) == 1.016
    assert desc.type_tag[128, 255] == slb.NodeType.PRESSURE_BC
    assert geom.boundary_values.pressure(int(desc.bc_index[128, 255])) == 1.0
    assert desc.type_tag[0, 128] == slb.NodeType.BOUNCE_BACK_WALL


def test_porous_random_determinism_and_limits():
    a = slb.build_porous_random(256, 0.4, seed=42)
    b = slb.build_porous_random(256, 0.4, seed=42)
    assert a == b
    c = slb.build_porous_random(256, 0.4, seed=43)
    assert not np.array_equal(a.descriptors.type_tag, c.descriptors.type_tag)

    empty = slb.build_porous_random(256, 1.0, seed=5)
    assert empty.porosity == 1.0
    assert empty.descriptors.count(slb.NodeType.SOLID) == 0


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_porous_targets_hit_within_tolerance(seed):
    targets = [round(0.1 * k, 1) for k in range(1, 11)]
    for target in targets:
        geom = slb.build_porous_random(256, target, seed=seed)
        assert abs(geom.porosity - target) <= 0.02 + 1e-12, \
            f"random target {target}: got {geom.porosity}"
    for target in [t for t in targets if t >= 0.3]:
        geom = slb.build_porous_regular(256, target)
        assert abs(geom.porosity - target) <= 0.02 + 1e-12, \
            f"regular target {target}: got {geom.porosity}"


def test_porous_random_invariants():
    geom = slb.build_porous_random(256, 0.4, seed=7)
    assert_builder_invariants(geom)


def test_porosity_direct_examples():
    geom = slb.build_cavity(16, 16, 0.1)
    assert slb.porosity(geom) == 1.0
    types = np.full((16, 16), slb.NodeType.FLUID, dtype=np.uint8)
    types[:8, :] = slb.NodeType.SOLID
    half = slb.from_arrays("half", types)
    assert slb.porosity(half) == 0.5


@pytest.mark.parametrize("make", [
    lambda: slb.build_cavity(32, 32, 0.1),
    lambda: slb.build_channel(48, 16, slb.PressureInlet(1.016)),
    lambda: slb.build_porous_random(64, 0.5, seed=3),
    lambda: random_mixed_geometry(2),
])
def test_save_load_roundtrip(tmp_path, make):
    geom = make()
    path = tmp_path / "geom.slbmgeo"
    slb.save_geometry(geom, path)
    loaded = slb.load_geometry(path)
    assert loaded == geom


def test_geometry_file_header_precedes_payload(tmp_path):
    geom = slb.build_cavity(16, 16, 0.1)
    path = tmp_path / "geom.slbmgeo"
    slb.save_geometry(geom, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "SLBMGEO 1"
    assert lines.index("nodes") > lines.index("nx 16")
    assert lines[-1] == "end"


def test_load_truncated_file_is_a_parse_error(tmp_path):
    geom = slb.build_cavity(16, 16, 0.1)
    path = tmp_path / "geom.slbmgeo"
    slb.save_geometry(geom, path)
    text = path.read_text().splitlines()
    truncated = tmp_path / "trunc.slbmgeo"
    truncated.write_text("\n".join(text[:len(text) // 2]))
    with pytest.raises(GeometryParseError):
        slb.load_geometry(truncated)


def test_load_reports_line_numbers(tmp_path):
    path = tmp_path / "bad.slbmgeo"
    path.write_text("SLBMGEO 1\nnx 4\nny 4\nwat 7\n")
    with pytest.raises(GeometryParseError) as err:
        slb.load_geometry(path)
    assert "line 4" in str(err.value)


def test_load_rejects_corrupt_porosity(tmp_path):
    geom = slb.build_cavity(16, 16, 0.1)
    path = tmp_path / "geom.slbmgeo"
    slb.save_geometry(geom, path)
    doctored = path.read_text().replace("porosity 1.0", "porosity 0.5")
    path.write_text(doctored)
    with pytest.raises(GeometryParseError):
        slb.load_geometry(path)
