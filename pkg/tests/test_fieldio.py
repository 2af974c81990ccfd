import numpy as np
import pytest

from mfelab import grid
from mfelab.fieldio import attach_to_domain, dump_field, load_field_dump
from mfelab.grid import Field


def test_dump_roundtrip_rectangle(tmp_path):
    dom = grid.build_rectangle(1.0, 1.0, 1 / 16)
    rng = np.random.default_rng(0)
    u = Field(dom, rng.standard_normal(dom.n))
    path = tmp_path / "u.field"
    dump_field(u, path)
    with open(path) as fh:
        head = fh.readline().split()
    assert head[0] == str(dom.nx) and head[1] == str(dom.ny)
    assert head[3] == "rectangle"
    dump = load_field_dump(path)
    back = attach_to_domain(dump, dom)
    assert np.array_equal(back.values, u.values)


def test_dump_roundtrip_radial(tmp_path):
    dom = grid.build_disk_radial(1.0, 1 / 32)
    u = Field(dom, np.linspace(1.0, 0.0, dom.n))
    path = tmp_path / "u.field"
    dump_field(u, path)
    dump = load_field_dump(path)
    assert dump.ny == 1 and dump.shape_tag == "disk_radial"
    back = attach_to_domain(dump, dom)
    assert np.array_equal(back.values, u.values)


def test_reader_ignores_trailing_columns(tmp_path):
    dom = grid.build_rectangle(1.0, 1.0, 1 / 16)
    u = Field(dom, np.arange(dom.n, dtype=float))
    path = tmp_path / "u.field"
    dump_field(u, path)
    lines = path.read_text().splitlines()
    lines = [lines[0]] + [ln + " 42.0 extra" for ln in lines[1:]]
    path.write_text("\n".join(lines) + "\n")
    dump = load_field_dump(path)
    back = attach_to_domain(dump, dom)
    assert np.array_equal(back.values, u.values)


def test_attach_rejects_mismatched_domain(tmp_path):
    dom = grid.build_rectangle(1.0, 1.0, 1 / 16)
    other = grid.build_rectangle(1.0, 1.0, 1 / 8)
    u = Field(dom, np.zeros(dom.n))
    path = tmp_path / "u.field"
    dump_field(u, path)
    with pytest.raises(ValueError):
        attach_to_domain(load_field_dump(path), other)


def test_reader_rejects_malformed(tmp_path):
    path = tmp_path / "bad.field"
    path.write_text("16 16\n")
    with pytest.raises(ValueError):
        load_field_dump(path)
    path.write_text("16 16 0.0625 rectangle\n1 2 3\n")
    with pytest.raises(ValueError):
        load_field_dump(path)
