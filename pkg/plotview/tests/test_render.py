import json
import os

import pytest

from plotview.cli import main
from plotview.readers import (SchemaError, read_branch_csv, read_diagnostics_json,
                              read_family_csv, read_field_dump)
from plotview.render import PLOT_KINDS, render

GOLDEN = os.path.join(os.path.dirname(__file__), "golden")


def golden(name):
    return os.path.join(GOLDEN, name)


def all_specs(outdir):
    return [
        {"kind": "branch", "input": golden("branch.csv"),
         "output": str(outdir / "branch.png")},
        {"kind": "quantization", "input": golden("branch.csv"),
         "output": str(outdir / "quantization.png")},
        {"kind": "concentration", "input": golden("diagnostics.json"),
         "output": str(outdir / "concentration.png")},
        {"kind": "family_slope", "input": golden("family.csv"),
         "output": str(outdir / "family_slope.png"),
         "options": {"lambda": 31.41592653589793}},
        {"kind": "heatmap", "input": golden("u.field"),
         "output": str(outdir / "heatmap.png")},
    ]


def test_readers_accept_golden_artifacts():
    cols = read_branch_csv(golden("branch.csv"))
    assert len(cols["lambda"]) > 5
    fam = read_family_csv(golden("family.csv"))
    assert set(fam) == {"r", "theta", "J", "K1", "Kg", "cm_x", "cm_y"}
    diag = read_diagnostics_json(golden("diagnostics.json"))
    assert diag["quantization"]["verdict"] == "inconclusive"
    dump = read_field_dump(golden("u.field"))
    assert dump["shape_tag"] == "rectangle" and len(dump["values"]) == 31 * 31


def test_render_all_kinds_byte_identical(tmp_path):
    """All five kinds render, and a second invocation reproduces every
    image byte for byte."""
    first = {}
    for spec in all_specs(tmp_path):
        out = render(spec)
        assert os.path.exists(out)
        first[spec["kind"]] = open(out, "rb").read()
        assert len(first[spec["kind"]]) > 1000
    for spec in all_specs(tmp_path):
        render(spec)
        again = open(spec["output"], "rb").read()
        assert again == first[spec["kind"]], f"{spec['kind']} image changed between runs"
    assert set(first) == set(PLOT_KINDS)


def test_corrupted_schema_named_column(tmp_path):
    """A renamed column is refused with the column named in the error."""
    lines = open(golden("branch.csv")).read().splitlines()
    header = lines[0].replace("u_max", "umax")
    bad = tmp_path / "bad.csv"
    bad.write_text("\n".join([header] + lines[1:]) + "\n")
    with pytest.raises(SchemaError) as err:
        render({"kind": "branch", "input": str(bad), "output": str(tmp_path / "x.png")})
    assert "u_max" in str(err.value)

    dropped = [",".join(ln.split(",")[:-1]) for ln in lines]
    bad2 = tmp_path / "bad2.csv"
    bad2.write_text("\n".join(dropped) + "\n")
    with pytest.raises(SchemaError) as err2:
        render({"kind": "quantization", "input": str(bad2),
                "output": str(tmp_path / "y.png")})
    assert "u_minus_sup" in str(err2.value)


def test_empty_branch_csv_refused(tmp_path):
    header = open(golden("branch.csv")).readline()
    empty = tmp_path / "empty.csv"
    empty.write_text(header)
    with pytest.raises(SchemaError):
        render({"kind": "branch", "input": str(empty),
                "output": str(tmp_path / "z.png")})
    assert not (tmp_path / "z.png").exists()


def test_family_slope_requires_lambda(tmp_path):
    with pytest.raises(SchemaError) as err:
        render({"kind": "family_slope", "input": golden("family.csv"),
                "output": str(tmp_path / "f.png")})
    assert "lambda" in str(err.value)


def test_diagnostics_missing_key_named(tmp_path):
    diag = json.loads(open(golden("diagnostics.json")).read())
    del diag["concentration"]
    bad = tmp_path / "diag.json"
    bad.write_text(json.dumps(diag))
    with pytest.raises(SchemaError) as err:
        read_diagnostics_json(bad)
    assert "concentration" in str(err.value)


def test_unknown_kind_rejected(tmp_path):
    with pytest.raises(SchemaError):
        render({"kind": "pie", "input": golden("branch.csv"),
                "output": str(tmp_path / "p.png")})


def test_cli_roundtrip(tmp_path, capsys):
    spec = {"kind": "branch", "input": golden("branch.csv"),
            "output": str(tmp_path / "b.png")}
    spec_path = tmp_path / "spec.json"
    spec_path.write_text(json.dumps(spec))
    assert main([str(spec_path)]) == 0
    assert os.path.exists(spec["output"])

    bad = tmp_path / "badspec.json"
    bad.write_text(json.dumps({"kind": "branch", "input": str(tmp_path / "nope.csv"),
                               "output": str(tmp_path / "n.png")}))
    assert main([str(bad)]) == 2
    assert main([str(tmp_path / "missing.json")]) == 2
