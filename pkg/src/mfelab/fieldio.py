"""Text dumps of grid fields.

Format: one header line ``nx ny spacing shape-tag`` followed by one
``i j x y value`` row per interior node.  Readers ignore unknown trailing
columns.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import DiscreteDomain, Field


@dataclass
class FieldDump:
    nx: int
    ny: int
    spacing: float
    shape_tag: str
    i: np.ndarray
    j: np.ndarray
    x: np.ndarray
    y: np.ndarray
    values: np.ndarray


def dump_field(u: Field, path) -> None:
    dom = u.domain
    with open(path, "w") as fh:
        fh.write(f"{dom.nx} {dom.ny} {dom.spacing:.17g} {dom.shape_tag}\n")
        for (i, j), (x, y), v in zip(dom.ij, dom.coords, u.values):
            fh.write(f"{i} {j} {x:.17g} {y:.17g} {v:.17g}\n")


def load_field_dump(path) -> FieldDump:
    with open(path) as fh:
        head = fh.readline().split()
        if len(head) < 4:
            raise ValueError(f"malformed field dump header in {path}")
        nx, ny = int(head[0]), int(head[1])
        spacing = float(head[2])
        tag = head[3]
        rows = []
        for line in fh:
            parts = line.split()
            if not parts:
                continue
            if len(parts) < 5:
                raise ValueError(f"field dump row with {len(parts)} columns (need >= 5)")
            rows.append((int(parts[0]), int(parts[1]),
                         float(parts[2]), float(parts[3]), float(parts[4])))
    i = np.array([r[0] for r in rows], dtype=np.int64)
    j = np.array([r[1] for r in rows], dtype=np.int64)
    x = np.array([r[2] for r in rows])
    y = np.array([r[3] for r in rows])
    v = np.array([r[4] for r in rows])
    return FieldDump(nx=nx, ny=ny, spacing=spacing, shape_tag=tag,
                     i=i, j=j, x=x, y=y, values=v)


def attach_to_domain(dump: FieldDump, dom: DiscreteDomain) -> Field:
    """Bind a dump to a freshly built domain, matching nodes by lattice index."""
    if dump.shape_tag != dom.shape_tag or len(dump.values) != dom.n:
        raise ValueError("field dump does not match the domain "
                         f"({dump.shape_tag}/{len(dump.values)} vs "
                         f"{dom.shape_tag}/{dom.n})")
    key_dump = dump.i.astype(np.int64) * (dom.ny + 1) + dump.j.astype(np.int64)
    key_dom = dom.ij[:, 0] * (dom.ny + 1) + dom.ij[:, 1]
    order_dump = np.argsort(key_dump)
    order_dom = np.argsort(key_dom)
    if not np.array_equal(key_dump[order_dump], key_dom[order_dom]):
        raise ValueError("field dump lattice indices do not match the domain")
    vals = np.empty(dom.n)
    vals[order_dom] = dump.values[order_dump]
    return Field(dom, vals)
