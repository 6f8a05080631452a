"""Legacy ASCII VTK output for meshes and vertex fields (viewable in ParaView)."""

from __future__ import annotations

import os
from typing import Mapping

import numpy as np

from .mesh import SimplicialMesh

__all__ = ["dumps_vtk", "write_vtk"]

# VTK cell type ids
_TRIANGLE = 5
_TETRA = 10


def dumps_vtk(mesh: SimplicialMesh, point_data: Mapping[str, np.ndarray] | None = None, title: str = "fmcollide") -> str:
    """Unstructured grid with optional scalar fields, one value per vertex.

    Infinite values (vertices outside a narrow band with no fill value)
    are written as the largest finite float so readers do not choke.
    """
    v = mesh.vertices
    if v.shape[1] == 2:
        v = np.column_stack([v, np.zeros(len(v))])
    s = mesh.simplices
    k = s.shape[1]
    cell_type = _TRIANGLE if k == 3 else _TETRA
    lines = ["# vtk DataFile Version 3.0", title.replace("\n", " ")[:255], "ASCII", "DATASET UNSTRUCTURED_GRID"]
    lines.append(f"POINTS {len(v)} double")
    lines.extend(" ".join(repr(float(x)) for x in row) for row in v)
    lines.append(f"CELLS {len(s)} {len(s) * (k + 1)}")
    lines.extend(f"{k} " + " ".join(str(int(i)) for i in row) for row in s)
    lines.append(f"CELL_TYPES {len(s)}")
    lines.extend([str(cell_type)] * len(s))
    if point_data:
        lines.append(f"POINT_DATA {len(v)}")
        for name, values in point_data.items():
            values = np.asarray(values, dtype=float).reshape(-1)
            if len(values) != len(v):
                raise ValueError(f"field {name!r} has {len(values)} values for {len(v)} vertices")
            values = np.nan_to_num(values, posinf=np.finfo(float).max, neginf=-np.finfo(float).max)
            lines.append(f"SCALARS {name.replace(' ', '_')} double 1")
            lines.append("LOOKUP_TABLE default")
            lines.extend(repr(float(x)) for x in values)
    return "\n".join(lines) + "\n"


def write_vtk(
    mesh: SimplicialMesh,
    path: str | os.PathLike,
    point_data: Mapping[str, np.ndarray] | None = None,
    title: str = "fmcollide",
) -> None:
    with open(path, "w") as fh:
        fh.write(dumps_vtk(mesh, point_data, title))
