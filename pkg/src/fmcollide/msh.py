"""Gmsh MSH 4.1 ASCII reader and writer.

Only linear simplices are accepted: points and lines in 2D, plus
triangles and tetrahedra.  The highest element dimension present defines
the mesh dimension; elements one dimension lower carry the boundary
markers, taken from the physical-group names of their entities.
"""

from __future__ import annotations

import os
from pathlib import Path

import numpy as np

from .mesh import SimplicialMesh

__all__ = ["MshError", "load_mesh", "loads_msh", "write_msh", "dumps_msh"]

# gmsh element type -> (dimension, node count)
_SUPPORTED = {15: (0, 1), 1: (1, 2), 2: (2, 3), 4: (3, 4)}
_NAMES = {
    3: "4-node quadrangle",
    5: "8-node hexahedron",
    6: "6-node prism",
    7: "5-node pyramid",
    8: "3-node second order line",
    9: "6-node second order triangle",
    10: "9-node second order quadrangle",
    11: "10-node second order tetrahedron",
}


class MshError(ValueError):
    """Malformed or unsupported MSH content; ``line`` is 1-based when known."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


class _Lines:
    def __init__(self, text: str):
        self.lines = text.splitlines()
        self.pos = 0

    def next(self) -> str:
        while self.pos < len(self.lines):
            line = self.lines[self.pos].strip()
            self.pos += 1
            if line:
                return line
        raise MshError("unexpected end of file", self.pos)

    @property
    def lineno(self) -> int:
        return self.pos

    def ints(self) -> list[int]:
        line = self.next()
        try:
            return [int(t) for t in line.split()]
        except ValueError:
            raise MshError(f"expected integers, got {line!r}", self.lineno) from None

    def numbers(self) -> list[float]:
        line = self.next()
        try:
            return [float(t) for t in line.split()]
        except ValueError:
            raise MshError(f"expected numbers, got {line!r}", self.lineno) from None

    def expect(self, tag: str):
        line = self.next()
        if line != tag:
            raise MshError(f"expected {tag}, got {line!r}", self.lineno)


def load_mesh(path: str | os.PathLike, format: str = "msh") -> SimplicialMesh:
    if format != "msh":
        raise MshError(f"unsupported mesh format {format!r}; only 'msh' is read")
    text = Path(path).read_text()
    return loads_msh(text)


def loads_msh(text: str) -> SimplicialMesh:
    src = _Lines(text)
    physical_names: dict[tuple[int, int], str] = {}
    entity_phys: dict[tuple[int, int], list[int]] = {}
    node_tags: list[int] = []
    node_xyz: list[list[float]] = []
    # (dim, entity tag, node tags of one element)
    elements: list[tuple[int, int, list[int], int]] = []
    seen_format = False
    while True:
        try:
            line = src.next()
        except MshError:
            break
        if line == "$MeshFormat":
            parts = src.next().split()
            if len(parts) < 3:
                raise MshError("malformed $MeshFormat header", src.lineno)
            if parts[0] != "4.1":
                raise MshError(f"unsupported MSH version {parts[0]}; need 4.1", src.lineno)
            if parts[1] != "0":
                raise MshError("binary MSH files are not supported", src.lineno)
            src.expect("$EndMeshFormat")
            seen_format = True
        elif line == "$PhysicalNames":
            (n,) = src.ints()
            for _ in range(n):
                raw = src.next()
                parts = raw.split(maxsplit=2)
                if len(parts) != 3 or not parts[2].startswith('"'):
                    raise MshError(f"malformed physical name {raw!r}", src.lineno)
                physical_names[(int(parts[0]), int(parts[1]))] = parts[2].strip().strip('"')
            src.expect("$EndPhysicalNames")
        elif line == "$Entities":
            counts = src.ints()
            if len(counts) != 4:
                raise MshError("$Entities header needs 4 counts", src.lineno)
            for dim, n in enumerate(counts):
                for _ in range(n):
                    vals = src.numbers()
                    tag = int(vals[0])
                    off = 4 if dim == 0 else 7
                    if len(vals) <= off:
                        raise MshError("truncated entity record", src.lineno)
                    nphys = int(vals[off])
                    entity_phys[(dim, tag)] = [int(t) for t in vals[off + 1 : off + 1 + nphys]]
            src.expect("$EndEntities")
        elif line == "$Nodes":
            head = src.ints()
            if len(head) != 4:
                raise MshError("$Nodes header needs 4 integers", src.lineno)
            for _ in range(head[0]):
                blk = src.ints()
                if len(blk) != 4:
                    raise MshError("malformed node block header", src.lineno)
                n = blk[3]
                if blk[2]:
                    raise MshError("parametric nodes are not supported", src.lineno)
                tags = [src.ints()[0] for _ in range(n)]
                for _ in range(n):
                    xyz = src.numbers()
                    if len(xyz) != 3:
                        raise MshError("node coordinates need 3 values", src.lineno)
                    node_xyz.append(xyz)
                node_tags.extend(tags)
            src.expect("$EndNodes")
        elif line == "$Elements":
            head = src.ints()
            if len(head) != 4:
                raise MshError("$Elements header needs 4 integers", src.lineno)
            for _ in range(head[0]):
                blk = src.ints()
                if len(blk) != 4:
                    raise MshError("malformed element block header", src.lineno)
                edim, etag, etype, n = blk
                if etype not in _SUPPORTED:
                    name = _NAMES.get(etype, f"type {etype}")
                    raise MshError(f"unsupported element type {etype} ({name})", src.lineno)
                nn = _SUPPORTED[etype][1]
                for _ in range(n):
                    vals = src.ints()
                    if len(vals) != nn + 1:
                        raise MshError(f"element needs {nn} nodes, got {len(vals) - 1}", src.lineno)
                    elements.append((edim, etag, vals[1:], src.lineno))
            src.expect("$EndElements")
        elif line.startswith("$"):
            # skip unknown sections
            end = "$End" + line[1:]
            while src.next() != end:
                pass
        else:
            raise MshError(f"unexpected content {line!r}", src.lineno)
    if not seen_format:
        raise MshError("missing $MeshFormat section")
    if not node_tags:
        raise MshError("no nodes")
    if not elements:
        raise MshError("no elements")

    tag_index = {t: i for i, t in enumerate(node_tags)}
    xyz = np.array(node_xyz, dtype=float)
    dim = max(e[0] for e in elements)
    if dim not in (2, 3):
        raise MshError(f"mesh dimension {dim} is not 2 or 3")
    if dim == 2 and np.any(np.abs(xyz[:, 2]) > 0):
        raise MshError("2D mesh has nonzero z coordinates")
    vertices = xyz[:, :dim]
    simplices = []
    facets = []
    facet_names = []
    for edim, etag, nodes, lineno in elements:
        try:
            idx = [tag_index[t] for t in nodes]
        except KeyError as exc:
            raise MshError(f"element references unknown node {exc.args[0]}", lineno) from None
        if edim == dim:
            simplices.append(idx)
        elif edim == dim - 1:
            phys = entity_phys.get((edim, etag))
            if phys is None:
                raise MshError(f"boundary element on undeclared entity ({edim}, {etag})", lineno)
            names = [physical_names.get((edim, p)) for p in phys]
            names = [n for n in names if n]
            if not names:
                raise MshError(f"boundary entity ({edim}, {etag}) has no physical name", lineno)
            facets.append(idx)
            facet_names.append(names[0])
    if not facets:
        raise MshError("no named boundary facets; add physical groups to the boundary")
    markers: list[str] = []
    for n in facet_names:
        if n not in markers:
            markers.append(n)
    fm = np.array([markers.index(n) for n in facet_names], dtype=np.int64)
    used = np.unique(np.array(simplices, dtype=np.int64))
    if len(used) != len(vertices):
        # drop orphan nodes (e.g. geometry points) and renumber
        remap = np.full(len(vertices), -1, dtype=np.int64)
        remap[used] = np.arange(len(used))
        facets_arr = remap[np.array(facets, dtype=np.int64)]
        if np.any(facets_arr < 0):
            raise MshError("boundary facet uses a node that belongs to no element")
        return SimplicialMesh(vertices[used], remap[np.array(simplices)], facets_arr, fm, tuple(markers))
    return SimplicialMesh(vertices, np.array(simplices), np.array(facets), fm, tuple(markers))


def dumps_msh(mesh: SimplicialMesh) -> str:
    """Serialize ``mesh``; output depends only on the mesh (deterministic)."""
    d = mesh.dim
    out = ["$MeshFormat", "4.1 0 8", "$EndMeshFormat"]
    names = list(mesh.markers)
    out.append("$PhysicalNames")
    out.append(str(len(names) + 1))
    for k, n in enumerate(names):
        out.append(f'{d - 1} {k + 1} "{n}"')
    out.append(f'{d} {len(names) + 1} "fluid"')
    out.append("$EndPhysicalNames")

    lo, hi = mesh.bounding_box()
    lo3 = np.zeros(3)
    hi3 = np.zeros(3)
    lo3[:d], hi3[:d] = lo, hi
    box = " ".join(_fmt(x) for x in (*lo3, *hi3))
    counts = [0, 0, 0, 0]
    counts[d - 1] = len(names)
    counts[d] = 1
    out.append("$Entities")
    out.append(" ".join(str(c) for c in counts))
    for k in range(len(names)):
        out.append(f"{k + 1} {box} 1 {k + 1} 0")
    bounding = " ".join(str(k + 1) for k in range(len(names)))
    out.append(f"1 {box} 1 {len(names) + 1} {len(names)} {bounding}".rstrip())
    out.append("$EndEntities")

    n = mesh.vertex_count
    out.append("$Nodes")
    out.append(f"1 {n} 1 {n}")
    out.append(f"{d} 1 0 {n}")
    out.extend(str(i + 1) for i in range(n))
    xyz = np.zeros((n, 3))
    xyz[:, :d] = mesh.vertices
    out.extend(" ".join(_fmt(x) for x in row) for row in xyz)
    out.append("$EndNodes")

    facet_type = {2: 1, 3: 2}[d]
    cell_type = {2: 2, 3: 4}[d]
    blocks = []
    tag = 1
    for k in range(len(names)):
        f = mesh.facets[mesh.facet_markers == k]
        rows = []
        for face in f:
            rows.append(f"{tag} " + " ".join(str(v + 1) for v in face))
            tag += 1
        blocks.append((d - 1, k + 1, facet_type, rows))
    rows = []
    for s in mesh.simplices:
        rows.append(f"{tag} " + " ".join(str(v + 1) for v in s))
        tag += 1
    blocks.append((d, 1, cell_type, rows))
    total = tag - 1
    out.append("$Elements")
    out.append(f"{len(blocks)} {total} 1 {total}")
    for edim, etag, etype, rows in blocks:
        out.append(f"{edim} {etag} {etype} {len(rows)}")
        out.extend(rows)
    out.append("$EndElements")
    return "\n".join(out) + "\n"


def write_msh(mesh: SimplicialMesh, path: str | os.PathLike) -> None:
    Path(path).write_text(dumps_msh(mesh))


def _fmt(x: float) -> str:
    return repr(float(x))
