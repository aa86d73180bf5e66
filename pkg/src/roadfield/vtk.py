"""Legacy ASCII VTK output and byte-stable CSV writing."""
from __future__ import annotations

import numpy as np


def fmt(x) -> str:
    """17 significant digits for floats, plain text otherwise."""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (float, np.floating)):
        return format(float(x), ".17g")
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if x is None:
        return ""
    s = str(x)
    if any(c in s for c in ',"\n'):
        s = '"' + s.replace('"', '""') + '"'
    return s


def write_csv(path, header, rows) -> None:
    """Comma separated, LF line endings, floats with 17 significant digits."""
    with open(path, "w", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(fmt(v) for v in row) + "\n")


def vtk_text(mesh, v, u, title: str = "roadfield") -> str:
    """Unstructured grid with triangles, road segments as line cells, and
    point data ``v`` (field) and ``u`` (road value; zero off the road).

    ``v`` is indexed by mesh vertex and ``u`` by ``mesh.road_vertices``.
    """
    v = np.asarray(v, float)
    uu = np.zeros(mesh.n_vertices)
    uu[mesh.road_vertices] = np.asarray(u, float)
    n, nt, nr = mesh.n_vertices, mesh.n_triangles, len(mesh.road_edges)
    out = ["# vtk DataFile Version 3.0", title, "ASCII", "DATASET UNSTRUCTURED_GRID", f"POINTS {n} double"]
    out += [f"{fmt(x)} {fmt(y)} 0" for x, y in mesh.vertices]
    out.append(f"CELLS {nt + nr} {4 * nt + 3 * nr}")
    out += [f"3 {i} {j} {k}" for i, j, k in mesh.triangles]
    out += [f"2 {i} {j}" for i, j in mesh.road_edges]
    out.append(f"CELL_TYPES {nt + nr}")
    out += ["5"] * nt + ["3"] * nr
    out.append(f"POINT_DATA {n}")
    for name, data in (("v", v), ("u", uu)):
        out += [f"SCALARS {name} double 1", "LOOKUP_TABLE default"]
        out += [fmt(x) for x in data]
    return "\n".join(out) + "\n"


def write_vtk(path, mesh, v, u, title: str = "roadfield") -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write(vtk_text(mesh, v, u, title))
