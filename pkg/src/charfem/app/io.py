"""CSV series files, legacy-VTK field export, and the run config format."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from ..analysis import ErrorSeriesEntry
from ..errors import ConfigError, InvalidArgumentError
from ..fem import Field, PRESSURE

CSV_HEADER = "N,h,dt,E_H1_u,order,E_L2_p,order,E_L2inf_u,order,status"


def _fmt(x) -> str:
    return "" if x is None else f"{x:.6e}"


def export_csv(entries, orders, path) -> Path:
    """Write a convergence series with the fixed nine-column schema."""
    path = Path(path)
    rows = [CSV_HEADER]
    for i, e in enumerate(entries):
        cells = [str(e.N), f"{e.h:.6e}", f"{e.dt:.6e}"]
        for key in ErrorSeriesEntry.ERROR_KEYS:
            cells.append(_fmt(getattr(e, key)))
            seq = orders.get(key, []) if orders else []
            cells.append(_fmt(seq[i - 1]) if 0 < i <= len(seq) else "")
        cells.append(e.failed if e.failed else "ok")
        rows.append(",".join(cells))
    path.write_text("\n".join(rows) + "\n")
    return path


def read_series_csv(path):
    """Parse a file written by :func:`export_csv` back into entries/orders."""
    lines = Path(path).read_text().strip().splitlines()
    if not lines or lines[0] != CSV_HEADER:
        raise InvalidArgumentError(f"unexpected CSV header in {path}")
    entries = []
    orders = {key: [] for key in ErrorSeriesEntry.ERROR_KEYS}
    for line in lines[1:]:
        cells = line.split(",")
        if len(cells) != 10:
            raise InvalidArgumentError(f"malformed CSV row: {line!r}")
        status = cells[9]
        failed = None if status == "ok" else status

        def num(cell):
            return None if cell == "" else float(cell)

        entries.append(ErrorSeriesEntry(
            N=int(cells[0]), h=float(cells[1]), dt=float(cells[2]),
            e_u_h1=num(cells[3]), e_p_l2=num(cells[5]), e_u_l2=num(cells[7]),
            failed=failed))
        for key, cell in zip(ErrorSeriesEntry.ERROR_KEYS,
                             (cells[4], cells[6], cells[8])):
            if cell != "":
                orders[key].append(float(cell))
    return entries, orders


# -- VTK legacy ASCII ------------------------------------------------------------

def _write_vtk(path, title, points, cells, data_name, data, vectors):
    lines = ["# vtk DataFile Version 2.0", title[:255], "ASCII",
             "DATASET UNSTRUCTURED_GRID", f"POINTS {len(points)} double"]
    for x, y in points:
        lines.append(f"{x:.12g} {y:.12g} 0")
    lines.append(f"CELLS {len(cells)} {4 * len(cells)}")
    for a, b, c in cells:
        lines.append(f"3 {a} {b} {c}")
    lines.append(f"CELL_TYPES {len(cells)}")
    lines.extend(["5"] * len(cells))
    lines.append(f"POINT_DATA {len(points)}")
    if vectors:
        lines.append(f"VECTORS {data_name} double")
        for vx, vy in data:
            lines.append(f"{vx:.12g} {vy:.12g} 0")
    else:
        lines.append(f"SCALARS {data_name} double")
        lines.append("LOOKUP_TABLE default")
        for v in data:
            lines.append(f"{v:.12g}")
    Path(path).write_text("\n".join(lines) + "\n")
    return Path(path)


def _refined_viz(field: Field):
    """Velocity view on the once-refined P1 mesh (vertices + edge midpoints)."""
    space = field.space
    mesh = space.mesh
    nv = mesh.nv
    points = np.vstack([mesh.vertices, mesh.edge_midpoints()])
    ns = space.n_scalar
    vals = np.empty((len(points), 2))
    if space.pair.kind_code == 0:  # quadratic velocity is nodal at these points
        vals[:, 0] = field.coefs[:ns]
        vals[:, 1] = field.coefs[ns:]
    else:
        vals[:nv, 0] = field.coefs[:nv]
        vals[:nv, 1] = field.coefs[ns:ns + nv]
        # the bubble vanishes on edges, so midpoints carry the linear average
        ends = mesh.edges
        vals[nv:, 0] = 0.5 * (field.coefs[ends[:, 0]] + field.coefs[ends[:, 1]])
        vals[nv:, 1] = 0.5 * (field.coefs[ns + ends[:, 0]]
                              + field.coefs[ns + ends[:, 1]])
    cells = []
    for t in range(mesh.nt):
        v0, v1, v2 = mesh.triangles[t]
        m0, m1, m2 = mesh.tri_edges[t] + nv  # m_k opposite vertex k
        cells.extend([(v0, m2, m1), (v1, m0, m2), (v2, m1, m0), (m0, m1, m2)])
    return points, cells, vals


def export_vtk(field: Field, path, title: str = "charfem field") -> Path:
    """Legacy ASCII unstructured-grid export of one field.

    Pressure goes out on the mesh vertices; velocity on the once-refined
    P1 visualization mesh sampling vertices and edge midpoints.
    """
    try:
        if field.role == PRESSURE:
            mesh = field.space.mesh
            return _write_vtk(path, title, mesh.vertices, mesh.triangles,
                              "pressure", field.coefs, vectors=False)
        points, cells, vals = _refined_viz(field)
        return _write_vtk(path, title, points, cells, "velocity", vals,
                          vectors=True)
    except OSError as exc:
        raise OSError(f"cannot write VTK file {path}: {exc}") from exc


# -- flat key-value config -----------------------------------------------------

CONFIG_KEYS = {
    "problem": str, "scheme": str, "pair": str, "pattern": str,
    "nu": float, "T": float, "dt": float, "n": int,
    "strict_cfl": bool, "reproducible": bool, "out": str,
    "snapshot_times": str,
}


def parse_config_text(text: str) -> dict:
    """Flat ``key = value`` lines; '#' starts a comment."""
    out = {}
    for ln, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {ln}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in CONFIG_KEYS:
            raise ConfigError(f"line {ln}: unknown key {key!r}")
        typ = CONFIG_KEYS[key]
        try:
            if typ is bool:
                if value.lower() not in ("true", "false", "0", "1"):
                    raise ValueError(value)
                out[key] = value.lower() in ("true", "1")
            else:
                out[key] = typ(value)
        except ValueError:
            raise ConfigError(
                f"line {ln}: cannot parse {value!r} as {typ.__name__}") from None
    return out


def load_config(path) -> dict:
    return parse_config_text(Path(path).read_text())
