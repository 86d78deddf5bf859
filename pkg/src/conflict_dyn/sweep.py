"""Basin grids, parameter sweeps and the CSV/SVG emitters used by the CLI."""
from __future__ import annotations

import csv
import io
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import TraceError
from .integrator import ConvergedToSink, Extinction, SimOptions, outcome_of
from .model import Constant, StructParams
from .separatrix import Region, SepOptions, classify_point, gamma0, trace_gamma

__all__ = [
    "CELL_E",
    "CELL_B",
    "CELL_M",
    "CELL_U",
    "BasinGrid",
    "SweepRow",
    "worker_count",
    "parallel_map",
    "basin_grid",
    "sweep",
    "format_float",
    "write_csv",
    "read_csv",
    "basin_svg",
    "curves_svg",
]

CELL_E = "E"
CELL_B = "B"
CELL_M = "M"
CELL_U = "U"


def worker_count():
    """Worker cap from ``CONFLICT_DYN_THREADS`` (default 1)."""
    raw = os.environ.get("CONFLICT_DYN_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        n = 1
    return max(1, n)


def parallel_map(fn, items, workers=None):
    """``[fn(x) for x in items]`` on a thread pool; output order follows ``items``."""
    items = list(items)
    workers = worker_count() if workers is None else workers
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, items))


@dataclass(frozen=True, eq=False)
class BasinGrid:
    """Cell labels on a regular grid of starts.

    Attributes
    ----------
    u, v : ndarray
        Grid abscissae (``nx``) and ordinates (``ny``).
    cells : ndarray of str, shape (ny, nx)
        ``E`` extinction, ``B`` sink, ``M`` wall band, ``U`` undecided.
    fallback : bool
        True when the wall could not be traced and every cell was simulated.
    """

    u: np.ndarray
    v: np.ndarray
    cells: np.ndarray
    a: float
    params: StructParams
    fallback: bool
    curve: object = None

    @property
    def shape(self):
        return self.cells.shape

    def fraction(self, label):
        return float(np.mean(self.cells == label))

    def rows(self):
        """Long-format rows ``(i, j, u, v, cell)`` with ``i`` along ``u``."""
        out = []
        for j, vv in enumerate(self.v):
            for i, uu in enumerate(self.u):
                out.append((i, j, float(uu), float(vv), str(self.cells[j, i])))
        return out


def _simulate_cell(u, v, a, p, sim):
    out = outcome_of((u, v), Constant(a), p, sim)
    if isinstance(out, Extinction):
        return CELL_E
    if isinstance(out, ConvergedToSink):
        return CELL_B
    return CELL_U


def basin_grid(
    a,
    p: StructParams,
    nx,
    ny,
    u_range=(0.0, 1.0),
    v_range=(0.0, 1.0),
    sim: SimOptions = SimOptions(),
    sep: SepOptions = SepOptions(),
    near_band=0.01,
    workers=None,
):
    """Classify a grid of starts for constant ``a``.

    Cells inside the unit square are located against the traced wall; cells
    within ``near_band`` of it, or outside the square, are simulated
    instead.  Cells within ``sep.curve_tol`` of the wall are labelled ``M``.
    If tracing fails every cell is simulated and ``fallback`` is set.
    """
    if nx < 1 or ny < 1:
        raise ValueError("grid needs nx >= 1 and ny >= 1")
    us = np.linspace(u_range[0], u_range[1], nx) if nx > 1 else np.array([float(u_range[0])])
    vs = np.linspace(v_range[0], v_range[1], ny) if ny > 1 else np.array([float(v_range[0])])
    try:
        curve = trace_gamma(a, p, sep)
    except TraceError:
        curve = None

    def row(j):
        v = float(vs[j])
        out = []
        for u in us:
            u = float(u)
            inside = 0.0 <= u <= 1.0 and 0.0 <= v <= 1.0
            if curve is None or not inside:
                out.append(_simulate_cell(u, v, a, p, sim))
                continue
            reg = classify_point((u, v), a, p, sep, curve=curve)
            if reg is Region.ON_M:
                out.append(CELL_M)
            elif 0.0 < u <= curve.u_M and abs(v - float(curve(u))) <= near_band:
                out.append(_simulate_cell(u, v, a, p, sim))
            else:
                out.append(CELL_E if reg is Region.IN_E else CELL_B)
        return out

    cells = np.array(parallel_map(row, range(ny), workers), dtype="<U1").reshape(ny, nx)
    return BasinGrid(us, vs, cells, float(a), p, curve is None, curve)


@dataclass(frozen=True)
class SweepRow:
    """One sweep point: E-area, band area, nesting against the previous point."""

    value: float
    e_area: float
    m_area: float
    undecided: float
    gained: float
    lost: float
    gamma0_area: float
    line_area: float
    probe: str
    fallback: bool


def _probe_label(probe, a, p, sim):
    if probe is None:
        return ""
    out = outcome_of(probe, Constant(a), p, sim)
    return out.label


def sweep(
    name,
    values,
    base: dict,
    nx,
    ny,
    sim: SimOptions = SimOptions(),
    sep: SepOptions = SepOptions(),
    probe=None,
    workers=None,
):
    """E-area and nesting of basin grids as one of ``a``, ``c``, ``rho`` varies.

    ``gained`` is the fraction of cells in ``E`` at this value but not at the
    previous one, ``lost`` the reverse.  The reference areas count cells
    below ``gamma_0`` and below ``u/c``.
    """
    if name not in ("a", "c", "rho"):
        raise ValueError("sweep parameter must be one of a, c, rho")
    values = [float(x) for x in values]
    rows = []
    prev = None
    for x in values:
        kw = dict(base)
        kw[name] = x
        p = StructParams(kw["c"], kw["rho"])
        g = basin_grid(kw["a"], p, nx, ny, sim=sim, sep=sep, workers=workers)
        e = g.cells == CELL_E
        U, V = np.meshgrid(g.u, g.v)
        below_g0 = float(np.mean(V < gamma0(U, p))) if p.c > 0 and p.rho > 0 else float("nan")
        below_line = float(np.mean(V < U / p.c)) if p.c > 0 else float("nan")
        gained = float(np.mean(e & ~prev)) if prev is not None else 0.0
        lost = float(np.mean(prev & ~e)) if prev is not None else 0.0
        rows.append(
            SweepRow(
                x,
                float(np.mean(e)),
                g.fraction(CELL_M),
                g.fraction(CELL_U),
                gained,
                lost,
                below_g0,
                below_line,
                _probe_label(probe, kw["a"], p, sim),
                g.fallback,
            )
        )
        prev = e
    return rows


# ---------------------------------------------------------------------------
# emitters


def format_float(x):
    return "%.17g" % x


def _cell(x):
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (float, np.floating)):
        return format_float(float(x))
    return str(x)


def write_csv(path_or_buf, header, rows):
    """Header plus rows; floats with 17 significant digits, ``\\n`` line ends."""
    own = isinstance(path_or_buf, (str, os.PathLike))
    fh = open(path_or_buf, "w", newline="") if own else path_or_buf
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_cell(x) for x in r])
    finally:
        if own:
            fh.close()


def read_csv(path_or_text):
    """Inverse of :func:`write_csv`: ``(header, rows)`` with rows as strings."""
    if isinstance(path_or_text, (str, os.PathLike)) and os.path.exists(path_or_text):
        with open(path_or_text, newline="") as fh:
            data = list(csv.reader(fh))
    else:
        data = list(csv.reader(io.StringIO(str(path_or_text))))
    return data[0], data[1:]


_COLORS = {CELL_E: "#7b3fa0", CELL_B: "#f2d64b", CELL_M: "#222222", CELL_U: "#bbbbbb"}


def _svg_open(w, h, title):
    return [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">',
        f"<title>{title}</title>",
    ]


def _polyline(xs, ys, size, pad, color, width=1.5):
    pts = " ".join(
        f"{pad + x * size:.3f},{pad + (1.0 - y) * size:.3f}"
        for x, y in zip(xs, ys)
        if np.isfinite(x) and np.isfinite(y)
    )
    return f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="{width}"/>'


def basin_svg(grid: BasinGrid, size=400, pad=20):
    """Heat map of the cells on ``[0, 1]^2`` with the traced wall overlaid."""
    ny, nx = grid.shape
    title = f"basin a={format_float(grid.a)} c={format_float(grid.params.c)} rho={format_float(grid.params.rho)}"
    if grid.fallback:
        title += " (simulated: wall trace failed)"
    out = _svg_open(size + 2 * pad, size + 2 * pad, title)
    cw = size / nx
    ch = size / ny
    for j in range(ny):
        for i in range(nx):
            x = pad + i * cw
            y = pad + (ny - 1 - j) * ch
            col = _COLORS.get(grid.cells[j, i], "#ffffff")
            out.append(f'<rect x="{x:.3f}" y="{y:.3f}" width="{cw:.3f}" height="{ch:.3f}" fill="{col}"/>')
    if grid.curve is not None:
        out.append(_polyline(grid.curve.u_samples, grid.curve.v_samples, size, pad, "#e03030", 2.0))
    out.append(f'<rect x="{pad}" y="{pad}" width="{size}" height="{size}" fill="none" stroke="#000"/>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def curves_svg(curves, title, size=400, pad=20):
    """Polylines ``[(u, v, color), ...]`` on the unit square."""
    out = _svg_open(size + 2 * pad, size + 2 * pad, title)
    out.append(f'<rect x="{pad}" y="{pad}" width="{size}" height="{size}" fill="none" stroke="#000"/>')
    for u, v, color in curves:
        out.append(_polyline(np.asarray(u), np.clip(np.asarray(v), 0.0, 1.0), size, pad, color))
    out.append("</svg>")
    return "\n".join(out) + "\n"
