"""Pivot tables of CA/RA over (nu, tau), marking cells that beat the baseline frontier."""
from __future__ import annotations

import warnings
from typing import Iterable

from .evaluation import ExperimentPoint, pareto_frontier

BASELINE_TAUS = (0.0, 1.0)


def _covered_step(p: tuple[float, float], frontier: list[tuple[float, float]]) -> bool:
    return any(ca >= p[0] and ra >= p[1] for ca, ra in frontier)


def _covered_linear(p: tuple[float, float], frontier: list[tuple[float, float]]) -> bool:
    """Weakly dominated by the piecewise-linear hull through the frontier points."""
    if _covered_step(p, frontier):
        return True
    pts = sorted(set(frontier))
    for (a1, r1), (a2, r2) in zip(pts, pts[1:]):
        if a1 <= p[0] <= a2 and a2 > a1:
            if p[1] <= r1 + (p[0] - a1) / (a2 - a1) * (r2 - r1) + 1e-12:
                return True
    return False


def marked_cells(rows: Iterable[dict], mode: str = "step") -> set[tuple[float, float]]:
    """``(nu, tau)`` of gated cells lying beyond the frontier of the ungated configurations.

    The baseline is every cell with tau in {0, 1}: the undefended model and
    the always-defended one. A gated cell (0 < tau < 1) is marked when no
    baseline frontier point is at least as good in both CA and RA. ``mode``
    picks how the frontier is interpolated between its points: ``step`` (no
    interpolation) or ``linear``.
    """
    rows = list(rows)
    if mode not in ("step", "linear"):
        raise ValueError(f"unknown mode {mode!r}")
    if not any(float(r["tau"]) == 1.0 for r in rows):
        warnings.warn("no tau=1.0 column; marking disabled", stacklevel=2)
        return set()
    base = [ExperimentPoint(float(r["ca"]), float(r["ra"])) for r in rows
            if float(r["tau"]) in BASELINE_TAUS]
    frontier = [(p.ca, p.ra) for p in pareto_frontier(base)]
    covered = _covered_step if mode == "step" else _covered_linear
    return {(float(r["nu"]), float(r["tau"])) for r in rows
            if float(r["tau"]) not in BASELINE_TAUS
            and not covered((float(r["ca"]), float(r["ra"])), frontier)}


def _num(v: float) -> str:
    return f"{v:g}"


def render_table(rows: Iterable[dict], mode: str = "step", marker: str = "*") -> str:
    """Rows are nu values, columns tau values, cells ``CA/RA``; marked cells get ``marker``."""
    rows = list(rows)
    if not rows:
        raise ValueError("no results to render")
    marks = marked_cells(rows, mode)
    nus = sorted({float(r["nu"]) for r in rows})
    taus = sorted({float(r["tau"]) for r in rows})
    cells = {(float(r["nu"]), float(r["tau"])): r for r in rows}
    header = ["nu \\ tau"] + [_num(t) for t in taus]
    body = []
    for nu in nus:
        line = [_num(nu)]
        for tau in taus:
            r = cells.get((nu, tau))
            if r is None:
                line.append("-")
                continue
            text = f"{float(r['ca']):.2f}/{float(r['ra']):.2f}"
            line.append(text + marker if (nu, tau) in marks else text)
        body.append(line)
    widths = [max(len(row[i]) for row in [header, *body]) for i in range(len(header))]
    fmt = lambda row: "  ".join(c.rjust(w) for c, w in zip(row, widths))
    return "\n".join([fmt(header), *map(fmt, body)]) + "\n"
