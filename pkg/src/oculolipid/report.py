"""SVG figures and table exports.

Every renderer returns ``(svg_text, data)``: ``data`` is the JSON sidecar
holding the exact numbers drawn.  Markup is emitted by hand with a fixed
element order and fixed-precision coordinates so reruns are byte-identical.
Negative correlations are drawn red (class ``neg``), non-negative blue
(class ``pos``); an asterisk marks FDR-significant entries.
"""

import csv
import logging
import math
import os
from xml.sax.saxutils import escape, quoteattr

import numpy as np

from .cohort import LIPID_SUBCLASSES, SPECIAL_LIPIDS, summary_table
from .errors import BinTooSmall, EmptyNetwork, MissingCell
from .pipeline import ASSOCIATION_COLUMNS, fmt, significant_counts, top_associations, write_json

log = logging.getLogger(__name__)

RED = "#d62728"
BLUE = "#1f77b4"
GREY = "#7f7f7f"
_SUBCLASS_PALETTE = (
    "#8c564b", "#e377c2", "#bcbd22", "#17becf", "#9467bd", "#ff7f0e", "#2ca02c", "#aec7e8",
    "#ffbb78", "#98df8a", "#c5b0d5", "#c49c94", "#f7b6d2", "#dbdb8d", "#9edae5", "#393b79",
    "#637939", "#843c39", "#7b4173",
)
SUBCLASS_COLORS = {s: _SUBCLASS_PALETTE[i] for i, s in enumerate(
    list(LIPID_SUBCLASSES) + sorted(set(SPECIAL_LIPIDS.values())) + ["other"])}


def sign_class(r):
    return "neg" if r < 0 else "pos"


def sign_color(r):
    return RED if r < 0 else BLUE


def _c(v):
    """Coordinate formatting."""
    s = f"{v:.2f}".rstrip("0").rstrip(".")
    return "0" if s == "-0" else s


class Svg:
    def __init__(self, width, height, title):
        self.width, self.height = width, height
        self.parts = []
        self.text(width / 2, 22, title, cls="title", anchor="middle", size=15)

    def _attrs(self, cls, extra):
        out = f" class={quoteattr(cls)}" if cls else ""
        for k, v in extra.items():
            if v is not None:
                out += f" {k.replace('_', '-')}={quoteattr(str(v))}"
        return out

    def circle(self, x, y, r, cls="", fill=None, tip=None, **kw):
        attrs = self._attrs(cls, {"fill": fill, **kw})
        body = f"<title>{escape(tip)}</title>" if tip else ""
        if body:
            self.parts.append(f'<circle cx="{_c(x)}" cy="{_c(y)}" r="{_c(r)}"{attrs}>{body}</circle>')
        else:
            self.parts.append(f'<circle cx="{_c(x)}" cy="{_c(y)}" r="{_c(r)}"{attrs}/>')

    def line(self, x1, y1, x2, y2, cls="", stroke="#000000", width=1.0, **kw):
        attrs = self._attrs(cls, {"stroke": stroke, "stroke_width": _c(width), **kw})
        self.parts.append(f'<line x1="{_c(x1)}" y1="{_c(y1)}" x2="{_c(x2)}" y2="{_c(y2)}"{attrs}/>')

    def rect(self, x, y, w, h, cls="", fill="none", stroke=None, **kw):
        attrs = self._attrs(cls, {"fill": fill, "stroke": stroke, **kw})
        self.parts.append(f'<rect x="{_c(x)}" y="{_c(y)}" width="{_c(w)}" height="{_c(h)}"{attrs}/>')

    def polyline(self, pts, cls="", stroke="#000000", width=1.0, fill="none"):
        coords = " ".join(f"{_c(x)},{_c(y)}" for x, y in pts)
        attrs = self._attrs(cls, {"stroke": stroke, "stroke_width": _c(width), "fill": fill})
        self.parts.append(f'<polyline points="{coords}"{attrs}/>')

    def polygon(self, pts, cls="", fill="#cccccc", opacity=None):
        coords = " ".join(f"{_c(x)},{_c(y)}" for x, y in pts)
        attrs = self._attrs(cls, {"fill": fill, "fill_opacity": opacity})
        self.parts.append(f'<polygon points="{coords}"{attrs}/>')

    def text(self, x, y, s, cls="", anchor="start", size=11, fill=None, rotate=None):
        extra = {"text_anchor": anchor, "font_size": size, "fill": fill}
        if rotate is not None:
            extra["transform"] = f"rotate({_c(rotate)} {_c(x)} {_c(y)})"
        attrs = self._attrs(cls, extra)
        self.parts.append(f'<text x="{_c(x)}" y="{_c(y)}"{attrs}>{escape(str(s))}</text>')

    def render(self):
        head = ('<?xml version="1.0" encoding="UTF-8"?>\n'
                f'<svg xmlns="http://www.w3.org/2000/svg" width="{_c(self.width)}" '
                f'height="{_c(self.height)}" viewBox="0 0 {_c(self.width)} {_c(self.height)}" '
                'font-family="Helvetica, Arial, sans-serif">\n'
                f'<rect class="background" x="0" y="0" width="{_c(self.width)}" '
                f'height="{_c(self.height)}" fill="#ffffff"/>\n')
        return head + "\n".join(self.parts) + "\n</svg>\n"


def _num(x):
    """Round-trip a value through the display format, so sidecars hold what is drawn."""
    s = fmt(x)
    return None if s == "NA" else float(s)


def _lookup(result_set):
    table = {}
    for res, pa, sig in zip(result_set.results, result_set.p_adjusted, result_set.significant):
        table[(res.x_name, res.y_name)] = (res, float(pa), bool(sig))
    return table


# ---------------------------------------------------------------------------
# bubble grid


def render_bubble(result_set, fundus_list, lipid_list, max_radius=11.0, min_radius=1.5,
                  title="Partial correlations of lipid species with retinal features"):
    """Lipids as rows, fundus features as columns; radius linear in |r|."""
    if not fundus_list or not lipid_list:
        raise ValueError("bubble grid needs at least one fundus feature and one lipid")
    table = _lookup(result_set)
    cell = 2 * max_radius + 6
    left, top = 190, 60
    width = left + cell * len(fundus_list) + 40
    height = top + cell * len(lipid_list) + 170
    svg = Svg(width, height, title)
    cells, missing = [], []
    rs = [abs(table[(f, l)][0].r) for f in fundus_list for l in lipid_list if (f, l) in table]
    rmax = max(rs) if rs and max(rs) > 0 else 1.0
    for i, lipid in enumerate(lipid_list):
        y = top + cell * (i + 0.5)
        svg.text(left - 8, y + 4, lipid, cls="row-label", anchor="end", size=10)
        for j, feat in enumerate(fundus_list):
            x = left + cell * (j + 0.5)
            hit = table.get((feat, lipid))
            if hit is None:
                missing.append([feat, lipid])
                log.warning("%s", MissingCell(f"no result for ({feat}, {lipid})"))
                continue
            res, pa, sig = hit
            r = _num(res.r)
            radius = min_radius + (max_radius - min_radius) * abs(res.r) / rmax
            svg.circle(x, y, radius, cls=f"dot {sign_class(res.r)}", fill=sign_color(res.r),
                       tip=f"r = {fmt(res.r)}")
            if sig:
                svg.text(x + radius * 0.7, y - radius * 0.7, "*", cls="sig", anchor="middle", size=13,
                         fill=RED)
            cells.append({"fundus": feat, "lipid": lipid, "r": r, "p_adjusted": _num(pa),
                          "significant": sig, "radius": _num(radius)})
    base = top + cell * len(lipid_list) + 10
    for j, feat in enumerate(fundus_list):
        svg.text(left + cell * (j + 0.5), base, feat, cls="col-label", anchor="end", size=10, rotate=-50)
    ly = height - 24
    svg.circle(left, ly, max_radius * 0.6, cls="legend-dot neg", fill=RED)
    svg.text(left + 16, ly + 4, "negative", size=10)
    svg.circle(left + 90, ly, max_radius * 0.6, cls="legend-dot pos", fill=BLUE)
    svg.text(left + 106, ly + 4, "positive", size=10)
    svg.text(left + 180, ly + 4, "* FDR significant", size=10)
    data = {"kind": "bubble", "fundus": list(fundus_list), "lipids": list(lipid_list),
            "max_abs_r": _num(rmax), "cells": cells, "missing": missing}
    return svg.render(), data


# ---------------------------------------------------------------------------
# forest


def render_forest(top, title="Top significant fundus-lipid associations"):
    """One row per (result, p_adjusted) entry; rows are re-sorted by |r| descending."""
    rows = sorted(top, key=lambda t: (-abs(t[0].r), t[0].p, t[0].x_name, t[0].y_name))
    row_h, left, plot_w = 22, 360, 320
    height = 70 + row_h * max(len(rows), 1) + 50
    svg = Svg(left + plot_w + 170, height, title)
    lo = min([0.0] + [res.ci_lower for res, _ in rows])
    hi = max([0.0] + [res.ci_upper for res, _ in rows])
    span = (hi - lo) or 1.0
    lo, hi = lo - 0.05 * span, hi + 0.05 * span

    def xpos(v):
        return left + plot_w * (v - lo) / (hi - lo)

    y0, y1 = 50, 60 + row_h * len(rows)
    svg.line(xpos(0.0), y0, xpos(0.0), y1, cls="zero", stroke=GREY, stroke_dasharray="4,3")
    out = []
    for i, (res, pa) in enumerate(rows):
        y = 65 + row_h * i
        col = sign_color(res.r)
        svg.text(left - 10, y + 4, f"{res.x_name} ~ {res.y_name}", cls="row-label", anchor="end", size=10)
        svg.line(xpos(res.ci_lower), y, xpos(res.ci_upper), y, cls=f"whisker {sign_class(res.r)}",
                 stroke=col, width=1.5)
        svg.circle(xpos(res.r), y, 4, cls=f"point {sign_class(res.r)}", fill=col)
        svg.text(left + plot_w + 10, y + 4,
                 f"{fmt(res.r)} [{fmt(res.ci_lower)}, {fmt(res.ci_upper)}]", cls="value", size=10)
        out.append({"fundus": res.x_name, "lipid": res.y_name, "r": _num(res.r),
                    "ci_lower": _num(res.ci_lower), "ci_upper": _num(res.ci_upper),
                    "p": _num(res.p), "p_adjusted": _num(pa)})
    svg.line(left, y1, left + plot_w, y1, cls="axis")
    for v in (lo, 0.0, hi):
        svg.text(xpos(v), y1 + 16, fmt(round(v, 3)), cls="tick", anchor="middle", size=9)
    svg.text(left + plot_w / 2, y1 + 34, "partial r (95% CI)", anchor="middle", size=11)
    if not rows:
        svg.text(left + plot_w / 2, 70, "no significant associations", cls="placeholder",
                 anchor="middle", size=12)
    data = {"kind": "forest", "rows": out,
            "axis": {"min": _num(round(lo, 3)), "zero": 0.0, "max": _num(round(hi, 3))}}
    return svg.render(), data


# ---------------------------------------------------------------------------
# network


def render_network(network, title="Lipid species linked to retinal features"):
    """Fundus features left, lipids right; edges coloured by sign, lipids by subclass."""
    if not network.edges:
        return _network_placeholder(title, EmptyNetwork("no fundus feature passes the degree threshold"))
    row_h = 18
    n_rows = max(len(network.fundus_nodes), len(network.lipid_nodes))
    height = 80 + row_h * n_rows + 60
    xl, xr = 260, 620
    svg = Svg(900, height, title)
    yl = {name: 60 + row_h * (i + 0.5) * n_rows / max(len(network.fundus_nodes), 1)
          for i, (name, _) in enumerate(network.fundus_nodes)}
    yr = {name: 60 + row_h * (i + 0.5) for i, (name, _, _) in enumerate(network.lipid_nodes)}
    edges = []
    for e in network.edges:
        svg.line(xl, yl[e["source"]], xr, yr[e["target"]], cls=f"edge {sign_class(e['r'])}",
                 stroke=sign_color(e["r"]), width=0.5 + 12 * abs(e["r"]), stroke_opacity="0.6")
        edges.append({"source": e["source"], "target": e["target"], "r": _num(e["r"]),
                      "p_adjusted": _num(e["p_adjusted"]), "sign": e["sign"]})
    nodes = []
    for name, deg in network.fundus_nodes:
        svg.circle(xl, yl[name], 6, cls="node fundus", fill="#444444", tip=f"degree {deg}")
        svg.text(xl - 10, yl[name] + 4, f"{name} ({deg})", cls="node-label", anchor="end", size=10)
        nodes.append({"id": name, "side": "fundus", "subclass": None, "degree": deg})
    for name, sub, deg in network.lipid_nodes:
        svg.circle(xr, yr[name], 5, cls=f"node lipid subclass-{sub}",
                   fill=SUBCLASS_COLORS.get(sub, GREY), tip=f"degree {deg}")
        svg.text(xr + 10, yr[name] + 4, name, cls="node-label", size=10)
        nodes.append({"id": name, "side": "lipid", "subclass": sub, "degree": deg})
    ly = height - 40
    svg.line(40, ly, 70, ly, cls="legend-edge neg", stroke=RED, width=3)
    svg.text(76, ly + 4, "negative r", size=10)
    svg.line(160, ly, 190, ly, cls="legend-edge pos", stroke=BLUE, width=3)
    svg.text(196, ly + 4, "positive r", size=10)
    x = 300
    for sub in sorted({s for _, s, _ in network.lipid_nodes}):
        svg.circle(x, ly, 5, cls=f"legend-node subclass-{sub}", fill=SUBCLASS_COLORS.get(sub, GREY))
        svg.text(x + 8, ly + 4, sub, size=10)
        x += 16 + 7 * len(sub)
    return svg.render(), {"kind": "network", "empty": False, "nodes": nodes, "edges": edges}


def _network_placeholder(title, exc):
    svg = Svg(600, 140, title)
    svg.text(300, 80, str(exc), cls="placeholder", anchor="middle", size=13, fill=GREY)
    return svg.render(), {"kind": "network", "empty": True, "message": str(exc),
                          "nodes": [], "edges": []}


# ---------------------------------------------------------------------------
# count bars


def render_count_bars(result_set, features=None, title="Significant lipid partners per retinal feature"):
    counts = significant_counts(result_set, features)
    bar_h, left, plot_w = 20, 260, 400
    height = 60 + bar_h * max(len(counts), 1) + 40
    svg = Svg(left + plot_w + 80, height, title)
    top = max([c for _, c in counts] + [1])
    bars = []
    for i, (name, c) in enumerate(counts):
        y = 50 + bar_h * i
        svg.text(left - 8, y + bar_h * 0.65, name, cls="row-label", anchor="end", size=10)
        svg.rect(left, y + 3, plot_w * c / top, bar_h - 6, cls="bar", fill="#4c72b0")
        svg.text(left + plot_w * c / top + 6, y + bar_h * 0.65, str(c), cls="value", size=10)
        bars.append({"feature": name, "count": c})
    return svg.render(), {"kind": "count_bars", "bars": bars, "total": sum(c for _, c in counts)}


# ---------------------------------------------------------------------------
# demographic panels


def quantiles(values, probs):
    """Linear interpolation between order statistics."""
    return np.percentile(np.asarray(values, dtype=np.float64), np.asarray(probs) * 100.0,
                         method="linear")


def box_summary(values):
    v = np.sort(np.asarray(values, dtype=np.float64))
    v = v[~np.isnan(v)]
    q1, med, q3 = quantiles(v, [0.25, 0.5, 0.75])
    iqr = q3 - q1
    inside = v[(v >= q1 - 1.5 * iqr) & (v <= q3 + 1.5 * iqr)]
    return {"q1": float(q1), "median": float(med), "q3": float(q3),
            "whisker_low": float(inside.min()), "whisker_high": float(inside.max()),
            "n": int(len(v)), "n_outliers": int(len(v) - len(inside))}


def age_bins(age, width=5.0, min_rows=20):
    """Half-open age bins of ``width`` years, merging bins with fewer than ``min_rows`` rows.

    Sparse bins are absorbed into the following bin (the last one into its
    predecessor).  Returns ``[(lo, hi, row_mask)]`` and the list of merges.
    """
    age = np.asarray(age, dtype=np.float64)
    ok = ~np.isnan(age)
    if ok.sum() < min_rows:
        raise BinTooSmall(f"only {int(ok.sum())} rows with age; need {min_rows} for one bin")
    edges = np.arange(math.floor(age[ok].min() / width) * width,
                      math.floor(age[ok].max() / width) * width + 2 * width, width)
    raw = []
    for lo, hi in zip(edges[:-1], edges[1:]):
        m = ok & (age >= lo) & (age < hi)
        if m.any():
            raw.append([float(lo), float(hi), m])
    bins, merges, pending = [], [], None
    for lo, hi, m in raw:
        if pending is not None:
            merges.append(f"{fmt(pending[0])}-{fmt(pending[1])} into {fmt(lo)}-{fmt(hi)}")
            lo, m = pending[0], pending[2] | m
            pending = None
        if m.sum() < min_rows:
            pending = [lo, hi, m]
        else:
            bins.append([lo, hi, m])
    if pending is not None:
        prev = bins[-1]
        merges.append(f"{fmt(pending[0])}-{fmt(pending[1])} into {fmt(prev[0])}-{fmt(prev[1])}")
        prev[1], prev[2] = pending[1], prev[2] | pending[2]
    for note in merges:
        log.info("age bin merged: %s", note)
    return [tuple(b) for b in bins], merges


def silverman_kde(values, grid):
    v = np.asarray(values, dtype=np.float64)
    v = v[~np.isnan(v)]
    n = len(v)
    sd = np.std(v, ddof=1)
    iqr = np.subtract(*np.percentile(v, [75, 25]))
    spread = min(sd, iqr / 1.34) if iqr > 0 else sd
    bw = 0.9 * spread * n ** (-0.2)
    if bw <= 0:
        return np.zeros_like(grid), 0.0
    z = (np.asarray(grid)[:, None] - v[None, :]) / bw
    dens = np.exp(-0.5 * z * z).sum(axis=1) / (n * bw * math.sqrt(2 * math.pi))
    return dens, float(bw)


def annotation(result, p_adjusted):
    return f"r = {fmt(result.r)} [{fmt(result.ci_lower)}, {fmt(result.ci_upper)}], q = {fmt(p_adjusted)}"


def render_demographic_panels(profile, cohort, features=None, kde=False,
                              title="Retinal features by age and sex"):
    """Per feature: age-bin percentile band (10/50/90) and sex-split boxes."""
    features = list(features or profile.features)
    frame = cohort.frame
    age = frame["age"].to_numpy(dtype=np.float64)
    sex = frame["sex"].to_numpy(dtype=np.float64)
    bins, merges = age_bins(age)
    idx = {f: i for i, f in enumerate(profile.features)}
    pw, ph, cols = 520, 170, 2
    n_rows = math.ceil(len(features) / cols)
    svg = Svg(pw * cols + 40, 50 + ph * n_rows + 20, title)
    panels = []
    for k, feat in enumerate(features):
        ox = 20 + pw * (k % cols)
        oy = 45 + ph * (k // cols)
        v = frame[feat].to_numpy(dtype=np.float64)
        res = profile.age_results[idx[feat]]
        pa = float(profile.age_p_adjusted[idx[feat]])
        sres = profile.sex_results[idx[feat]]
        spa = float(profile.sex_p_adjusted[idx[feat]])
        finite = v[~np.isnan(v)]
        vlo, vhi = (float(finite.min()), float(finite.max())) if len(finite) else (0.0, 1.0)
        if vhi == vlo:
            vhi = vlo + 1.0

        def ypos(val):
            return oy + 130 - 100 * (val - vlo) / (vhi - vlo)

        svg.text(ox, oy + 12, feat, cls="panel-title", size=12)
        # age band
        a_lo, a_hi = bins[0][0], bins[-1][1]
        band = []
        for lo, hi, m in bins:
            vals = v[m & ~np.isnan(v)]
            if len(vals) == 0:
                continue
            p10, p50, p90 = quantiles(vals, [0.1, 0.5, 0.9])
            band.append({"age_lo": _num(lo), "age_hi": _num(hi), "n": int(len(vals)),
                         "p10": _num(p10), "p50": _num(p50), "p90": _num(p90)})

        def xage(a):
            return ox + 10 + 220 * (a - a_lo) / ((a_hi - a_lo) or 1.0)

        mids = [(b["age_lo"] + b["age_hi"]) / 2 for b in band]
        if band:
            upper = [(xage(m), ypos(b["p90"])) for m, b in zip(mids, band)]
            lower = [(xage(m), ypos(b["p10"])) for m, b in zip(mids, band)]
            svg.polygon(upper + lower[::-1], cls="band", fill="#9ecae1", opacity="0.6")
            svg.polyline([(xage(m), ypos(b["p50"])) for m, b in zip(mids, band)], cls="median",
                         stroke="#08519c", width=1.5)
        svg.line(xage(a_lo), oy + 135, xage(a_hi), oy + 135, cls="axis")
        svg.text(xage(a_lo), oy + 148, fmt(a_lo), cls="tick", anchor="middle", size=9)
        svg.text(xage(a_hi), oy + 148, fmt(a_hi), cls="tick", anchor="middle", size=9)
        svg.text(ox + 10, oy + 162, annotation(res, pa), cls="annotation", size=9)
        # sex boxes
        boxes = {}
        for j, (label, code) in enumerate((("Male", 0.0), ("Female", 1.0))):
            vals = v[(sex == code) & ~np.isnan(v)]
            if len(vals) == 0:
                continue
            b = box_summary(vals)
            cx = ox + 300 + 90 * j
            col = "#6baed6" if code == 0.0 else "#fc9272"
            svg.line(cx, ypos(b["whisker_low"]), cx, ypos(b["q1"]), cls="whisker")
            svg.line(cx, ypos(b["q3"]), cx, ypos(b["whisker_high"]), cls="whisker")
            svg.rect(cx - 18, ypos(b["q3"]), 36, max(ypos(b["q1"]) - ypos(b["q3"]), 0.5), cls="box",
                     fill=col, stroke="#333333")
            svg.line(cx - 18, ypos(b["median"]), cx + 18, ypos(b["median"]), cls="box-median", width=2)
            svg.text(cx, oy + 148, label, cls="tick", anchor="middle", size=9)
            entry = {key: (_num(val) if isinstance(val, float) else val) for key, val in b.items()}
            if kde and len(vals) > 1:
                grid = np.linspace(vlo, vhi, 64)
                dens, bw = silverman_kde(vals, grid)
                scale = 30.0 / dens.max() if dens.max() > 0 else 0.0
                svg.polyline([(cx + 22 + scale * d, ypos(g)) for g, d in zip(grid, dens)], cls="kde",
                             stroke=col, width=1.2)
                entry["kde_bandwidth"] = _num(bw)
            boxes[label] = entry
        svg.text(ox + 290, oy + 162, f"sex: r = {fmt(sres.r)}, q = {fmt(spa)}", cls="annotation", size=9)
        panels.append({"feature": feat, "age_band": band, "boxes": boxes,
                       "age": {"r": _num(res.r), "ci_lower": _num(res.ci_lower),
                               "ci_upper": _num(res.ci_upper), "p_adjusted": _num(pa)},
                       "sex": {"r": _num(sres.r), "p_adjusted": _num(spa)},
                       "retained": feat in profile.retained})
    data = {"kind": "demographic_panels", "age_bins": [[_num(lo), _num(hi)] for lo, hi, _ in bins],
            "merged_bins": merges, "panels": panels}
    return svg.render(), data


# ---------------------------------------------------------------------------
# selection helpers and writer


def bubble_axes(result_set, n_fundus=10, n_lipids=30):
    """Default grid: features with the most significant partners, then their strongest lipids."""
    feats = [f for f, _ in significant_counts(result_set)][:n_fundus]
    best = {}
    for res, pa in zip(result_set.results, result_set.p_adjusted):
        if res.x_name in feats:
            key = (float(pa), -abs(res.r))
            if res.y_name not in best or key < best[res.y_name]:
                best[res.y_name] = key
    lipids = sorted(best, key=lambda n: (best[n], n))[:n_lipids]
    return feats, lipids


def write_svg(text, data, path_stem):
    with open(path_stem + ".svg", "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    write_json(data, path_stem + ".json")
    return [path_stem + ".svg", path_stem + ".json"]


def write_significant_table(result_set, path):
    rows = sorted(result_set.significant_results(),
                  key=lambda t: (-abs(t[0].r), t[0].p, t[0].x_name, t[0].y_name))
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(ASSOCIATION_COLUMNS)
        for res, pa in rows:
            w.writerow([res.x_name, res.y_name, fmt(res.r), fmt(res.ci_lower), fmt(res.ci_upper),
                        fmt(res.p), fmt(pa), fmt(res.n_used)])


def write_summary_table(frame, path, columns=None):
    table = summary_table(frame, columns)
    table.to_csv(path, index=False, na_rep="NA", lineterminator="\n", float_format="%.6g")


def write_report(out_dir, result_set, network, profile, cohort, top_k=20, kde=False):
    """All figures plus the two tables; returns the written paths."""
    fig_dir = os.path.join(out_dir, "figures")
    tab_dir = os.path.join(out_dir, "tables")
    os.makedirs(fig_dir, exist_ok=True)
    os.makedirs(tab_dir, exist_ok=True)
    written = []
    feats, lipids = bubble_axes(result_set)
    if not feats or not lipids:
        feats = sorted({r.x_name for r in result_set.results})[:10]
        lipids = sorted({r.y_name for r in result_set.results})[:30]
    if feats and lipids:
        written += write_svg(*render_bubble(result_set, feats, lipids), os.path.join(fig_dir, "bubble"))
    written += write_svg(*render_forest(top_associations(result_set, top_k)), os.path.join(fig_dir, "forest"))
    written += write_svg(*render_network(network), os.path.join(fig_dir, "network"))
    written += write_svg(*render_count_bars(result_set, cohort.fundus_features),
                         os.path.join(fig_dir, "count_bars"))
    written += write_svg(*render_demographic_panels(profile, cohort, kde=kde),
                         os.path.join(fig_dir, "demographics"))
    assoc = os.path.join(tab_dir, "associations.csv")
    write_significant_table(result_set, assoc)
    summary = os.path.join(tab_dir, "summary_table1.csv")
    write_summary_table(cohort.frame, summary, ["age", *cohort.fundus_features])
    return written + [assoc, summary]
