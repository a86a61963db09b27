"""CSV ingestion, JSON result documents and SVG envelope plots."""
from __future__ import annotations

import csv
import json
import math
import re
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any
from xml.sax.saxutils import escape

import numpy as np

from .envelope import GlobalTestResult
from .experiments import PowerEstimate
from .ks import KsResult
from .stats import GroupedSample

SCHEMA_VERSION = 1


class CsvError(ValueError):
    pass


def load_csv(path, value_col: str = "value", group_col: str = "group") -> GroupedSample:
    """Read a two-column view of a CSV file; groups are numbered by first appearance."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        for col in (value_col, group_col):
            if col not in header:
                raise CsvError(f"column {col!r} not found in {path} (have {header})")
        values, groups = [], []
        for row_no, row in enumerate(reader, start=1):
            raw = row[value_col]
            try:
                v = float(raw)
            except (TypeError, ValueError):
                raise CsvError(f"row {row_no} (line {row_no + 1}): cannot parse {raw!r} as a number") from None
            if not math.isfinite(v):
                raise CsvError(f"row {row_no} (line {row_no + 1}): value {raw!r} is not finite")
            values.append(v)
            groups.append(row[group_col])
    names = list(dict.fromkeys(groups))
    if len(names) < 2:
        raise CsvError(f"need at least two groups, found {len(names)}")
    index = {g: i for i, g in enumerate(names)}
    return GroupedSample(np.array(values), np.array([index[g] for g in groups]), len(names), tuple(names))


def load_iris() -> GroupedSample:
    """Sepal lengths of the three iris species (setosa, versicolor, virginica)."""
    ref = resources.files("envra") / "data" / "iris_sepal_length.csv"
    with resources.as_file(ref) as path:
        return load_csv(path, "sepal_length", "species")


# ---------------------------------------------------------------------------
# result documents
# ---------------------------------------------------------------------------

@dataclass
class BlockDoc:
    name: str
    kind: str
    groups: list[str]
    axis: str
    grid: list[float]
    lower: list[float]
    upper: list[float]
    observed: list[float]
    expected: list[float]
    outside: list[bool]

    def __post_init__(self):
        n = len(self.grid)
        for arr in (self.lower, self.upper, self.observed, self.expected, self.outside):
            if len(arr) != n:
                raise ValueError(f"block {self.name!r}: arrays must share the grid length")


@dataclass
class ResultDocument:
    statistic: str
    p_value: float
    alpha: float
    s: int | None
    tie_flag: bool
    groups: list[dict]
    blocks: list[BlockDoc]
    config: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)
    timing: dict | None = None
    schema_version: int = SCHEMA_VERSION

    def to_dict(self) -> dict:
        d = asdict(self)
        order = ["schema_version", "config", "statistic", "p_value", "alpha", "s", "tie_flag",
                 "groups", "blocks", "extra", "timing"]
        return {k: d[k] for k in order}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, allow_nan=False) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "ResultDocument":
        if d.get("schema_version") != SCHEMA_VERSION:
            raise ValueError(f"unsupported schema version {d.get('schema_version')!r}")
        d = dict(d)
        d["blocks"] = [BlockDoc(**b) for b in d["blocks"]]
        return cls(**d)

    @classmethod
    def from_json(cls, text: str) -> "ResultDocument":
        return cls.from_dict(json.loads(text))

    def write(self, outdir) -> Path:
        out = Path(outdir)
        out.mkdir(parents=True, exist_ok=True)
        path = out / "result.json"
        path.write_text(self.to_json(), encoding="utf-8")
        return path


def _floats(a) -> list[float]:
    return [float(v) for v in np.asarray(a, dtype=float)]


def _jsonable(obj: Any):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    return obj


def _groups(sample: GroupedSample) -> list[dict]:
    return [{"name": sample.group_name(l), "size": int(m)} for l, m in enumerate(sample.sizes)]


def document_from_result(result: GlobalTestResult, sample: GroupedSample, config=None) -> ResultDocument:
    blocks = []
    for env in result.envelopes:
        b = env.block
        blocks.append(BlockDoc(
            name=env.name, kind=b.kind, groups=[sample.group_name(l) for l in b.ids], axis=b.axis,
            grid=_floats(b.grid), lower=_floats(env.lower), upper=_floats(env.upper),
            observed=_floats(env.observed), expected=_floats(env.expected),
            outside=[bool(v) for v in env.outside]))
    return ResultDocument(result.statistic, float(result.p_value), float(result.alpha), int(result.s),
                          bool(result.tie_flag), _groups(sample), blocks, _jsonable(config or {}),
                          _jsonable(result.extra))


def document_from_ks(ks: KsResult, sample: GroupedSample, config=None) -> ResultDocument:
    """Asymptotic KS result with its constant band around the ECDF difference."""
    points = np.unique(sample.values)
    x, y = np.sort(sample.group(0)), np.sort(sample.group(1))
    diff = np.searchsorted(x, points, side="right") / x.size - np.searchsorted(y, points, side="right") / y.size
    h = ks.envelope_halfwidth
    outside = np.abs(diff) > h
    block = BlockDoc("ks", "ks", [], "x", _floats(points), [-h] * len(points), [h] * len(points),
                     _floats(diff), [0.0] * len(points), [bool(v) for v in outside])
    extra = {"d_stat": ks.d_stat, "m_factor": ks.m_factor, "c_alpha": ks.c_alpha,
             "envelope_halfwidth": h}
    return ResultDocument("ks", float(ks.p_value), float(ks.alpha), None, False, _groups(sample),
                          [block], _jsonable(config or {}), extra)


# ---------------------------------------------------------------------------
# power tables
# ---------------------------------------------------------------------------

POWER_FIELDS = ("test", "scenario", "N", "rejections", "replicates", "power", "half_ci")


def power_rows(estimates: list[PowerEstimate]) -> list[dict]:
    return [{"test": e.test, "scenario": e.scenario, "N": e.N, "rejections": e.rejections,
             "replicates": e.replicates, "power": e.power, "half_ci": e.half_ci} for e in estimates]


def write_power_tables(estimates: list[PowerEstimate], outdir, config=None) -> tuple[Path, Path]:
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    rows = power_rows(estimates)
    csv_path = out / "power.csv"
    with open(csv_path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=POWER_FIELDS, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in r.items()})
    json_path = out / "power.json"
    doc = {"schema_version": SCHEMA_VERSION, "config": _jsonable(config or {}), "rows": rows}
    json_path.write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")
    return csv_path, json_path


# ---------------------------------------------------------------------------
# SVG plots
# ---------------------------------------------------------------------------

W, H = 520, 340
LEFT, RIGHT, TOP, BOTTOM = 64, 16, 34, 46


def _ticks(lo: float, hi: float, n: int = 5) -> list[float]:
    if hi <= lo:
        return [lo]
    raw = (hi - lo) / (n - 1)
    mag = 10 ** math.floor(math.log10(raw))
    step = next(m * mag for m in (1, 2, 2.5, 5, 10) if m * mag >= raw)
    first = math.ceil(lo / step) * step
    out, v = [], first
    while v <= hi + 1e-9 * step:
        out.append(round(v, 12))
        v += step
    return out


def _fmt(v: float) -> str:
    return f"{v:.2f}"


def _safe(name: str) -> str:
    return re.sub(r"[^A-Za-z0-9_.-]+", "_", name)


def block_svg(block: BlockDoc, title: str) -> str:
    x = np.asarray(block.grid, dtype=float)
    series = [np.asarray(getattr(block, k), dtype=float) for k in ("lower", "upper", "observed", "expected")]
    lower, upper, observed, expected = series
    ylo = float(min(s.min() for s in series))
    yhi = float(max(s.max() for s in series))
    pad = 0.05 * (yhi - ylo) if yhi > ylo else max(abs(yhi), 1.0) * 0.05
    ylo, yhi = ylo - pad, yhi + pad
    xlo, xhi = float(x.min()), float(x.max())
    if xhi == xlo:
        xlo, xhi = xlo - 0.5, xhi + 0.5
    pw, ph = W - LEFT - RIGHT, H - TOP - BOTTOM

    def px(v):
        return LEFT + (v - xlo) / (xhi - xlo) * pw

    def py(v):
        return TOP + (yhi - v) / (yhi - ylo) * ph

    def pts(xs, ys):
        return " ".join(f"{_fmt(px(a))},{_fmt(py(b))}" for a, b in zip(xs, ys))

    axis_label = "tau" if block.axis == "tau" else "x"
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">',
        f'<rect x="0" y="0" width="{W}" height="{H}" fill="white"/>',
        f'<text x="{W / 2:.1f}" y="20" text-anchor="middle" font-family="sans-serif" font-size="13">'
        f'{escape(title)}</text>',
        f'<polygon class="band" fill="#c8c8c8" stroke="none" points="'
        f'{pts(x, upper)} {pts(x[::-1], lower[::-1])}"/>',
        f'<polyline class="expected" fill="none" stroke="black" stroke-width="1" '
        f'stroke-dasharray="5 4" points="{pts(x, expected)}"/>',
        f'<polyline class="observed" fill="none" stroke="black" stroke-width="1.5" '
        f'points="{pts(x, observed)}"/>',
    ]
    for xi, yi, out in zip(x, observed, block.outside):
        if out:
            parts.append(f'<circle class="outside" cx="{_fmt(px(xi))}" cy="{_fmt(py(yi))}" r="2.5" fill="red"/>')
    x0, y0 = LEFT, TOP + ph
    parts.append(f'<line class="axis" x1="{x0}" y1="{y0}" x2="{x0 + pw}" y2="{y0}" stroke="black"/>')
    parts.append(f'<line class="axis" x1="{x0}" y1="{TOP}" x2="{x0}" y2="{y0}" stroke="black"/>')
    for t in _ticks(xlo, xhi):
        tx = _fmt(px(t))
        parts.append(f'<line x1="{tx}" y1="{y0}" x2="{tx}" y2="{y0 + 4}" stroke="black"/>')
        parts.append(f'<text x="{tx}" y="{y0 + 16}" text-anchor="middle" font-family="sans-serif" '
                     f'font-size="10">{t:g}</text>')
    for t in _ticks(ylo, yhi):
        ty = _fmt(py(t))
        parts.append(f'<line x1="{x0 - 4}" y1="{ty}" x2="{x0}" y2="{ty}" stroke="black"/>')
        parts.append(f'<text x="{x0 - 6}" y="{ty}" text-anchor="end" dominant-baseline="middle" '
                     f'font-family="sans-serif" font-size="10">{t:g}</text>')
    parts.append(f'<text class="xlabel" x="{LEFT + pw / 2:.1f}" y="{H - 8}" text-anchor="middle" '
                 f'font-family="sans-serif" font-size="12">{axis_label}</text>')
    parts.append(f'<text class="ylabel" x="14" y="{TOP + ph / 2:.1f}" text-anchor="middle" '
                 f'font-family="sans-serif" font-size="12" transform="rotate(-90 14 {TOP + ph / 2:.1f})">'
                 f'{escape(block.kind)}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def emit_svg(doc: ResultDocument, outdir) -> list[Path]:
    """Write one ``plot-<block>.svg`` per envelope block."""
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for block in doc.blocks:
        title = f"{doc.statistic.upper()}: {block.name}  (p = {doc.p_value:.4g})"
        path = out / f"plot-{_safe(block.name)}.svg"
        path.write_text(block_svg(block, title), encoding="utf-8")
        paths.append(path)
    return paths
