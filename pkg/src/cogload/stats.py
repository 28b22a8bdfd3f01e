"""Statistical batteries: Kruskal-Wallis, chi-square independence with
Cramer's V and Phi, Tukey HSD post-hoc, frequency ratios, and quantized load
trends.

No statistics dependency is assumed: chi-square p-values come from a
regularized incomplete gamma implementation (series + continued fraction,
documented target |err| < 1e-10) and Tukey p-values from the studentized
range distribution evaluated by composite Gauss-Legendre double integration
(target |err| < 1e-4).
"""

from __future__ import annotations

import dataclasses
import functools
import math
from typing import Mapping, Sequence

from .evaluation import LengthMismatch
from .labels import DIFFICULTY_VALUE, LoadLabel


class EmptyGroup(Exception):
    pass


class ZeroMarginal(Exception):
    pass


class GroupTooSmall(Exception):
    pass


class NoParticipants(Exception):
    pass


# ---------------------------------------------------------------- special fns

_EPS = 1e-15
_ITMAX = 800


def _gamma_series(a: float, x: float) -> float:
    """Lower regularized incomplete gamma P(a, x) by power series (x < a+1)."""
    gln = math.lgamma(a)
    ap = a
    term = 1.0 / a
    total = term
    for _ in range(_ITMAX):
        ap += 1.0
        term *= x / ap
        total += term
        if abs(term) < abs(total) * _EPS:
            break
    return total * math.exp(-x + a * math.log(x) - gln)


def _gamma_cf(a: float, x: float) -> float:
    """Upper regularized incomplete gamma Q(a, x) by continued fraction
    (modified Lentz), for x >= a+1."""
    gln = math.lgamma(a)
    tiny = 1e-300
    b = x + 1.0 - a
    c = 1.0 / tiny
    d = 1.0 / b if b != 0.0 else 1.0 / tiny
    h = d
    for i in range(1, _ITMAX + 1):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < tiny:
            d = tiny
        c = b + an / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            break
    return math.exp(-x + a * math.log(x) - gln) * h


def gamma_q(a: float, x: float) -> float:
    """Regularized upper incomplete gamma Q(a, x), |err| < 1e-10."""
    if a <= 0:
        raise ValueError("a must be positive")
    if x < 0:
        raise ValueError("x must be non-negative")
    if x == 0.0:
        return 1.0
    if x < a + 1.0:
        return 1.0 - _gamma_series(a, x)
    return _gamma_cf(a, x)


def chi2_sf(x: float, df: int) -> float:
    """Chi-square survival function P(X > x)."""
    if df < 1:
        raise ValueError("df must be >= 1")
    return gamma_q(df / 2.0, x / 2.0)


def _norm_pdf(z: float) -> float:
    return math.exp(-0.5 * z * z) / math.sqrt(2.0 * math.pi)


def _norm_cdf(z: float) -> float:
    return 0.5 * (1.0 + math.erf(z / math.sqrt(2.0)))


@functools.lru_cache(maxsize=8)
def _gl_nodes(npts: int) -> tuple[tuple[float, ...], tuple[float, ...]]:
    import numpy as np

    x, w = np.polynomial.legendre.leggauss(npts)
    return tuple(float(v) for v in x), tuple(float(v) for v in w)


def _composite_gl(lo: float, hi: float, panels: int, npts: int = 10):
    """(node, weight) pairs for composite Gauss-Legendre on [lo, hi]."""
    xs, ws = _gl_nodes(npts)
    step = (hi - lo) / panels
    out = []
    for p in range(panels):
        a = lo + p * step
        half = 0.5 * step
        mid = a + half
        for x, w in zip(xs, ws):
            out.append((mid + half * x, w * half))
    return out


def _range_cdf_z(w: float, k: int) -> float:
    """P(range of k iid standard normals <= w)."""
    if w <= 0.0:
        return 0.0
    total = 0.0
    for z, wt in _composite_gl(-9.0, 9.0, 36):
        total += wt * _norm_pdf(z) * (_norm_cdf(z) - _norm_cdf(z - w)) ** (k - 1)
    return min(1.0, k * total)


def studentized_range_cdf(q: float, k: int, df: int) -> float:
    """CDF of the studentized range with k groups and df error degrees of
    freedom, by integrating the range CDF against the distribution of
    s = sqrt(chi2_df / df).  Target |err| < 1e-4."""
    if k < 2:
        raise ValueError("k must be >= 2")
    if df < 1:
        raise ValueError("df must be >= 1")
    if q <= 0.0:
        return 0.0
    if df > 5000:
        return _range_cdf_z(q, k)
    lc = math.log(2.0) + 0.5 * df * math.log(df / 2.0) - math.lgamma(df / 2.0)
    spread = 12.0 / math.sqrt(df)
    lo = max(0.0, 1.0 - spread)
    hi = 1.0 + spread
    total = 0.0
    for s, wt in _composite_gl(lo, hi, 40):
        if s <= 0.0:
            continue
        f = math.exp(lc + (df - 1.0) * math.log(s) - 0.5 * df * s * s)
        total += wt * f * _range_cdf_z(q * s, k)
    return min(1.0, total)


# ------------------------------------------------------------------- results


@dataclasses.dataclass
class KruskalResult:
    h_statistic: float
    df: int
    p_value: float

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


@dataclasses.dataclass
class ChiSquareResult:
    chi2: float
    df: int
    p_value: float
    n: int
    cramers_v: float
    phi: float

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


@dataclasses.dataclass
class TukeyResult:
    names: list[str]
    means: list[float]
    group_sizes: list[int]
    mse: float
    df_error: int
    difference: list[list[float]]  # difference[i][j] = mean_i - mean_j
    q: list[list[float]]
    p_value: list[list[float]]
    stars: list[list[str]]         # significance bucket: "", "*", "**", "***"

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


@dataclasses.dataclass
class TrendResult:
    per_tick_mean: list[float]
    overall_mean: float
    n_participants: int
    n_ticks: int

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


# ---------------------------------------------------------------------- tests


def kruskal_wallis(groups: Sequence[Sequence[float]]) -> KruskalResult:
    """Rank-based H test with midrank ties and tie correction
    1 - sum(t^3 - t) / (N^3 - N); p from the chi-square survival function."""
    if len(groups) < 2:
        raise ValueError("need at least 2 groups")
    gs = [[float(v) for v in g] for g in groups]
    for i, g in enumerate(gs):
        if not g:
            raise EmptyGroup(f"group {i} is empty")
    pooled = []
    for gi, g in enumerate(gs):
        for v in g:
            pooled.append((v, gi))
    n = len(pooled)
    if n < 5:
        raise ValueError("need total N >= 5")
    pooled.sort(key=lambda t: t[0])

    rank_sum = [0.0] * len(gs)
    tie_sum = 0.0
    i = 0
    while i < n:
        j = i
        while j < n and pooled[j][0] == pooled[i][0]:
            j += 1
        midrank = (i + 1 + j) / 2.0
        for q in range(i, j):
            rank_sum[pooled[q][1]] += midrank
        t = j - i
        tie_sum += t ** 3 - t
        i = j

    h = 0.0
    for gi, g in enumerate(gs):
        ni = len(g)
        rbar = rank_sum[gi] / ni
        h += ni * (rbar - (n + 1) / 2.0) ** 2
    h *= 12.0 / (n * (n + 1))
    correction = 1.0 - tie_sum / (n ** 3 - n)
    if correction <= 0.0:
        h = 0.0  # every value identical: no rank variance
    else:
        h /= correction
    df = len(gs) - 1
    return KruskalResult(h, df, chi2_sf(h, df))


def cramers_v(chi2: float, n: int, n_rows: int, n_cols: int) -> float:
    k = min(n_rows, n_cols) - 1
    if k < 1 or n < 1:
        raise ValueError("need an at least 2x2 table and n >= 1")
    return math.sqrt(chi2 / (n * k))


def phi_coefficient(chi2: float, n: int) -> float:
    if n < 1:
        raise ValueError("n must be >= 1")
    return math.sqrt(chi2 / n)


def chi_square_independence(table: Sequence[Sequence[int]]) -> ChiSquareResult:
    rows = [[int(v) for v in r] for r in table]
    r = len(rows)
    if r < 2 or len(rows[0]) < 2:
        raise ValueError("need an at least 2x2 table")
    c = len(rows[0])
    for row in rows:
        if len(row) != c:
            raise ValueError("ragged table")
        for v in row:
            if v < 0:
                raise ValueError("counts must be non-negative")
    row_sum = [sum(row) for row in rows]
    col_sum = [sum(rows[i][j] for i in range(r)) for j in range(c)]
    if any(v == 0 for v in row_sum) or any(v == 0 for v in col_sum):
        raise ZeroMarginal("every row and column sum must be positive")
    n = sum(row_sum)

    chi2 = 0.0
    for i in range(r):
        for j in range(c):
            e = row_sum[i] * col_sum[j] / n
            d = rows[i][j] - e
            chi2 += d * d / e
    df = (r - 1) * (c - 1)
    return ChiSquareResult(chi2, df, chi2_sf(chi2, df), n,
                           cramers_v(chi2, n, r, c), phi_coefficient(chi2, n))


def tukey_hsd(groups: Mapping[str, Sequence[float]],
              alpha_levels: Sequence[float] = (0.05, 0.01, 0.001)) -> TukeyResult:
    """All-pairs Tukey-Kramer comparison: q = |mean_i - mean_j| /
    sqrt(MSE/2 * (1/n_i + 1/n_j)) with MSE the one-way ANOVA within-group
    variance; p from the studentized range distribution."""
    names = list(groups.keys())
    k = len(names)
    if k < 2:
        raise ValueError("need at least 2 groups")
    values = [[float(v) for v in groups[name]] for name in names]
    sizes = [len(v) for v in values]
    for name, sz in zip(names, sizes):
        if sz < 2:
            raise GroupTooSmall(f"group {name!r} needs >= 2 values")
    means = [sum(v) / len(v) for v in values]
    n_total = sum(sizes)
    df_error = n_total - k
    sse = 0.0
    for vals, mu in zip(values, means):
        for v in vals:
            d = v - mu
            sse += d * d
    mse = sse / df_error

    levels = sorted(alpha_levels, reverse=True)  # loosest first
    diff = [[0.0] * k for _ in range(k)]
    qmat = [[0.0] * k for _ in range(k)]
    pmat = [[1.0] * k for _ in range(k)]
    stars = [[""] * k for _ in range(k)]
    for i in range(k):
        for j in range(k):
            if i == j:
                continue
            d = means[i] - means[j]
            diff[i][j] = d
            if mse > 0.0:
                se = math.sqrt(mse / 2.0 * (1.0 / sizes[i] + 1.0 / sizes[j]))
                q = abs(d) / se
            else:
                q = 0.0 if d == 0.0 else math.inf
            qmat[i][j] = q
            if math.isinf(q):
                p = 0.0
            else:
                p = max(0.0, 1.0 - studentized_range_cdf(q, k, df_error))
            pmat[i][j] = p
            stars[i][j] = "*" * sum(1 for a in levels if p < a)
    return TukeyResult(names, means, sizes, mse, df_error, diff, qmat, pmat, stars)


def frequency_ratios(predicted: Sequence, difficulty: Sequence[str]) -> dict[str, dict[str, float]]:
    """Per difficulty group, the percentage of ticks at each load label.
    Groups appear in first-appearance order; percentages sum to 100."""
    if len(predicted) != len(difficulty):
        raise LengthMismatch(f"{len(predicted)} predictions vs {len(difficulty)} difficulties")
    order: list[str] = []
    counts: dict[str, dict[LoadLabel, int]] = {}
    for lab, diff in zip(predicted, difficulty):
        lab = LoadLabel(int(lab))
        if diff not in counts:
            counts[diff] = {b: 0 for b in LoadLabel}
            order.append(diff)
        counts[diff][lab] += 1
    out = {}
    for diff in order:
        total = sum(counts[diff].values())
        out[diff] = {lab.display: 100.0 * counts[diff][lab] / total for lab in LoadLabel}
    return out


def load_trend(labels_by_participant: Mapping[str, Sequence],
               quantification: Mapping | None = None) -> TrendResult:
    """Mean quantified load per tick across participants plus the grand mean.
    Participants must be tick-aligned (equal lengths)."""
    if not labels_by_participant:
        raise NoParticipants("no participants")
    quant = dict(quantification) if quantification is not None else {b: int(b) for b in LoadLabel}
    series = []
    for name, labels in labels_by_participant.items():
        series.append([float(quant[LoadLabel(int(v))]) for v in labels])
    n_ticks = len(series[0])
    for name, s in zip(labels_by_participant, series):
        if len(s) != n_ticks:
            raise LengthMismatch(f"participant {name!r} has {len(s)} ticks, expected {n_ticks}")
    n_part = len(series)
    per_tick = []
    for t in range(n_ticks):
        acc = 0.0
        for s in series:
            acc += s[t]
        per_tick.append(acc / n_part)
    overall = sum(sum(s) for s in series) / (n_part * n_ticks) if n_ticks else 0.0
    return TrendResult(per_tick, overall, n_part, n_ticks)


TLX_SUBSCALES = ("mental", "physical", "temporal", "performance", "effort",
                 "frustration")


def tlx_composite(scores: Mapping[str, float]) -> float:
    """Raw (unweighted) NASA-TLX composite: the mean of the six subscales."""
    missing = [s for s in TLX_SUBSCALES if s not in scores]
    if missing:
        raise ValueError(f"missing subscales: {missing}")
    return sum(float(scores[s]) for s in TLX_SUBSCALES) / len(TLX_SUBSCALES)


def trend_svg(series: Mapping[str, Sequence[float]], width: int = 800,
              height: int = 300, y_max: float = 2.0) -> str:
    """Minimal line chart of per-tick mean load, one polyline per series."""
    colors = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"]
    pad = 40
    iw = width - 2 * pad
    ih = height - 2 * pad
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
             f'viewBox="0 0 {width} {height}">',
             f'<rect width="{width}" height="{height}" fill="white"/>',
             f'<line x1="{pad}" y1="{height - pad}" x2="{width - pad}" y2="{height - pad}" stroke="black"/>',
             f'<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{height - pad}" stroke="black"/>']
    for gi, gy in enumerate((0.0, 1.0, 2.0)):
        ypix = height - pad - ih * (gy / y_max)
        parts.append(f'<line x1="{pad}" y1="{ypix:.1f}" x2="{width - pad}" y2="{ypix:.1f}" '
                     f'stroke="#ddd" stroke-dasharray="4 3"/>')
        parts.append(f'<text x="{pad - 6}" y="{ypix + 4:.1f}" font-size="11" '
                     f'text-anchor="end">{gy:g}</text>')
    for ci, (name, vals) in enumerate(series.items()):
        if not vals:
            continue
        nx = max(1, len(vals) - 1)
        pts = " ".join(f"{pad + iw * (t / nx):.1f},{height - pad - ih * (min(max(v, 0.0), y_max) / y_max):.1f}"
                       for t, v in enumerate(vals))
        color = colors[ci % len(colors)]
        parts.append(f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="1.5"/>')
        parts.append(f'<text x="{width - pad}" y="{pad + 14 * ci}" font-size="12" '
                     f'text-anchor="end" fill="{color}">{name}</text>')
    parts.append("</svg>")
    return "\n".join(parts)
