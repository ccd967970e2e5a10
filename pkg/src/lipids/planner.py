"""Baseline illumination planners, the exhaustive subset oracle and
method comparison reports."""

import csv
import json
import math
import time
import warnings
from dataclasses import asdict, dataclass, field
from itertools import combinations

import numpy as np

from ._validation import as_directions, check_positive_int
from .exceptions import (CapError, ConditioningError, ConfigurationError, FeasibilityError,
                         InputError, OrthogonalityWarning, RangeError)
from .geometry import cartesian_to_spherical, pairwise_angles
from .lightspace import bin_of
from .psolve import evaluate_on_samples

EXHAUSTIVE_CAP = 200_000


@dataclass
class PlanResult:
    method: str
    bin_indices: list
    mae_deg: float = float("nan")
    wall_time_ms: float = 0.0
    n_select: int = field(default=None)

    def __post_init__(self):
        self.bin_indices = [int(b) for b in self.bin_indices]
        if len(set(self.bin_indices)) != len(self.bin_indices):
            raise ConfigurationError(f"{self.method}: repeated bins in {self.bin_indices}")
        if self.n_select is None:
            self.n_select = len(self.bin_indices)

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(d["method"], d["bin_indices"], float(d.get("mae_deg", float("nan"))),
                   float(d.get("wall_time_ms", 0.0)), d.get("n_select"))


def plan_random(grid, n_select, min_sep_deg=20.0, seed=0, elevation_limit_deg=75.0,
                max_attempts=1000):
    """Dart throwing over bin centers.

    Bins whose center elevation exceeds ``elevation_limit_deg`` in magnitude
    are excluded. Each attempt visits the remaining bins in a fresh random
    order and keeps a bin if it is at least ``min_sep_deg`` from all kept
    ones; the first attempt that reaches ``n_select`` bins wins.
    """
    check_positive_int(n_select, "n_select")
    el = grid.elevation_centers[np.arange(grid.n_bins) // grid.n_azimuth]
    candidates = np.flatnonzero(np.abs(el) <= elevation_limit_deg + 1e-9)
    if len(candidates) < n_select:
        raise FeasibilityError(
            f"only {len(candidates)} bins within +-{elevation_limit_deg} deg elevation"
        )
    angles = pairwise_angles(grid.bin_centers)
    rng = np.random.default_rng(seed)
    for _ in range(max_attempts):
        chosen = []
        for b in rng.permutation(candidates):
            if all(angles[b, c] >= min_sep_deg for c in chosen):
                chosen.append(int(b))
                if len(chosen) == n_select:
                    return chosen
    raise FeasibilityError(
        f"no {n_select} bins with pairwise separation >= {min_sep_deg} deg after {max_attempts} attempts"
    )


def spherical_kmeans(points, k, seed=0, max_iter=100, tol=1e-6):
    """k-means on unit vectors with cosine similarity.

    k-means++ seeding on angular distance ``1 - cos``; centroids are
    normalized means. A cluster that empties is re-seeded at the point
    farthest from its current centroid. Returns ``(centroids, labels)``.
    """
    X = as_directions(points, "points")
    n = len(X)
    if not 1 <= k <= n:
        raise ConfigurationError(f"k must lie in [1, {n}], got {k}")
    rng = np.random.default_rng(seed)
    centroids = [X[rng.integers(n)]]
    for _ in range(1, k):
        d = 1.0 - np.max(X @ np.array(centroids).T, axis=1)
        d = np.clip(d, 0.0, None)
        p = d / d.sum() if d.sum() > 0 else np.full(n, 1.0 / n)
        centroids.append(X[rng.choice(n, p=p)])
    C = np.array(centroids)
    labels = np.zeros(n, dtype=int)
    for _ in range(max_iter):
        labels = np.argmax(X @ C.T, axis=1)
        new = np.empty_like(C)
        for j in range(k):
            members = X[labels == j]
            if len(members) == 0:
                sim = np.sum(X * C[labels], axis=1)
                far = int(np.argmin(sim))
                new[j] = X[far]
                labels[far] = j
            else:
                s = members.sum(axis=0)
                norm = np.linalg.norm(s)
                new[j] = s / norm if norm > 0 else members[0]
        shift = np.max(np.linalg.norm(new - C, axis=1))
        C = new
        if shift < tol:
            break
    labels = np.argmax(X @ C.T, axis=1)
    return C, labels


def plan_kmeans(lights, n_select, seed=0, grid=None, bin_ids=None):
    """Cluster the available lights and take the light nearest each centroid.

    The chosen lights are reported as bins: ``bin_ids[j]`` when given (light
    ``j`` already assigned to a bin), otherwise the grid cell of the light.
    Each centroid takes the nearest light not already used by an earlier one.
    """
    X = as_directions(lights, "lights")
    if len(X) < n_select:
        raise ConfigurationError(f"need at least {n_select} lights, got {len(X)}")
    if bin_ids is None and grid is None:
        raise ConfigurationError("plan_kmeans needs a grid or per-light bin ids")
    C, _ = spherical_kmeans(X, n_select, seed=seed)
    used, picks = set(), []
    for c in C:
        order = np.argsort(-(X @ c), kind="stable")
        for j in order:
            b = int(bin_ids[j]) if bin_ids is not None else bin_of(grid, X[j])
            if int(j) not in used and b not in picks:
                used.add(int(j))
                picks.append(b)
                break
    return picks


def plan_orthogonal_triplet(grid, tolerance_deg=15.0, objective="centered"):
    """Three bin centers that are close to mutually orthogonal.

    The search is exhaustive over all triples. Objectives:

    * ``"centered"``: among triples whose pairwise angles all lie within
      ``90 +- tolerance_deg``, keep the one whose lowest light sits highest
      above the image plane (fewest attached shadows), then the most
      orthogonal. The symmetric orthogonal triple around the view axis is
      the ideal this approximates.
    * ``"orthogonal"``: minimize the largest deviation from 90 degrees,
      then maximize the smallest pairwise angle.
    * ``"spread"``: among triples within tolerance, maximize the smallest
      pairwise angle.

    Remaining ties go to the lowest indices. When no triple is within
    tolerance the most orthogonal one is returned with an
    :class:`OrthogonalityWarning`.
    """
    if objective not in ("centered", "orthogonal", "spread"):
        raise ConfigurationError(f"unknown objective {objective!r}")
    K = grid.n_bins
    if K < 3:
        raise ConfigurationError(f"a grid with {K} bins cannot hold a light triple")
    centers = grid.bin_centers
    A = pairwise_angles(centers)
    tri = np.array(list(combinations(range(K), 3)))
    ang = np.stack([A[tri[:, 0], tri[:, 1]], A[tri[:, 0], tri[:, 2]], A[tri[:, 1], tri[:, 2]]])
    dev = np.round(np.max(np.abs(ang - 90.0), axis=0), 9)
    min_angle = np.round(np.min(ang, axis=0), 9)
    low_z = np.round(np.min(centers[tri, 2], axis=1), 9)
    within = dev <= tolerance_deg
    index_keys = (tri[:, 2], tri[:, 1], tri[:, 0])
    if objective == "centered" and within.any():
        keys = index_keys + (dev, -np.where(within, low_z, -np.inf))
    elif objective == "spread" and within.any():
        keys = index_keys + (dev, -np.where(within, min_angle, -np.inf))
    else:
        keys = index_keys + (-min_angle, dev)
    best = np.lexsort(keys)[0]
    if not within[best]:
        warnings.warn(OrthogonalityWarning(
            f"best triple deviates {dev[best]:.2f} deg from orthogonal (> {tolerance_deg})"
        ), stacklevel=2)
    return [int(b) for b in tri[best]]


@dataclass
class ExhaustiveResult:
    best: list
    best_mae: float
    table: list  # (subset tuple, mae) in enumeration order; inf for unsolvable subsets


def plan_exhaustive(samples, n_select, backend="ls", bins=None, cap=EXHAUSTIVE_CAP):
    """Score every ``n_select``-subset of bins by mean MAE over ``samples``.

    ``bins`` defaults to the bins covered by the first sample. Subsets whose
    light matrix is ill-conditioned score ``inf``. Ties go to the earliest
    subset in lexicographic order.
    """
    if not isinstance(samples, (list, tuple)):
        samples = [samples]
    if not samples:
        raise InputError("no samples")
    if bins is None:
        ref = samples[0]
        bins = list(ref.bin_ids) if ref.bin_ids is not None else list(range(ref.n_lights))
    bins = [int(b) for b in bins]
    K = len(bins)
    if not 1 <= n_select <= K:
        raise ConfigurationError(f"cannot choose {n_select} of {K} bins")
    total = math.comb(K, n_select)
    if total > cap:
        raise CapError(
            f"C({K},{n_select}) = {total} subsets exceeds the cap of {cap}; use fewer bins or lights"
        )
    table = []
    best, best_mae = None, math.inf
    for subset in combinations(bins, n_select):
        try:
            mae = evaluate_on_samples(samples, subset, backend)
        except ConditioningError:
            mae = math.inf
        table.append((subset, mae))
        if mae < best_mae:
            best, best_mae = list(subset), mae
    if best is None:
        raise FeasibilityError("no subset could be solved")
    return ExhaustiveResult(best, best_mae, table)


def timed(method, fn, *args, **kwargs):
    """Run a planner and wrap its bins in a :class:`PlanResult` (MAE unset)."""
    t0 = time.perf_counter()
    bins = fn(*args, **kwargs)
    return PlanResult(method, bins, wall_time_ms=1e3 * (time.perf_counter() - t0))


def score(result, samples, backend="ls"):
    result.mae_deg = evaluate_on_samples(samples, result.bin_indices, backend)
    return result


def compare(results, samples=None, backend="ls"):
    """Aggregate plans into rows sorted by (M, mean MAE).

    ``results`` is a list of :class:`PlanResult`; when ``samples`` is given
    every result is (re)scored on them first. Rows hold ``method``, ``M``,
    ``mae_deg`` (mean over results of that method and M), ``n_runs`` and
    ``rank`` within its M.
    """
    if samples is not None:
        for r in results:
            score(r, samples, backend)
    groups = {}
    for r in results:
        groups.setdefault((r.n_select, r.method), []).append(r.mae_deg)
    rows = []
    for (m, method), maes in sorted(groups.items()):
        rows.append({"method": method, "M": m, "mae_deg": float(np.mean(maes)),
                     "median_mae_deg": float(np.median(maes)), "n_runs": len(maes)})
    rows.sort(key=lambda r: (r["M"], r["mae_deg"], r["method"]))
    for m in {r["M"] for r in rows}:
        ranked = [r for r in rows if r["M"] == m]
        for i, r in enumerate(ranked, 1):
            r["rank"] = i
    return rows


def write_table_csv(rows, path):
    fields = ["M", "rank", "method", "mae_deg", "median_mae_deg", "n_runs"]
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=fields, extrasaction="ignore")
        w.writeheader()
        for r in rows:
            w.writerow({**r, "mae_deg": f"{r['mae_deg']:.6f}",
                        "median_mae_deg": f"{r['median_mae_deg']:.6f}"})


_PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2"]


def mae_vs_m_svg(rows, width=480, height=320, title="MAE vs number of lights"):
    """Line plot of mean MAE against M, one polyline per method, as SVG text."""
    methods = sorted({r["method"] for r in rows})
    ms = sorted({r["M"] for r in rows})
    vals = [r["mae_deg"] for r in rows if math.isfinite(r["mae_deg"])]
    if not vals:
        vals = [0.0, 1.0]
    lo, hi = min(vals), max(vals)
    if hi - lo < 1e-9:
        lo, hi = lo - 0.5, hi + 0.5
    left, right, top, bottom = 56, 120, 32, 40
    pw, ph = width - left - right, height - top - bottom
    m_lo, m_hi = ms[0], ms[-1]

    def px(m):
        return left + (pw * (m - m_lo) / (m_hi - m_lo) if m_hi > m_lo else pw / 2)

    def py(v):
        return top + ph * (1.0 - (v - lo) / (hi - lo))

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="{width / 2:.1f}" y="18" text-anchor="middle" font-size="13">{title}</text>',
        f'<line x1="{left}" y1="{top + ph}" x2="{left + pw}" y2="{top + ph}" stroke="black"/>',
        f'<line x1="{left}" y1="{top}" x2="{left}" y2="{top + ph}" stroke="black"/>',
    ]
    for m in ms:
        out.append(f'<text x="{px(m):.1f}" y="{top + ph + 16}" text-anchor="middle" font-size="11">{m}</text>')
    for v in np.linspace(lo, hi, 5):
        out.append(f'<text x="{left - 6}" y="{py(v) + 4:.1f}" text-anchor="end" font-size="11">{v:.2f}</text>')
    out.append(f'<text x="{left + pw / 2:.1f}" y="{height - 6}" text-anchor="middle" font-size="12">M (lights)</text>')
    out.append(f'<text x="14" y="{top + ph / 2:.1f}" font-size="12" transform="rotate(-90 14 {top + ph / 2:.1f})" '
               f'text-anchor="middle">MAE (deg)</text>')
    for i, method in enumerate(methods):
        color = _PALETTE[i % len(_PALETTE)]
        pts = sorted((r["M"], r["mae_deg"]) for r in rows
                     if r["method"] == method and math.isfinite(r["mae_deg"]))
        if not pts:
            continue
        coords = " ".join(f"{px(m):.1f},{py(v):.1f}" for m, v in pts)
        out.append(f'<polyline points="{coords}" fill="none" stroke="{color}" stroke-width="2"/>')
        for m, v in pts:
            out.append(f'<circle cx="{px(m):.1f}" cy="{py(v):.1f}" r="3" fill="{color}"/>')
        ly = top + 14 * i + 8
        out.append(f'<line x1="{left + pw + 10}" y1="{ly}" x2="{left + pw + 28}" y2="{ly}" stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{left + pw + 32}" y="{ly + 4}" font-size="11">{method}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def load_plan_results(paths):
    results = []
    for p in paths:
        with open(p) as fh:
            data = json.load(fh)
        items = data if isinstance(data, list) else data.get("results", [data])
        results.extend(PlanResult.from_dict(d) for d in items)
    return results
