"""Urban-design metrics over scene sets and the pairwise-interaction
logistic regression used to rank element predictors of beauty."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .ranking import BEAUTIFUL, UGLY
from .scene import (CATEGORIES, ELEMENT_CODES, N_ELEMENTS, Scene, Taxonomy,
                    element_histogram, shannon_entropy)

MAX_COMPLEXITY = math.log(N_ELEMENTS)
SKY_BIN_COUNT = 6


def complexity(scene: Scene) -> float:
    """Visual complexity: natural-log entropy of the element histogram."""
    return shannon_entropy(element_histogram(scene))


def sky_fraction(scene: Scene) -> float:
    return float(element_histogram(scene)[ELEMENT_CODES["sky"]])


def sky_bin(scene: Scene) -> int:
    """Equal-width sky-presence bin in 0..5, top edge clamped into bin 5."""
    return min(int(sky_fraction(scene) * SKY_BIN_COUNT), SKY_BIN_COUNT - 1)


@dataclass(frozen=True)
class MetricReport:
    """Per-scene design metrics: tag counts by category, key element
    fractions, the sky bin, and visual complexity."""

    scene_id: str
    walkable_tags: int
    natural_tags: int
    landmark_tags: int
    architectural_tags: int
    tree_fraction: float
    sky_fraction: float
    sky_bin: int
    complexity: float


def metric_report(scene: Scene) -> MetricReport:
    hist = element_histogram(scene)
    by_category = {c: 0 for c in CATEGORIES}
    for tag in scene.tags:
        if tag.category in by_category:
            by_category[tag.category] += 1
    sky = float(hist[ELEMENT_CODES["sky"]])
    return MetricReport(
        scene_id=scene.id,
        walkable_tags=by_category["Walkable"],
        natural_tags=by_category["Natural"],
        landmark_tags=by_category["Landmark"],
        architectural_tags=by_category["Architectural"],
        tree_fraction=float(hist[ELEMENT_CODES["trees"]]),
        sky_fraction=sky,
        sky_bin=min(int(sky * SKY_BIN_COUNT), SKY_BIN_COUNT - 1),
        complexity=shannon_entropy(hist),
    )


def taxonomy_counts(scenes: Sequence[Scene], taxonomy: Taxonomy) -> dict[str, int]:
    """Total tag occurrences per design category over a scene set.

    Tags the taxonomy does not know are tallied under "unclassified".
    """
    counts = {c: 0 for c in CATEGORIES}
    unknown = 0
    for scene in scenes:
        for tag in scene.tags:
            category = taxonomy.category_of(tag.name)
            if category is None:
                unknown += 1
            else:
                counts[category] += 1
    if unknown:
        warnings.warn(f"{unknown} tag occurrences not in the taxonomy; "
                      "counted as unclassified")
        counts["unclassified"] = unknown
    return counts


def write_metrics_csv(reports: Sequence[MetricReport], path,
                      fingerprint: str | None = None) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        if fingerprint is not None:
            fh.write(f"# fingerprint: {fingerprint}\n")
        fh.write("id,walkable_tags,natural_tags,landmark_tags,architectural_tags,"
                 "tree_fraction,sky_fraction,sky_bin,complexity\n")
        for r in reports:
            fh.write(f"{r.scene_id},{r.walkable_tags},{r.natural_tags},"
                     f"{r.landmark_tags},{r.architectural_tags},"
                     f"{r.tree_fraction!r},{r.sky_fraction!r},{r.sky_bin},"
                     f"{r.complexity!r}\n")


def read_metrics_csv(path) -> list[MetricReport]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#") or line.startswith("id,"):
                continue
            (sid, walk, nat, land, arch, tree, sky, sbin, comp) = line.split(",")
            out.append(MetricReport(sid, int(walk), int(nat), int(land), int(arch),
                                    float(tree), float(sky), int(sbin), float(comp)))
    return out


# --------------------------------------------------------------------------
# Pairwise-interaction logistic regression.

DEFAULT_REGRESSION_PAIRS: tuple[tuple[str, str], ...] = (
    ("buildings", "trees"),
    ("sky", "buildings"),
    ("road", "vehicles"),
    ("sky", "trees"),
    ("road", "trees"),
    ("road", "buildings"),
)


@dataclass(frozen=True)
class RegressionModel:
    """Fitted coefficients for Pr(beautiful) on one element-fraction pair.

    The linear predictor is alpha + beta1*V1 + beta2*V2 + beta3*V1*V2.
    """

    pair: tuple[str, str]
    alpha: float
    beta1: float
    beta2: float
    beta3: float
    error_rate: float
    converged: bool
    log_likelihood: float


def _sigmoid(z: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-np.clip(z, -35.0, 35.0)))


def log_likelihood(theta: np.ndarray, x: np.ndarray, y: np.ndarray) -> float:
    """Bernoulli log likelihood of coefficients on a design matrix."""
    eta = np.clip(x @ theta, -35.0, 35.0)
    return float((y * eta - np.log1p(np.exp(eta))).sum())


def design_matrix(histograms: np.ndarray, pair: tuple[str, str]) -> np.ndarray:
    """Columns: intercept, V1, V2, V1*V2 for the requested element pair."""
    i1, i2 = ELEMENT_CODES[pair[0]], ELEMENT_CODES[pair[1]]
    v1, v2 = histograms[:, i1], histograms[:, i2]
    return np.column_stack([np.ones_like(v1), v1, v2, v1 * v2])


def fit_pair_regression(data: Sequence[tuple[np.ndarray, str]],
                        pair: tuple[str, str], ridge: float = 1e-6,
                        max_iter: int = 100, tol: float = 1e-8) -> RegressionModel:
    """Maximum-likelihood fit by iteratively reweighted least squares.

    A tiny ridge on the three slope coefficients (never the intercept) keeps
    the solve finite when classes separate; non-convergence is flagged on the
    returned model and warned about, with the last iterate kept.
    """
    if len(data) < 20:
        raise ValueError(f"need at least 20 samples, got {len(data)}")
    labels = {cls for _, cls in data}
    if labels != {UGLY, BEAUTIFUL}:
        raise ValueError(f"need both classes present, got {sorted(labels)}")
    for name in pair:
        if name not in ELEMENT_CODES:
            raise ValueError(f"unknown element {name!r}")

    hist = np.stack([np.asarray(h, dtype=np.float64) for h, _ in data])
    y = np.array([1.0 if cls == BEAUTIFUL else 0.0 for _, cls in data])
    x = design_matrix(hist, pair)
    penalty = ridge * np.diag([0.0, 1.0, 1.0, 1.0])

    theta = np.zeros(4)
    converged = False
    for _ in range(max_iter):
        eta = np.clip(x @ theta, -35.0, 35.0)
        p = _sigmoid(eta)
        w = np.maximum(p * (1.0 - p), 1e-12)
        z = eta + (y - p) / w
        lhs = x.T @ (w[:, None] * x) + penalty
        rhs = x.T @ (w * z)
        try:
            theta_new = np.linalg.solve(lhs, rhs)
        except np.linalg.LinAlgError:
            warnings.warn(f"regression on {pair}: singular system; keeping last iterate")
            break
        if not np.isfinite(theta_new).all():
            warnings.warn(f"regression on {pair}: diverged; keeping last iterate")
            break
        delta = float(np.abs(theta_new - theta).max())
        theta = theta_new
        if delta < tol:
            converged = True
            break
    if not converged:
        warnings.warn(f"regression on {pair} did not converge "
                      "(possible quasi-separation)")

    p = _sigmoid(x @ theta)
    error_rate = float(((p >= 0.5) != (y == 1.0)).mean())
    return RegressionModel(
        pair=pair,
        alpha=float(theta[0]),
        beta1=float(theta[1]),
        beta2=float(theta[2]),
        beta3=float(theta[3]),
        error_rate=error_rate,
        converged=converged,
        log_likelihood=log_likelihood(theta, x, y),
    )


def divide_by_four(model: RegressionModel) -> dict[str, float]:
    """Upper bounds on the probability change per unit predictor difference.

    Raw beta/4, left in probability units; percent phrasing is up to callers.
    """
    if not model.converged:
        raise ValueError("divide-by-four bounds need a converged model")
    return {
        "beta1": model.beta1 / 4.0,
        "beta2": model.beta2 / 4.0,
        "beta3": model.beta3 / 4.0,
    }


def write_regression_csv(models: Sequence[RegressionModel], path,
                         fingerprint: str | None = None) -> None:
    """Rows mirror the regression summary table: one predictor pair per row."""
    with open(path, "w", encoding="utf-8") as fh:
        if fingerprint is not None:
            fh.write(f"# fingerprint: {fingerprint}\n")
        fh.write("pair,beta1,beta2,beta3,error_rate,converged\n")
        for m in models:
            pair = f"{m.pair[0]} - {m.pair[1]}"
            fh.write(f"{pair},{m.beta1!r},{m.beta2!r},{m.beta3!r},"
                     f"{m.error_rate!r},{int(m.converged)}\n")
