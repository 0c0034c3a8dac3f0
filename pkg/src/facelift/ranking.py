"""Pairwise beauty judgments, Bayesian skill ratings, and class partitioning."""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .scene import HiddenBeautyOracle, Scene

BEAUTIFUL = "beautiful"
UGLY = "ugly"
CLASS_LABELS = (UGLY, BEAUTIFUL)  # ugly=0, beautiful=1

LEFT_WINS = "left"
RIGHT_WINS = "right"
DRAW = "draw"


@dataclass(frozen=True)
class Judgment:
    """One pairwise comparison between two scenes."""

    left: str
    right: str
    outcome: str  # "left" | "right" | "draw"
    rater_seed: int = 0

    def __post_init__(self):
        if self.left == self.right:
            raise ValueError("judgment compares a scene with itself")
        if self.outcome not in (LEFT_WINS, RIGHT_WINS, DRAW):
            raise ValueError(f"unknown outcome {self.outcome!r}")


@dataclass(frozen=True)
class TrueSkillConfig:
    """Prior and noise parameters for the rating updates."""

    mu0: float = 25.0
    sigma0: float = 25.0 / 3.0
    beta: float = 25.0 / 6.0      # performance noise
    tau: float = 25.0 / 300.0     # dynamics, inflates sigma before each update
    draw_probability: float = 0.0

    def __post_init__(self):
        if not (self.sigma0 > 0 and self.beta > 0):
            raise ValueError("sigma0 and beta must be positive")
        if self.tau < 0:
            raise ValueError("tau must be non-negative")
        if not (0.0 <= self.draw_probability < 1.0):
            raise ValueError("draw probability must lie in [0, 1)")

    def fresh(self) -> "RatingState":
        return RatingState(self.mu0, self.sigma0, 0)


@dataclass(frozen=True)
class RatingState:
    """Skill belief for one scene: mean, uncertainty, and update count."""

    mu: float
    sigma: float
    judgment_count: int = 0

    def __post_init__(self):
        if not (math.isfinite(self.mu) and math.isfinite(self.sigma)):
            raise ValueError("non-finite rating state")
        if self.sigma <= 0:
            raise ValueError("sigma must stay positive")


def _norm_pdf(t: float) -> float:
    return math.exp(-0.5 * t * t) / math.sqrt(2.0 * math.pi)


def _norm_cdf(t: float) -> float:
    return 0.5 * math.erfc(-t / math.sqrt(2.0))


def _v_win(t: float) -> float:
    """Additive mean correction for a win at standardized margin t."""
    denom = _norm_cdf(t)
    if denom < 1e-300:
        return -t
    return _norm_pdf(t) / denom


def update(winner: RatingState, loser: RatingState,
           cfg: TrueSkillConfig | None = None) -> tuple[RatingState, RatingState]:
    """Apply one win/loss observation and return the two posterior states.

    Dynamics noise tau is folded into both variances first; the truncated
    Gaussian moments then shift the means toward the observed ordering and
    shrink both uncertainties.
    """
    cfg = cfg or TrueSkillConfig()
    var_w = winner.sigma ** 2 + cfg.tau ** 2
    var_l = loser.sigma ** 2 + cfg.tau ** 2
    c2 = 2.0 * cfg.beta ** 2 + var_w + var_l
    c = math.sqrt(c2)
    t = (winner.mu - loser.mu) / c
    v = _v_win(t)
    w = v * (v + t)

    new_mu_w = winner.mu + (var_w / c) * v
    new_mu_l = loser.mu - (var_l / c) * v
    new_sigma_w = math.sqrt(var_w * (1.0 - (var_w / c2) * w))
    new_sigma_l = math.sqrt(var_l * (1.0 - (var_l / c2) * w))

    return (
        RatingState(new_mu_w, new_sigma_w, winner.judgment_count + 1),
        RatingState(new_mu_l, new_sigma_l, loser.judgment_count + 1),
    )


def score(state: RatingState) -> float:
    """Conservative beauty score: mu - 3*sigma."""
    return state.mu - 3.0 * state.sigma


def rate(judgments: Iterable[Judgment], cfg: TrueSkillConfig | None = None,
         ids: Iterable[str] = ()) -> dict[str, RatingState]:
    """Run the rating updates over a judgment stream, in order.

    Draws are not supported by the zero-draw-margin update and are discarded.
    ``ids`` pre-registers scenes so unjudged ones still appear with priors.
    """
    cfg = cfg or TrueSkillConfig()
    table: dict[str, RatingState] = {sid: cfg.fresh() for sid in ids}
    draws = 0
    for j in judgments:
        if j.outcome == DRAW:
            draws += 1
            continue
        winner_id, loser_id = (j.left, j.right) if j.outcome == LEFT_WINS else (j.right, j.left)
        w = table.get(winner_id) or cfg.fresh()
        l = table.get(loser_id) or cfg.fresh()
        table[winner_id], table[loser_id] = update(w, l, cfg)
    if draws:
        warnings.warn(f"discarded {draws} draw judgments (no draw margin configured)")
    return table


@dataclass(frozen=True)
class Partition:
    beautiful: frozenset[str]
    ugly: frozenset[str]
    discarded: frozenset[str]


def partition(ratings: Mapping[str, RatingState], min_judgments: int = 3,
              lower: float = 33.0, upper: float = 67.0) -> Partition:
    """Split scenes into beautiful / ugly / discarded by score percentiles.

    Scenes with fewer than ``min_judgments`` applied judgments are discarded
    outright; percentile thresholds are computed over the remaining scores.
    """
    if not (0.0 <= lower < upper <= 100.0):
        raise ValueError("percentile bounds must satisfy 0 <= lower < upper <= 100")
    if not ratings:
        return Partition(frozenset(), frozenset(), frozenset())
    eligible = {sid: score(st) for sid, st in ratings.items()
                if st.judgment_count >= min_judgments}
    if not eligible:
        return Partition(frozenset(), frozenset(), frozenset(ratings))
    values = np.fromiter(eligible.values(), dtype=np.float64)
    lo, hi = np.percentile(values, [lower, upper])
    beautiful = frozenset(sid for sid, s in eligible.items() if s > hi)
    ugly = frozenset(sid for sid, s in eligible.items() if s < lo)
    discarded = frozenset(ratings) - beautiful - ugly
    return Partition(beautiful, ugly, discarded)


def simulate_judgments(corpus: Sequence[Scene], oracle: HiddenBeautyOracle,
                       pairs_per_scene: int = 30, seed: int = 0) -> list[Judgment]:
    """Simulated crowd: each scene is compared against random partners.

    Every comparison draws fresh rater noise on both sides from the oracle's
    noise model; the noisier side can flip close calls. Deterministic per seed.
    """
    if len(corpus) < 2:
        raise ValueError("need at least 2 scenes to judge")
    rng = np.random.default_rng(seed)
    base = np.array([oracle.score(s) for s in corpus])
    ids = [s.id for s in corpus]
    n = len(corpus)
    judgments: list[Judgment] = []
    for i in range(n):
        for _ in range(pairs_per_scene):
            j = int(rng.integers(0, n - 1))
            if j >= i:
                j += 1
            rater_seed = int(rng.integers(0, 2**31 - 1))
            noise = np.random.default_rng(rater_seed).normal(size=2) * oracle.noise_scale
            s_left = base[i] + noise[0]
            s_right = base[j] + noise[1]
            if s_left > s_right:
                outcome = LEFT_WINS
            elif s_right > s_left:
                outcome = RIGHT_WINS
            else:  # exact tie: stable order by id
                outcome = LEFT_WINS if ids[i] < ids[j] else RIGHT_WINS
            judgments.append(Judgment(ids[i], ids[j], outcome, rater_seed))
    return judgments


# --------------------------------------------------------------------------
# Files: newline-delimited judgments, ratings CSV.

def write_judgments(judgments: Sequence[Judgment], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for j in judgments:
            fh.write(json.dumps(
                {"left": j.left, "right": j.right, "outcome": j.outcome,
                 "rater_seed": j.rater_seed},
                sort_keys=True, separators=(",", ":")) + "\n")


def read_judgments(path: str | Path) -> list[Judgment]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            d = json.loads(line)
            out.append(Judgment(d["left"], d["right"], d["outcome"], d.get("rater_seed", 0)))
    return out


def write_ratings_csv(ratings: Mapping[str, RatingState], path: str | Path,
                      fingerprint: str | None = None) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        if fingerprint is not None:
            fh.write(f"# fingerprint: {fingerprint}\n")
        fh.write("id,mu,sigma,score,judgments\n")
        for sid in sorted(ratings):
            st = ratings[sid]
            fh.write(f"{sid},{st.mu!r},{st.sigma!r},{score(st)!r},{st.judgment_count}\n")


def read_ratings_csv(path: str | Path) -> dict[str, RatingState]:
    ratings: dict[str, RatingState] = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#") or line.startswith("id,"):
                continue
            sid, mu, sigma, _score, count = line.split(",")
            ratings[sid] = RatingState(float(mu), float(sigma), int(count))
    return ratings
