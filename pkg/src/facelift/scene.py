"""Synthetic urban scenes: label rasters, taxonomy tags, corpora, and the
hidden beauty oracle that stands in for human raters."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

ELEMENT_NAMES: tuple[str, ...] = (
    "road",
    "sky",
    "trees",
    "buildings",
    "poles",
    "signage",
    "pedestrians",
    "vehicles",
    "bicycles",
    "pavement",
    "fences",
    "road markings",
)
N_ELEMENTS = len(ELEMENT_NAMES)
(ROAD, SKY, TREES, BUILDINGS, POLES, SIGNAGE, PEDESTRIANS, VEHICLES,
 BICYCLES, PAVEMENT, FENCES, ROAD_MARKINGS) = range(N_ELEMENTS)

ELEMENT_CODES: dict[str, int] = {name: code for code, name in enumerate(ELEMENT_NAMES)}

CATEGORIES: tuple[str, ...] = ("Architectural", "Walkable", "Landmark", "Natural")


@dataclass(frozen=True)
class Provenance:
    """Where a scene came from: generated, camera-rotated, distance-translated,
    or decoded from a latent code."""

    kind: str  # "original" | "rotated" | "translated" | "synthetic"
    angle: float | None = None     # degrees, rotated only
    distance: float | None = None  # meters, translated only

    KINDS = ("original", "rotated", "translated", "synthetic")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ValueError(f"unknown provenance kind {self.kind!r}")

    def to_dict(self) -> dict:
        d = {"kind": self.kind}
        if self.angle is not None:
            d["angle"] = self.angle
        if self.distance is not None:
            d["distance"] = self.distance
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> "Provenance":
        return cls(d["kind"], d.get("angle"), d.get("distance"))


ORIGINAL = Provenance("original")
SYNTHETIC = Provenance("synthetic")


@dataclass(frozen=True)
class SceneTag:
    """A scene-level label with its design category and assignment confidence."""

    name: str
    category: str
    confidence: float = 0.0


@dataclass(frozen=True, eq=False)
class Scene:
    """A label raster plus scene-level tags and provenance.

    ``labels`` is row-major, one element code per cell, length width*height.
    """

    id: str
    width: int
    height: int
    labels: np.ndarray
    tags: tuple[SceneTag, ...] = ()
    provenance: Provenance = ORIGINAL

    def __post_init__(self):
        arr = np.ascontiguousarray(np.asarray(self.labels, dtype=np.uint8))
        if self.width < 1 or self.height < 1:
            raise ValueError(f"scene {self.id!r}: non-positive dimensions")
        if arr.ndim != 1 or arr.size != self.width * self.height:
            raise ValueError(
                f"scene {self.id!r}: expected {self.width * self.height} labels, got {arr.size}"
            )
        if arr.size and arr.max() >= N_ELEMENTS:
            raise ValueError(f"scene {self.id!r}: label code out of range")
        if len(self.tags) > 5:
            raise ValueError(f"scene {self.id!r}: more than 5 tags")
        arr.setflags(write=False)
        object.__setattr__(self, "labels", arr)

    @property
    def grid(self) -> np.ndarray:
        """Labels viewed as a (height, width) array."""
        return self.labels.reshape(self.height, self.width)

    def tag_names(self) -> tuple[str, ...]:
        return tuple(t.name for t in self.tags)

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "width": self.width,
            "height": self.height,
            "labels": self.labels.tolist(),
            "tags": [
                {"name": t.name, "category": t.category, "confidence": t.confidence}
                for t in self.tags
            ],
            "provenance": self.provenance.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "Scene":
        tags = tuple(
            SceneTag(t["name"], t["category"], t.get("confidence", 0.0))
            for t in d.get("tags", ())
        )
        return cls(
            id=d["id"],
            width=d["width"],
            height=d["height"],
            labels=np.asarray(d["labels"], dtype=np.uint8),
            tags=tags,
            provenance=Provenance.from_dict(d.get("provenance", {"kind": "original"})),
        )


def element_histogram(scene: Scene) -> np.ndarray:
    """Fraction of cells per element; 12 values summing to 1."""
    counts = np.bincount(scene.labels, minlength=N_ELEMENTS).astype(np.float64)
    return counts / scene.labels.size


def shannon_entropy(fractions: np.ndarray) -> float:
    """Natural-log entropy of a distribution, with 0*log(0) taken as 0."""
    p = np.asarray(fractions, dtype=np.float64)
    nz = p[p > 0.0]
    return float(-(nz * np.log(nz)).sum())


# --------------------------------------------------------------------------
# Taxonomy: tag rules loaded from a config file.

@dataclass(frozen=True)
class TagRule:
    """Linear scorer for one tag: confidence = sum(affinity[e] * fraction[e])."""

    name: str
    category: str
    affinity: Mapping[str, float]

    def confidence(self, hist: np.ndarray) -> float:
        return float(sum(w * hist[ELEMENT_CODES[e]] for e, w in self.affinity.items()))


class Taxonomy:
    """Tag rules grouped into the four design categories.

    Assignment keeps the most confident tags (at most ``max_tags``), breaking
    confidence ties by tag name.
    """

    def __init__(self, rules: Sequence[TagRule], min_confidence: float = 0.35,
                 max_tags: int = 5):
        names = [r.name for r in rules]
        if len(set(names)) != len(names):
            raise ValueError("duplicate tag names in taxonomy")
        for r in rules:
            if r.category not in CATEGORIES:
                raise ValueError(f"tag {r.name!r}: unknown category {r.category!r}")
            for e in r.affinity:
                if e not in ELEMENT_CODES:
                    raise ValueError(f"tag {r.name!r}: unknown element {e!r}")
        self.rules = tuple(rules)
        self.min_confidence = float(min_confidence)
        self.max_tags = int(max_tags)
        self._by_name = {r.name: r for r in self.rules}

    def category_of(self, tag_name: str) -> str | None:
        rule = self._by_name.get(tag_name)
        return rule.category if rule else None

    def assign(self, hist: np.ndarray) -> tuple[SceneTag, ...]:
        scored = []
        for rule in self.rules:
            c = rule.confidence(hist)
            if c >= self.min_confidence:
                scored.append(SceneTag(rule.name, rule.category, c))
        scored.sort(key=lambda t: (-t.confidence, t.name))
        return tuple(scored[: self.max_tags])

    def to_dict(self) -> dict:
        return {
            "min_confidence": self.min_confidence,
            "max_tags": self.max_tags,
            "tags": [
                {"name": r.name, "category": r.category, "affinity": dict(r.affinity)}
                for r in self.rules
            ],
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "Taxonomy":
        rules = [TagRule(t["name"], t["category"], t["affinity"]) for t in d["tags"]]
        return cls(rules, d.get("min_confidence", 0.35), d.get("max_tags", 5))

    @classmethod
    def from_json(cls, path: str | Path) -> "Taxonomy":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def default_taxonomy() -> Taxonomy:
    """The taxonomy shipped with the package."""
    text = resources.files("facelift").joinpath("data/taxonomy.json").read_text("utf-8")
    return Taxonomy.from_dict(json.loads(text))


# --------------------------------------------------------------------------
# Hidden beauty oracle.

@dataclass(frozen=True)
class HiddenBeautyOracle:
    """Ground-truth preference model used only to simulate raters.

    Score is a weighted sum of element fractions minus an entropy penalty,
    optionally with Gaussian noise. Training code must never see it.
    """

    weights: np.ndarray                 # one weight per element code
    entropy_weight: float = 0.12
    noise_scale: float = 0.25

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        if w.shape != (N_ELEMENTS,):
            raise ValueError(f"expected {N_ELEMENTS} element weights")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    def score(self, scene: Scene) -> float:
        """Noise-free score."""
        hist = element_histogram(scene)
        return float(self.weights @ hist) - self.entropy_weight * shannon_entropy(hist)

    def noisy_score(self, scene: Scene, rng: np.random.Generator) -> float:
        return self.score(scene) + float(rng.normal()) * self.noise_scale

    def to_dict(self) -> dict:
        return {
            "weights": {name: float(self.weights[code]) for name, code in ELEMENT_CODES.items()},
            "entropy_weight": self.entropy_weight,
            "noise_scale": self.noise_scale,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "HiddenBeautyOracle":
        w = np.zeros(N_ELEMENTS)
        for name, value in d["weights"].items():
            w[ELEMENT_CODES[name]] = value
        return cls(w, d.get("entropy_weight", 0.12), d.get("noise_scale", 0.25))


DEFAULT_ORACLE_WEIGHTS: dict[str, float] = {
    "road": -0.55,
    "sky": -0.25,
    "trees": 1.0,
    "buildings": -0.45,
    "poles": -0.15,
    "signage": -0.3,
    "pedestrians": 0.2,
    "vehicles": -0.5,
    "bicycles": 0.15,
    "pavement": 0.55,
    "fences": -0.2,
    "road markings": -0.05,
}


def default_oracle(noise_scale: float = 0.25) -> HiddenBeautyOracle:
    return HiddenBeautyOracle.from_dict(
        {"weights": DEFAULT_ORACLE_WEIGHTS, "entropy_weight": 0.12, "noise_scale": noise_scale}
    )


def oracle_score(oracle: HiddenBeautyOracle, scene: Scene, seed: int | None = None) -> float:
    """Oracle score for one scene; ``seed`` drives the noise draw when set."""
    if seed is None or oracle.noise_scale == 0.0:
        return oracle.score(scene)
    return oracle.noisy_score(scene, np.random.default_rng(seed))


# --------------------------------------------------------------------------
# Corpus generation.

def _band_heights(rng: np.random.Generator, height: int,
                  urban: float) -> tuple[int, int, int, int]:
    """Split rows into sky / middle / pavement / road bands.

    Built-up scenes show more open sky; tree canopies cover it up.
    """
    sky_frac = 0.08 + float(rng.uniform(0.0, 0.15)) + 0.22 * urban
    sky = max(1, round(sky_frac * height))
    road = max(1, round(float(rng.uniform(0.10, 0.35)) * height))
    pave = int(rng.integers(1, max(2, height // 10) + 1))
    mid = height - sky - road - pave
    while mid < 2:  # shrink the largest band until a middle remains
        if sky >= road and sky > 1:
            sky -= 1
        elif road > 1:
            road -= 1
        else:
            pave -= 1
        mid = height - sky - road - pave
    return sky, mid, pave, road


def _generate_scene(rng: np.random.Generator, scene_id: str, width: int, height: int,
                    taxonomy: Taxonomy) -> Scene:
    tree_mix = float(rng.uniform(0.0, 1.0))
    sky_rows, mid_rows, pave_rows, road_rows = _band_heights(rng, height, 1.0 - tree_mix)
    grid = np.empty((height, width), dtype=np.uint8)

    grid[:sky_rows] = SKY
    mid0, mid1 = sky_rows, sky_rows + mid_rows
    pave0, pave1 = mid1, mid1 + pave_rows
    grid[pave0:pave1] = PAVEMENT
    grid[pave1:] = ROAD

    # Middle band: contiguous column blocks of trees or buildings.
    block_w = max(4, width // 4)
    for c0 in range(0, width, block_w):
        label = TREES if rng.random() < tree_mix else BUILDINGS
        grid[mid0:mid1, c0:c0 + block_w] = label

    # Street furniture and traffic, denser in built-up scenes.
    urban = 1.0 - tree_mix
    mid_view = grid[mid0:mid1]
    for label, base in ((POLES, 0.05), (SIGNAGE, 0.05)):
        rate = float(rng.uniform(0.0, base)) * (0.3 + 0.7 * urban)
        mask = rng.random(mid_view.shape) < rate
        mid_view[mask] = label

    road_view = grid[pave1:]
    vehicle_rate = float(rng.uniform(0.0, 0.25)) * (0.25 + 0.75 * urban)
    road_view[rng.random(road_view.shape) < vehicle_rate] = VEHICLES

    # A dashed center line on one road row.
    if road_rows >= 2 and rng.random() < 0.7:
        lane = pave1 + road_rows // 2
        dashes = (np.arange(width) % 4) < 2
        keep = grid[lane] == ROAD
        grid[lane, dashes & keep] = ROAD_MARKINGS

    pave_view = grid[pave0:pave1]
    ped_rate = float(rng.uniform(0.0, 0.12))
    pave_view[rng.random(pave_view.shape) < ped_rate] = PEDESTRIANS
    bike_rate = float(rng.uniform(0.0, 0.06))
    mask = rng.random(pave_view.shape) < bike_rate
    pave_view[mask & (pave_view == PAVEMENT)] = BICYCLES

    # Occasional fence run along the middle/pavement boundary.
    if rng.random() < 0.3:
        run = int(rng.integers(width // 3, width + 1))
        start = int(rng.integers(0, width - run + 1))
        grid[mid1 - 1, start:start + run] = FENCES

    labels = grid.reshape(-1)
    hist = np.bincount(labels, minlength=N_ELEMENTS) / labels.size
    return Scene(
        id=scene_id,
        width=width,
        height=height,
        labels=labels,
        tags=taxonomy.assign(hist),
        provenance=ORIGINAL,
    )


def generate_corpus(n: int, width: int = 32, height: int = 32, seed: int = 0,
                    taxonomy: Taxonomy | None = None) -> list[Scene]:
    """Generate ``n`` scenes with varied element mixes, deterministic per seed."""
    if n < 2:
        raise ValueError(f"corpus needs at least 2 scenes, got {n}")
    if width < 8 or height < 8:
        raise ValueError(f"scene dimensions must be at least 8x8, got {width}x{height}")
    taxonomy = taxonomy or default_taxonomy()
    rng = np.random.default_rng(seed)
    digits = max(4, len(str(n - 1)))
    return [
        _generate_scene(rng, f"s{i:0{digits}d}", width, height, taxonomy)
        for i in range(n)
    ]


# --------------------------------------------------------------------------
# Scene and corpus files.

def scene_to_json(scene: Scene, fingerprint: str | None = None) -> str:
    d = scene.to_dict()
    if fingerprint is not None:
        d["fingerprint"] = fingerprint
    return json.dumps(d, sort_keys=True, separators=(",", ":"))


def save_scene(scene: Scene, path: str | Path, fingerprint: str | None = None) -> None:
    Path(path).write_text(scene_to_json(scene, fingerprint), encoding="utf-8")


def load_scene(path: str | Path) -> Scene:
    with open(path, encoding="utf-8") as fh:
        return Scene.from_dict(json.load(fh))


def save_corpus(scenes: Sequence[Scene], directory: str | Path,
                config: Mapping | None = None, fingerprint: str | None = None) -> None:
    """Write one JSON file per scene plus a manifest with ids and config."""
    directory = Path(directory)
    scene_dir = directory / "scenes"
    scene_dir.mkdir(parents=True, exist_ok=True)
    for scene in scenes:
        save_scene(scene, scene_dir / f"{scene.id}.json", fingerprint)
    manifest = {
        "ids": [s.id for s in scenes],
        "config": dict(config) if config else {},
    }
    if fingerprint is not None:
        manifest["fingerprint"] = fingerprint
    (directory / "manifest.json").write_text(
        json.dumps(manifest, sort_keys=True, separators=(",", ":")), encoding="utf-8"
    )


def load_corpus(directory: str | Path) -> tuple[list[Scene], dict]:
    """Read a corpus directory back in manifest order."""
    directory = Path(directory)
    with open(directory / "manifest.json", encoding="utf-8") as fh:
        manifest = json.load(fh)
    scenes = [load_scene(directory / "scenes" / f"{sid}.json") for sid in manifest["ids"]]
    return scenes, manifest
