"""Corpus augmentation: camera-angle and distance analogs for label rasters,
plus the conservative similarity filter and its propensity diagnostic."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .neural import Example
from .scene import Provenance, Scene

MODE_NONE = "none"
MODE_ROTATION = "rotation"
MODE_ROTATION_TRANSLATION = "rotation_translation"
MODE_ROTATION_CONSERVATIVE = "rotation_conservative"
MODES = (MODE_NONE, MODE_ROTATION, MODE_ROTATION_TRANSLATION, MODE_ROTATION_CONSERVATIVE)

MODE_LABELS = {
    MODE_NONE: "None",
    MODE_ROTATION: "Rotation",
    MODE_ROTATION_TRANSLATION: "Rotation + Translation",
    MODE_ROTATION_CONSERVATIVE: "Rotation + Conservative Translation",
}


@dataclass(frozen=True)
class AugmentationConfig:
    angles: tuple[float, ...] = (-30.0, -15.0, 15.0, 30.0)
    distances: tuple[float, ...] = (10.0, 20.0, 40.0, 60.0)
    mode: str = MODE_ROTATION_CONSERVATIVE

    def __post_init__(self):
        if any(a == 0 for a in self.angles):
            raise ValueError("angle 0 is the identity and is not allowed")
        if any(d <= 0 for d in self.distances):
            raise ValueError("distances must be positive")
        if list(self.distances) != sorted(set(self.distances)):
            raise ValueError("distances must be strictly increasing")
        if self.mode not in MODES:
            raise ValueError(f"unknown augmentation mode {self.mode!r}")


@dataclass(frozen=True)
class AugmentedScene:
    """An augmented variant carrying its parent's class label."""

    scene: Scene
    parent_id: str
    inherited_class: str
    similarity_to_parent: float


def _shift_columns(theta: float, width: int) -> int:
    """Column shift for a camera angle: round(theta/90 * width), half away from zero."""
    x = theta / 90.0 * width
    return int(math.copysign(math.floor(abs(x) + 0.5), x))


def rotate(scene: Scene, theta: float) -> Scene:
    """Cyclic horizontal shift of the raster: the panorama analog of panning.

    Tags are inherited from the input, never recomputed.
    """
    if theta == 0:
        raise ValueError("rotation by 0 degrees is the identity; refusing")
    shift = _shift_columns(theta, scene.width)
    grid = np.roll(scene.grid, shift, axis=1)
    return Scene(
        id=f"{scene.id}-rot{theta:+g}",
        width=scene.width,
        height=scene.height,
        labels=grid.reshape(-1),
        tags=scene.tags,
        provenance=Provenance("rotated", angle=float(theta)),
    )


def translate(scene: Scene, d: float, seed: int = 0) -> Scene:
    """Distance analog: each cell is relabeled with probability d/100 to the
    label of a neighbor sampled within a radius that grows with d."""
    if d <= 0:
        raise ValueError("distance must be positive")
    rng = np.random.default_rng(seed)
    h, w = scene.height, scene.width
    grid = scene.grid.copy()
    mask = rng.random(h * w) < d / 100.0
    idx = np.flatnonzero(mask)
    if idx.size:
        radius = max(1, round(d / 15.0))
        dy = rng.integers(-radius, radius + 1, size=idx.size)
        dx = rng.integers(-radius, radius + 1, size=idx.size)
        both_zero = (dy == 0) & (dx == 0)
        dx[both_zero] = 1
        rows = np.clip(idx // w + dy, 0, h - 1)
        cols = np.clip(idx % w + dx, 0, w - 1)
        grid.reshape(-1)[idx] = scene.grid[rows, cols]
    return Scene(
        id=f"{scene.id}-tr{d:g}",
        width=w,
        height=h,
        labels=grid.reshape(-1),
        tags=scene.tags,
        provenance=Provenance("translated", distance=float(d)),
    )


def feature_similarity(a: Scene, b: Scene,
                       extractor: Callable[[Scene], np.ndarray]) -> float:
    """1 / (1 + euclidean distance) between feature vectors; 1 iff identical."""
    fa = np.asarray(extractor(a), dtype=np.float64)
    fb = np.asarray(extractor(b), dtype=np.float64)
    return 1.0 / (1.0 + float(np.linalg.norm(fa - fb)))


def conservative_filter(translated: Sequence[AugmentedScene],
                        rotated: Sequence[AugmentedScene],
                        ) -> tuple[list[AugmentedScene], list[AugmentedScene], float]:
    """Keep translated scenes at least as parent-similar as the rotated median.

    The threshold is the median parent similarity over the rotated set; the
    comparison is inclusive, so a scene exactly at the median is taken.
    """
    if not rotated:
        raise ValueError("rotated set is empty; similarity threshold undefined")
    threshold = float(np.median([a.similarity_to_parent for a in rotated]))
    taken = [a for a in translated if a.similarity_to_parent >= threshold]
    filtered = [a for a in translated if a.similarity_to_parent < threshold]
    return taken, filtered, threshold


def propensity(taken: Sequence[AugmentedScene],
               filtered: Sequence[AugmentedScene]) -> dict[str, float]:
    """Per-tag frequency in the taken set minus frequency in the filtered set."""

    def frequencies(group: Sequence[AugmentedScene]) -> dict[str, float]:
        if not group:
            return {}
        counts: dict[str, int] = {}
        for a in group:
            for name in a.scene.tag_names():
                counts[name] = counts.get(name, 0) + 1
        return {name: c / len(group) for name, c in counts.items()}

    fr_taken = frequencies(taken)
    fr_filtered = frequencies(filtered)
    return {
        name: fr_taken.get(name, 0.0) - fr_filtered.get(name, 0.0)
        for name in sorted(set(fr_taken) | set(fr_filtered))
    }


@dataclass(frozen=True)
class AugmentationResult:
    rotated: tuple[AugmentedScene, ...]
    taken: tuple[AugmentedScene, ...]
    filtered: tuple[AugmentedScene, ...]
    threshold: float

    @property
    def translated(self) -> tuple[AugmentedScene, ...]:
        return self.taken + self.filtered


def augment_labeled(labeled: Sequence[tuple[Scene, str]], config: AugmentationConfig,
                    extractor: Callable[[Scene], np.ndarray],
                    seed: int = 0) -> AugmentationResult:
    """Produce rotated and translated variants of every labeled scene and run
    the conservative filter over the translated ones."""
    rotated: list[AugmentedScene] = []
    translated: list[AugmentedScene] = []
    for i, (scene, cls) in enumerate(labeled):
        parent_features = np.asarray(extractor(scene), dtype=np.float64)

        def sim(variant: Scene) -> float:
            fv = np.asarray(extractor(variant), dtype=np.float64)
            return 1.0 / (1.0 + float(np.linalg.norm(fv - parent_features)))

        for theta in config.angles:
            variant = rotate(scene, theta)
            rotated.append(AugmentedScene(variant, scene.id, cls, sim(variant)))
        for j, d in enumerate(config.distances):
            child_seed = int(np.random.SeedSequence((seed, i, j)).generate_state(1)[0])
            variant = translate(scene, d, seed=child_seed)
            translated.append(AugmentedScene(variant, scene.id, cls, sim(variant)))
    taken, filtered, threshold = conservative_filter(translated, rotated)
    return AugmentationResult(tuple(rotated), tuple(taken), tuple(filtered), threshold)


def examples_for_mode(labeled: Sequence[tuple[Scene, str]],
                      result: AugmentationResult | None, mode: str) -> list[Example]:
    """Assemble the training corpus for one augmentation mode."""
    examples = [Example(scene, cls, scene.id) for scene, cls in labeled]
    if mode == MODE_NONE:
        return examples
    if result is None:
        raise ValueError(f"mode {mode!r} needs an augmentation result")
    examples += [Example(a.scene, a.inherited_class, a.parent_id) for a in result.rotated]
    if mode == MODE_ROTATION_TRANSLATION:
        examples += [Example(a.scene, a.inherited_class, a.parent_id)
                     for a in result.translated]
    elif mode == MODE_ROTATION_CONSERVATIVE:
        examples += [Example(a.scene, a.inherited_class, a.parent_id)
                     for a in result.taken]
    return examples


def write_filter_report(result: AugmentationResult, path,
                        fingerprint: str | None = None) -> None:
    """CSV of translated scenes: id, parent, similarity, and filter outcome."""
    rows = [(a, True) for a in result.taken] + [(a, False) for a in result.filtered]
    rows.sort(key=lambda r: r[0].scene.id)
    with open(path, "w", encoding="utf-8") as fh:
        if fingerprint is not None:
            fh.write(f"# fingerprint: {fingerprint}\n")
        fh.write(f"# threshold: {result.threshold!r}\n")
        fh.write("id,parent,similarity,taken\n")
        for a, taken in rows:
            fh.write(f"{a.scene.id},{a.parent_id},{a.similarity_to_parent!r},{int(taken)}\n")
