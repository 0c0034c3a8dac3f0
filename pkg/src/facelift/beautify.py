"""Latent-space beautification: maximize the target class neuron, retrieve
the nearest real scene, and explain the change as element differences."""

from __future__ import annotations

import json
import struct
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import NonFiniteError, Tensor
from .neural import Classifier, Generator, embed_cells_node
from .ranking import CLASS_LABELS
from .scene import ELEMENT_NAMES, Scene, Taxonomy, element_histogram

_INDEX_MAGIC = b"FLIX"
_INDEX_VERSION = 1


class MaximizationError(RuntimeError):
    """Latent optimization could not run or diverged."""


@dataclass(frozen=True)
class LatentCode:
    """Latent optimization variable with its norm-penalty weight."""

    f: np.ndarray
    lam: float

    def __post_init__(self):
        arr = np.asarray(self.f, dtype=np.float64)
        if not np.isfinite(arr).all():
            raise ValueError("non-finite latent code")
        if self.lam < 0:
            raise ValueError("regularizer weight must be non-negative")
        arr.setflags(write=False)
        object.__setattr__(self, "f", arr)

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.f))


@dataclass(frozen=True)
class MaximizationResult:
    initial_code: LatentCode
    final_code: LatentCode
    template: Scene
    objective_trace: tuple[float, ...]
    target_class: str
    probability_before: float
    probability_after: float


def _objective_and_grad(f: np.ndarray, target_idx: int, classifier: Classifier,
                        generator: Generator, lam: float,
                        ) -> tuple[float, np.ndarray, float]:
    """Objective value, gradient wrt f, and target-class probability.

    The class activation is taken as the target neuron's log-odds (its logit
    minus the other class's); this is monotone in the softmax probability but
    keeps useful gradients where the softmax itself saturates.
    """
    f_node = Tensor(f[None, :], requires_grad=True)
    cells = generator.decode_node(f_node)
    embedded = embed_cells_node(cells, generator.height, generator.width,
                                classifier.input_grid)
    logits, _ = classifier.forward(embedded)
    activation = ad.pick(logits, target_idx) - ad.pick(logits, 1 - target_idx)
    objective = activation - lam * ad.l2_norm(f_node)
    objective.backward()
    z = logits.data[0, target_idx] - logits.data[0, 1 - target_idx]
    p_target = 1.0 / (1.0 + np.exp(-z)) if z > -500 else 0.0
    return (float(objective.data), f_node.grad.reshape(-1).copy(),
            float(p_target))


def maximize(scene: Scene, target_class: str, classifier: Classifier,
             generator: Generator, lam: float = 1e-3, steps: int = 200,
             step_size: float = 1.0, rel_tol: float = 1e-7, patience: int = 10,
             saturate_tol: float = 1e-9,
             taxonomy: Taxonomy | None = None) -> MaximizationResult:
    """Gradient-ascend the latent code so the target class neuron fires harder.

    Starts from the scene's own encoding and uses backtracking halving so
    every accepted step strictly improves the objective. Stops on the step
    budget, when gains over the last ``patience`` steps fall under ``rel_tol``
    relatively, or when the target probability is within ``saturate_tol`` of 1
    (further ascent only pushes the saturated neuron).
    """
    if target_class not in CLASS_LABELS:
        raise ValueError(f"unknown target class {target_class!r}")
    if lam < 0:
        raise ValueError("regularizer weight must be non-negative")
    predicted = classifier.predict(scene)
    if predicted == target_class:
        raise MaximizationError(
            f"scene {scene.id!r} is already classified {target_class!r}; "
            "optimizing it further would only saturate the neuron"
        )

    target_idx = CLASS_LABELS.index(target_class)
    f = generator.encode(scene)
    initial = LatentCode(f.copy(), lam)
    trace: list[float] = []

    try:
        with ad.frozen(classifier.params() + generator.params()):
            obj, grad_f, p_target = _objective_and_grad(f, target_idx, classifier,
                                                        generator, lam)
            trace.append(obj)
            for _ in range(steps):
                if p_target >= 1.0 - saturate_tol or not np.any(grad_f):
                    break
                trial = step_size
                accepted = None
                for _ in range(20):
                    candidate = f + trial * grad_f
                    cand = _objective_and_grad(candidate, target_idx, classifier,
                                               generator, lam)
                    if cand[0] > obj:
                        accepted = (candidate, *cand)
                        break
                    trial *= 0.5
                if accepted is None:
                    break
                f, obj, grad_f, p_target = accepted
                trace.append(obj)
                if len(trace) > patience:
                    base = trace[-1 - patience]
                    if trace[-1] - base < rel_tol * max(1.0, abs(base)):
                        break
    except NonFiniteError as exc:
        raise MaximizationError(
            f"latent optimization diverged at step {len(trace)}: {exc}"
        ) from exc

    template = generator.decode_scene(f, f"{scene.id}-template", taxonomy)
    p_after = float(classifier.probabilities(template)[target_idx])
    # Probabilities before/after are reported on the decoded hard templates so
    # they are comparable to what retrieval and reporting will see.
    p_before = float(classifier.probabilities(
        generator.decode_scene(initial.f, f"{scene.id}-init"))[target_idx])
    return MaximizationResult(
        initial_code=initial,
        final_code=LatentCode(f, lam),
        template=template,
        objective_trace=tuple(trace),
        target_class=target_class,
        probability_before=p_before,
        probability_after=p_after,
    )


# --------------------------------------------------------------------------
# Exact nearest-neighbor retrieval over classifier features.

class FeatureIndex:
    """Immutable flat index of feature vectors, searched exhaustively."""

    def __init__(self, ids: Sequence[str], vectors: np.ndarray):
        vectors = np.asarray(vectors, dtype=np.float64)
        if vectors.ndim != 2 or len(ids) != vectors.shape[0]:
            raise ValueError("ids and vectors disagree")
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate scene ids in index")
        self.ids = tuple(ids)
        vectors.setflags(write=False)
        self.vectors = vectors

    def __len__(self) -> int:
        return len(self.ids)

    @property
    def dimension(self) -> int:
        return self.vectors.shape[1] if self.vectors.size else 0


def build_index(corpus: Sequence[Scene], classifier: Classifier) -> FeatureIndex:
    """One feature vector per scene, in corpus order."""
    if not corpus:
        return FeatureIndex((), np.zeros((0, classifier.feature_dim)))
    vectors = np.stack([classifier.features(s) for s in corpus])
    if vectors.shape[1] != classifier.feature_dim:
        raise ValueError("feature dimension mismatch")
    return FeatureIndex([s.id for s in corpus], vectors)


def retrieve(index: FeatureIndex, template: Scene, classifier: Classifier,
             k: int = 1, exclude: Sequence[str] = ()) -> list[tuple[str, float]]:
    """The k nearest scenes to the template by euclidean feature distance.

    Ties break by ascending scene id. Returns (id, distance) pairs.
    """
    if len(index) == 0:
        raise ValueError("cannot query an empty index")
    if k < 1:
        raise ValueError("k must be positive")
    query = classifier.features(template)
    if query.shape[0] != index.dimension:
        raise ValueError("query feature dimension mismatch")
    banned = set(exclude)
    dists = np.sqrt(((index.vectors - query[None, :]) ** 2).sum(axis=1))
    order = sorted(
        (i for i in range(len(index)) if index.ids[i] not in banned),
        key=lambda i: (dists[i], index.ids[i]),
    )
    if k > len(order):
        warnings.warn(f"requested k={k} but only {len(order)} candidates; truncating")
        k = len(order)
    return [(index.ids[i], float(dists[i])) for i in order[:k]]


def save_index(index: FeatureIndex, path: str | Path) -> None:
    ids_blob = json.dumps(list(index.ids), separators=(",", ":")).encode()
    with open(path, "wb") as fh:
        fh.write(_INDEX_MAGIC)
        fh.write(struct.pack("<III", _INDEX_VERSION, index.dimension, len(index)))
        fh.write(np.ascontiguousarray(index.vectors, dtype="<f8").tobytes())
        fh.write(struct.pack("<I", len(ids_blob)))
        fh.write(ids_blob)


def load_index(path: str | Path) -> FeatureIndex:
    with open(path, "rb") as fh:
        if fh.read(4) != _INDEX_MAGIC:
            raise ValueError(f"{path}: not an index file")
        version, dim, count = struct.unpack("<III", fh.read(12))
        if version != _INDEX_VERSION:
            raise ValueError(f"{path}: unsupported index version {version}")
        vectors = np.frombuffer(fh.read(count * dim * 8), dtype="<f8")
        vectors = vectors.reshape(count, dim).astype(np.float64)
        (ids_len,) = struct.unpack("<I", fh.read(4))
        ids = json.loads(fh.read(ids_len).decode())
    return FeatureIndex(ids, vectors)


# --------------------------------------------------------------------------
# Element-difference explanations.

@dataclass(frozen=True)
class Explanation:
    """Per-element fraction changes (largest magnitude first) and tag changes."""

    element_deltas: tuple[tuple[str, float], ...]
    tags_added: tuple[str, ...]
    tags_removed: tuple[str, ...]

    def to_dict(self) -> dict:
        return {
            "element_deltas": [[name, delta] for name, delta in self.element_deltas],
            "tags_added": list(self.tags_added),
            "tags_removed": list(self.tags_removed),
        }

    @classmethod
    def from_dict(cls, d) -> "Explanation":
        return cls(
            tuple((name, float(delta)) for name, delta in d["element_deltas"]),
            tuple(d["tags_added"]),
            tuple(d["tags_removed"]),
        )


def explain(original: Scene, beautified: Scene) -> Explanation:
    """How the transformed scene differs from the original, element by element."""
    delta = element_histogram(beautified) - element_histogram(original)
    order = sorted(range(len(ELEMENT_NAMES)), key=lambda i: (-abs(delta[i]), i))
    before = set(original.tag_names())
    after = set(beautified.tag_names())
    return Explanation(
        element_deltas=tuple((ELEMENT_NAMES[i], float(delta[i])) for i in order),
        tags_added=tuple(sorted(after - before)),
        tags_removed=tuple(sorted(before - after)),
    )
