"""Beauty classifier and encoder/decoder generator built on the autodiff core."""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .ranking import BEAUTIFUL, CLASS_LABELS, UGLY
from .scene import N_ELEMENTS, Provenance, Scene, Taxonomy

_MAGIC = b"FLNM"
_VERSION = 1


# --------------------------------------------------------------------------
# Scene embeddings: per-cell one-hot labels averaged over a patch grid.

def one_hot_labels(labels: np.ndarray) -> np.ndarray:
    """(cells,) label codes -> (cells, 12) one-hot rows."""
    out = np.zeros((labels.size, N_ELEMENTS), dtype=np.float64)
    out[np.arange(labels.size), labels] = 1.0
    return out


@lru_cache(maxsize=32)
def pool_matrix(height: int, width: int, grid: int) -> np.ndarray:
    """(grid*grid, cells) averaging matrix assigning each cell to one patch."""
    rows = np.minimum(np.arange(height) * grid // height, grid - 1)
    cols = np.minimum(np.arange(width) * grid // width, grid - 1)
    patch = (rows[:, None] * grid + cols[None, :]).reshape(-1)
    mat = np.zeros((grid * grid, height * width), dtype=np.float64)
    mat[patch, np.arange(height * width)] = 1.0
    mat /= mat.sum(axis=1, keepdims=True)
    mat.setflags(write=False)
    return mat


def scene_embedding(scene: Scene, grid: int) -> np.ndarray:
    """(grid*grid*12,) patch-averaged one-hot embedding of a scene."""
    pooled = pool_matrix(scene.height, scene.width, grid) @ one_hot_labels(scene.labels)
    return pooled.reshape(-1)


def embed_cells_node(cells: Tensor, height: int, width: int, grid: int) -> Tensor:
    """Differentiable embedding of per-cell label distributions (cells, 12)."""
    pool = Tensor(pool_matrix(height, width, grid))
    return ad.reshape(ad.matmul(pool, cells), (1, grid * grid * N_ELEMENTS))


# --------------------------------------------------------------------------
# Layers and networks.

class Dense:
    """Affine layer with parameters created from the given rng."""

    def __init__(self, rng: np.random.Generator, n_in: int, n_out: int):
        std = np.sqrt(2.0 / n_in)
        self.weight = Tensor(rng.normal(0.0, std, size=(n_in, n_out)), requires_grad=True)
        self.bias = Tensor(np.zeros((1, n_out)), requires_grad=True)

    def __call__(self, x: Tensor) -> Tensor:
        return ad.add(ad.matmul(x, self.weight), self.bias)

    def params(self) -> list[Tensor]:
        return [self.weight, self.bias]


class Classifier:
    """Scene-embedding MLP ending in a 2-way softmax (ugly=0, beautiful=1).

    The layer before the class head is the feature layer; its activations are
    the vectors used for similarity and retrieval.
    """

    kind = "classifier"

    def __init__(self, height: int, width: int, input_grid: int = 4,
                 hidden: Sequence[int] = (32, 32), feature_dim: int = 64,
                 seed: int = 0):
        self.height = height
        self.width = width
        self.input_grid = input_grid
        self.hidden = tuple(hidden)
        self.feature_dim = feature_dim
        self.seed = seed
        self.trained = False
        rng = np.random.default_rng(seed)
        dims = [input_grid * input_grid * N_ELEMENTS, *self.hidden, feature_dim]
        self.layers = [Dense(rng, dims[i], dims[i + 1]) for i in range(len(dims) - 1)]
        self.head = Dense(rng, feature_dim, len(CLASS_LABELS))

    def params(self) -> list[Tensor]:
        out: list[Tensor] = []
        for layer in self.layers:
            out.extend(layer.params())
        out.extend(self.head.params())
        return out

    def dims(self) -> dict:
        return {"height": self.height, "width": self.width, "input_grid": self.input_grid,
                "hidden": list(self.hidden), "feature_dim": self.feature_dim}

    def forward(self, x: Tensor) -> tuple[Tensor, Tensor]:
        """(logits, feature activations) for an embedded batch (n, grid^2*12)."""
        h = x
        for layer in self.layers:
            h = ad.relu(layer(h))
        return self.head(h), h

    def _forward_data(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        h = x
        for layer in self.layers:
            h = np.maximum(h @ layer.weight.data + layer.bias.data, 0.0)
        return h @ self.head.weight.data + self.head.bias.data, h

    def probabilities(self, scene: Scene) -> np.ndarray:
        """Class probabilities (ugly, beautiful), summing to 1."""
        logits, _ = self._forward_data(scene_embedding(scene, self.input_grid)[None, :])
        z = logits[0] - logits[0].max()
        e = np.exp(z)
        return e / e.sum()

    def predict(self, scene: Scene) -> str:
        return CLASS_LABELS[int(np.argmax(self.probabilities(scene)))]

    def predict_embedded(self, x: np.ndarray) -> np.ndarray:
        """Predicted class indices for an embedded batch."""
        logits, _ = self._forward_data(x)
        return np.argmax(logits, axis=1)

    def features(self, scene: Scene) -> np.ndarray:
        """Feature-layer activations; the retrieval/similarity vector."""
        if not self.trained:
            raise ValueError("classifier has not been trained")
        _, feats = self._forward_data(scene_embedding(scene, self.input_grid)[None, :])
        return feats[0].copy()


def features(classifier: Classifier, scene: Scene) -> np.ndarray:
    return classifier.features(scene)


class Generator:
    """Encoder to a latent code and decoder back to per-cell label logits."""

    kind = "generator"

    def __init__(self, height: int, width: int, input_grid: int = 4,
                 latent_dim: int = 32, enc_hidden: int = 64, dec_hidden: int = 128,
                 seed: int = 0):
        self.height = height
        self.width = width
        self.input_grid = input_grid
        self.latent_dim = latent_dim
        self.enc_hidden = enc_hidden
        self.dec_hidden = dec_hidden
        self.seed = seed
        self.trained = False
        rng = np.random.default_rng(seed)
        in_dim = input_grid * input_grid * N_ELEMENTS
        cells = height * width
        self.enc1 = Dense(rng, in_dim, enc_hidden)
        self.enc2 = Dense(rng, enc_hidden, latent_dim)
        self.dec1 = Dense(rng, latent_dim, dec_hidden)
        self.dec2 = Dense(rng, dec_hidden, cells * N_ELEMENTS)

    def params(self) -> list[Tensor]:
        return [*self.enc1.params(), *self.enc2.params(),
                *self.dec1.params(), *self.dec2.params()]

    def dims(self) -> dict:
        return {"height": self.height, "width": self.width, "input_grid": self.input_grid,
                "latent_dim": self.latent_dim, "enc_hidden": self.enc_hidden,
                "dec_hidden": self.dec_hidden}

    def encode_batch(self, x: np.ndarray) -> np.ndarray:
        h = np.maximum(x @ self.enc1.weight.data + self.enc1.bias.data, 0.0)
        return h @ self.enc2.weight.data + self.enc2.bias.data

    def encode(self, scene: Scene) -> np.ndarray:
        """Latent code for a scene; deterministic."""
        return self.encode_batch(scene_embedding(scene, self.input_grid)[None, :])[0].copy()

    def encode_node(self, x: Tensor) -> Tensor:
        return self.enc2(ad.relu(self.enc1(x)))

    def decode_node(self, f: Tensor) -> Tensor:
        """(batch, latent) -> (batch*cells, 12) softmax label distributions."""
        n = f.data.shape[0]
        h = ad.relu(self.dec1(f))
        logits = ad.reshape(self.dec2(h), (n * self.height * self.width, N_ELEMENTS))
        return ad.softmax(logits)

    def decode_logits_data(self, f: np.ndarray) -> np.ndarray:
        h = np.maximum(f @ self.dec1.weight.data + self.dec1.bias.data, 0.0)
        logits = h @ self.dec2.weight.data + self.dec2.bias.data
        return logits.reshape(f.shape[0] * self.height * self.width, N_ELEMENTS)

    def decode_labels(self, f: np.ndarray) -> np.ndarray:
        """Hard per-cell labels for one latent code (latent,)."""
        logits = self.decode_logits_data(np.asarray(f, dtype=np.float64)[None, :])
        return np.argmax(logits, axis=1).astype(np.uint8)

    def decode_scene(self, f: np.ndarray, scene_id: str,
                     taxonomy: Taxonomy | None = None) -> Scene:
        """Decode a latent code into a synthetic template scene."""
        labels = self.decode_labels(f)
        tags: tuple = ()
        if taxonomy is not None:
            hist = np.bincount(labels, minlength=N_ELEMENTS) / labels.size
            tags = taxonomy.assign(hist)
        return Scene(id=scene_id, width=self.width, height=self.height,
                     labels=labels, tags=tags, provenance=Provenance("synthetic"))


# --------------------------------------------------------------------------
# Training.

@dataclass(frozen=True)
class TrainConfig:
    """Plain-SGD training settings; the seed is mandatory for determinism."""

    seed: int
    learning_rate: float = 0.5
    epochs: int = 60
    batch_size: int = 16
    weight_decay: float = 0.0
    split: float = 0.7

    def __post_init__(self):
        if not (0.0 < self.split < 1.0):
            raise ValueError("split must lie in (0, 1)")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch size must be positive")

    def fingerprint(self) -> str:
        payload = json.dumps(self.__dict__, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(payload.encode()).hexdigest()[:16]


@dataclass(frozen=True)
class Example:
    """A scene with its inherited class label and split group (root parent id)."""

    scene: Scene
    label: str
    group: str


def _sgd_step(params: Sequence[Tensor], lr: float, weight_decay: float) -> None:
    for p in params:
        g = p.grad
        if g is None:
            continue
        if weight_decay and p.data.ndim == 2:  # decay weights, not biases
            g = g + weight_decay * p.data
        p.data -= lr * g
        p.grad = None


def _group_split(examples: Sequence[Example], split: float,
                 rng: np.random.Generator) -> tuple[list[Example], list[Example]]:
    """Split by group so augmented variants follow their parent scene.

    Held-out evaluation uses only original scenes of the held-out groups, so
    augmentation modes share an identical test set under the same seed.
    """
    groups = sorted({e.group for e in examples})
    order = rng.permutation(len(groups))
    n_train = max(1, min(len(groups) - 1, round(split * len(groups))))
    train_groups = {groups[i] for i in order[:n_train]}
    train = [e for e in examples if e.group in train_groups]
    test = [e for e in examples if e.group not in train_groups
            and e.scene.provenance.kind == "original"]
    return train, test


@dataclass(frozen=True)
class ClassifierReport:
    train_accuracy: float
    test_accuracy: float
    n_train: int
    n_test: int
    final_loss: float
    config_fingerprint: str


def train_classifier(examples: Sequence[Example], cfg: TrainConfig,
                     height: int | None = None, width: int | None = None,
                     input_grid: int = 4, hidden: Sequence[int] = (32, 32),
                     feature_dim: int = 64) -> tuple[Classifier, ClassifierReport]:
    """Fit the beauty classifier on labeled scenes with a grouped 70/30 split."""
    labels_present = {e.label for e in examples}
    if labels_present != {UGLY, BEAUTIFUL}:
        raise ValueError(f"corpus must contain both classes, got {sorted(labels_present)}")
    first = examples[0].scene
    height = height or first.height
    width = width or first.width

    rng = np.random.default_rng(cfg.seed)
    clf = Classifier(height, width, input_grid, hidden, feature_dim,
                     seed=int(rng.integers(2**31)))
    train, test = _group_split(examples, cfg.split, rng)

    x_train = np.stack([scene_embedding(e.scene, input_grid) for e in train])
    y_train = np.array([CLASS_LABELS.index(e.label) for e in train])
    x_test = np.stack([scene_embedding(e.scene, input_grid) for e in test])
    y_test = np.array([CLASS_LABELS.index(e.label) for e in test])

    params = clf.params()
    n = len(train)
    final_loss = float("nan")
    for _ in range(cfg.epochs):
        order = rng.permutation(n)
        for b0 in range(0, n, cfg.batch_size):
            idx = order[b0:b0 + cfg.batch_size]
            xb = Tensor(x_train[idx])
            targets = np.zeros((len(idx), len(CLASS_LABELS)))
            targets[np.arange(len(idx)), y_train[idx]] = 1.0
            logits, _ = clf.forward(xb)
            loss = ad.softmax_cross_entropy(logits, targets)
            loss.backward()
            _sgd_step(params, cfg.learning_rate, cfg.weight_decay)
            final_loss = float(loss.data)

    clf.trained = True
    report = ClassifierReport(
        train_accuracy=float((clf.predict_embedded(x_train) == y_train).mean()),
        test_accuracy=float((clf.predict_embedded(x_test) == y_test).mean()),
        n_train=n,
        n_test=len(test),
        final_loss=final_loss,
        config_fingerprint=cfg.fingerprint(),
    )
    return clf, report


@dataclass(frozen=True)
class GeneratorReport:
    train_cell_accuracy: float
    test_cell_accuracy: float
    n_train: int
    n_test: int
    final_loss: float
    config_fingerprint: str


def train_generator(scenes: Sequence[Scene], cfg: TrainConfig,
                    input_grid: int = 4, latent_dim: int = 32,
                    enc_hidden: int = 64, dec_hidden: int = 128,
                    ) -> tuple[Generator, GeneratorReport]:
    """Fit the encoder/decoder by per-cell reconstruction cross-entropy."""
    if not scenes:
        raise ValueError("empty corpus")
    first = scenes[0]
    rng = np.random.default_rng(cfg.seed)
    gen = Generator(first.height, first.width, input_grid, latent_dim,
                    enc_hidden, dec_hidden, seed=int(rng.integers(2**31)))

    n = len(scenes)
    order = rng.permutation(n)
    n_train = max(1, min(n - 1, round(cfg.split * n))) if n > 1 else 1
    train_idx = np.sort(order[:n_train])
    test_idx = np.sort(order[n_train:])

    x_all = np.stack([scene_embedding(s, input_grid) for s in scenes])
    onehot_all = np.stack([one_hot_labels(s.labels) for s in scenes])

    # Start the output bias at the training set's per-cell label frequencies;
    # the decoder then only has to learn per-scene deviations.
    freq = onehot_all[train_idx].mean(axis=0) + 1e-3
    freq /= freq.sum(axis=1, keepdims=True)
    gen.dec2.bias.data = np.log(freq).reshape(1, -1)

    params = gen.params()
    final_loss = float("nan")
    for _ in range(cfg.epochs):
        perm = rng.permutation(n_train)
        for b0 in range(0, n_train, cfg.batch_size):
            idx = train_idx[perm[b0:b0 + cfg.batch_size]]
            xb = Tensor(x_all[idx])
            f = gen.encode_node(xb)
            h = ad.relu(gen.dec1(f))
            logits = ad.reshape(gen.dec2(h),
                                (len(idx) * first.height * first.width, N_ELEMENTS))
            targets = onehot_all[idx].reshape(-1, N_ELEMENTS)
            loss = ad.softmax_cross_entropy(logits, targets)
            loss.backward()
            _sgd_step(params, cfg.learning_rate, cfg.weight_decay)
            final_loss = float(loss.data)

    gen.trained = True

    def cell_accuracy(idx: np.ndarray) -> float:
        if idx.size == 0:
            return float("nan")
        f = gen.encode_batch(x_all[idx])
        logits = gen.decode_logits_data(f).reshape(idx.size, -1, N_ELEMENTS)
        pred = np.argmax(logits, axis=2)
        truth = np.stack([scenes[i].labels for i in idx])
        return float((pred == truth).mean())

    report = GeneratorReport(
        train_cell_accuracy=cell_accuracy(train_idx),
        test_cell_accuracy=cell_accuracy(test_idx),
        n_train=int(n_train),
        n_test=int(n - n_train),
        final_loss=final_loss,
        config_fingerprint=cfg.fingerprint(),
    )
    return gen, report


def latent_interpolation_probe(gen: Generator, a: Scene, b: Scene,
                               steps: int = 5) -> tuple[list[float], bool]:
    """Tree fractions along the latent segment from a to b.

    Returns the fractions and whether they change monotonically within one
    cell of slack; a False flag is diagnostic, not an error.
    """
    from .scene import TREES

    fa, fb = gen.encode(a), gen.encode(b)
    fractions = []
    for t in np.linspace(0.0, 1.0, steps):
        labels = gen.decode_labels((1.0 - t) * fa + t * fb)
        fractions.append(float((labels == TREES).mean()))
    slack = 1.0 / (gen.height * gen.width)
    diffs = np.diff(fractions)
    monotone = bool((diffs >= -slack).all() or (diffs <= slack).all())
    return fractions, monotone


# --------------------------------------------------------------------------
# Model files: header + raw little-endian float64 parameter blocks.

def save_model(model: Classifier | Generator, path: str | Path, seed: int = 0,
               config_hash: str = "") -> None:
    params = model.params()
    header = {
        "kind": model.kind,
        "dims": model.dims(),
        "seed": seed,
        "config_hash": config_hash,
        "init_seed": model.seed,
        "trained": model.trained,
        "shapes": [list(p.data.shape) for p in params],
    }
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<II", _VERSION, len(blob)))
        fh.write(blob)
        for p in params:
            fh.write(p.data.astype("<f8").tobytes())


def load_model(path: str | Path) -> Classifier | Generator:
    with open(path, "rb") as fh:
        if fh.read(4) != _MAGIC:
            raise ValueError(f"{path}: not a model file")
        version, blob_len = struct.unpack("<II", fh.read(8))
        if version != _VERSION:
            raise ValueError(f"{path}: unsupported model version {version}")
        header = json.loads(fh.read(blob_len).decode())
        d = header["dims"]
        if header["kind"] == "classifier":
            model: Classifier | Generator = Classifier(
                d["height"], d["width"], d["input_grid"], tuple(d["hidden"]),
                d["feature_dim"], seed=header["init_seed"])
        elif header["kind"] == "generator":
            model = Generator(d["height"], d["width"], d["input_grid"],
                              d["latent_dim"], d["enc_hidden"], d["dec_hidden"],
                              seed=header["init_seed"])
        else:
            raise ValueError(f"{path}: unknown model kind {header['kind']!r}")
        for p, shape in zip(model.params(), header["shapes"]):
            if list(p.data.shape) != shape:
                raise ValueError(f"{path}: parameter shape mismatch")
            raw = fh.read(p.data.size * 8)
            p.data = np.frombuffer(raw, dtype="<f8").reshape(p.data.shape).astype(np.float64)
        model.trained = bool(header["trained"])
    return model
