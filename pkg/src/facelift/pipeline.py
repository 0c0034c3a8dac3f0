"""Stage orchestration over a single workspace directory.

Every stage writes its artifacts plus a ``meta.json`` carrying the config
fingerprint; downstream stages refuse to read artifacts produced under a
different fingerprint. Reruns with an unchanged config are byte-identical.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np

from . import beautify as bf
from . import curation as cu
from . import metrics as mx
from . import neural as nn
from . import ranking as rk
from . import scene as sc
from .config import PipelineConfig

STAGES = ("gen", "rate", "rank", "curate", "train", "beautify", "metrics",
          "analyze", "evaluate", "report")

BEAUTIFY_DIRECTIONS = ("beautified", "uglified")


class MissingArtifactError(FileNotFoundError):
    """A stage dependency has not been produced yet."""

    def __init__(self, stage: str, missing: Sequence[str]):
        self.stage = stage
        self.missing = list(missing)
        super().__init__(
            f"stage {stage!r} is missing required artifacts: {', '.join(self.missing)}"
        )


class FingerprintMismatchError(RuntimeError):
    """An artifact was produced under a different configuration."""


def _write_json(path: Path, payload: Mapping) -> None:
    path.write_text(json.dumps(payload, sort_keys=True, separators=(",", ":")),
                    encoding="utf-8")


def _read_json(path: Path) -> dict:
    return json.loads(path.read_text(encoding="utf-8"))


# --------------------------------------------------------------------------
# Simulated A/B evaluation.

@dataclass(frozen=True)
class PairVote:
    original_id: str
    transformed_id: str
    intended: str   # "original" | "transformed"
    picked: str
    votes_for_intended: int
    votes_total: int


@dataclass(frozen=True)
class EvaluationResult:
    pairs_judged: int
    correct_pick_rate: float
    votes_per_pair: int
    per_pair: tuple[PairVote, ...]


def evaluate(pairs: Sequence[tuple[sc.Scene, sc.Scene, str]],
             oracle: sc.HiddenBeautyOracle, votes: int = 3,
             seed: int = 0) -> EvaluationResult:
    """Noisy raters vote on each (original, transformed) pair; majority wins.

    ``intended`` names the side that should look more beautiful. Vote counts
    are rounded up to the next odd number and never drop below three.
    """
    if votes < 3:
        raise ValueError("every pair needs at least 3 votes")
    if votes % 2 == 0:
        votes += 1
    rng = np.random.default_rng(seed)
    per_pair: list[PairVote] = []
    correct = 0
    for original, transformed, intended in pairs:
        if intended not in ("original", "transformed"):
            raise ValueError(f"unknown intended side {intended!r}")
        votes_orig = 0
        for _ in range(votes):
            s_orig = oracle.noisy_score(original, rng)
            s_trans = oracle.noisy_score(transformed, rng)
            if s_orig >= s_trans:
                votes_orig += 1
        picked = "original" if votes_orig > votes // 2 else "transformed"
        votes_intended = votes_orig if intended == "original" else votes - votes_orig
        if picked == intended:
            correct += 1
        per_pair.append(PairVote(original.id, transformed.id, intended, picked,
                                 votes_intended, votes))
    if not pairs:
        return EvaluationResult(0, 0.0, votes, ())
    return EvaluationResult(len(pairs), correct / len(pairs), votes, tuple(per_pair))


# --------------------------------------------------------------------------
# The pipeline.

class Pipeline:
    def __init__(self, config: PipelineConfig, workspace: str | Path,
                 workers: int = 1):
        self.config = config
        self.ws = Path(workspace)
        self.workers = max(1, int(workers))
        self.fingerprint = config.fingerprint()

    # --- workspace paths ---------------------------------------------------

    def dir(self, stage: str) -> Path:
        names = {
            "gen": "corpus", "rate": "ratings", "rank": "ratings",
            "curate": "augmented", "train": "models", "beautify": "beautified",
            "metrics": "metrics", "analyze": "analysis",
            "evaluate": "evaluation", "report": "report",
        }
        return self.ws / names[stage]

    def _meta_path(self, stage: str) -> Path:
        return self.dir(stage) / f"meta_{stage}.json"

    def _write_meta(self, stage: str) -> None:
        _write_json(self._meta_path(stage), {"stage": stage, "fingerprint": self.fingerprint})

    def _check_deps(self, stage: str, artifacts: Sequence[tuple[str, Path]]) -> None:
        missing = [f"{name} ({path})" for name, path in artifacts if not path.exists()]
        if missing:
            raise MissingArtifactError(stage, missing)
        for dep_stage in _DEPENDS[stage]:
            meta_path = self._meta_path(dep_stage)
            if not meta_path.exists():
                raise MissingArtifactError(stage, [f"{dep_stage} stage meta ({meta_path})"])
            meta = _read_json(meta_path)
            if meta.get("fingerprint") != self.fingerprint:
                raise FingerprintMismatchError(
                    f"stage {stage!r} needs artifacts from {dep_stage!r} built with "
                    f"fingerprint {self.fingerprint}, found {meta.get('fingerprint')}"
                )

    def _record_timing(self, stage: str, seconds: float) -> None:
        path = self.ws / "timings.json"
        timings = _read_json(path) if path.exists() else {}
        timings[stage] = seconds
        _write_json(path, timings)

    # --- entry point --------------------------------------------------------

    def run(self, stage: str) -> None:
        if stage == "all":
            for s in STAGES:
                self.run(s)
            return
        if stage not in STAGES:
            raise ValueError(f"unknown stage {stage!r}")
        runner: Callable[[], None] = getattr(self, f"run_{stage}")
        started = time.perf_counter()
        runner()
        self._record_timing(stage, time.perf_counter() - started)

    # --- shared loaders ------------------------------------------------------

    def _oracle(self, noise_scale: float | None = None) -> sc.HiddenBeautyOracle:
        o = self.config.oracle
        oracle = sc.HiddenBeautyOracle.from_dict(
            {"weights": o.weights, "entropy_weight": o.entropy_weight,
             "noise_scale": o.noise_scale})
        if noise_scale is not None:
            oracle = replace(oracle, noise_scale=noise_scale)
        return oracle

    def _load_corpus(self) -> list[sc.Scene]:
        scenes, _ = sc.load_corpus(self.ws / "corpus")
        return scenes

    def _load_partition(self) -> dict:
        return _read_json(self.ws / "ratings" / "partition.json")

    def _load_labeled(self) -> list[tuple[sc.Scene, str]]:
        """Labeled original scenes, sorted by id, with their class."""
        part = self._load_partition()
        by_id = {s.id: s for s in self._load_corpus()}
        labeled = [(by_id[i], rk.BEAUTIFUL) for i in part["beautiful"]]
        labeled += [(by_id[i], rk.UGLY) for i in part["ugly"]]
        labeled.sort(key=lambda pair: pair[0].id)
        return labeled

    def _load_augmented_scenes(self) -> dict[str, sc.Scene]:
        records = _read_json(self.ws / "augmented" / "augmented.json")["records"]
        out = {}
        for rec in records:
            scene = sc.load_scene(self.ws / "augmented" / "scenes" / f"{rec['id']}.json")
            out[rec["id"]] = scene
        return out

    def _load_augmentation_result(self) -> cu.AugmentationResult:
        doc = _read_json(self.ws / "augmented" / "augmented.json")
        scenes = self._load_augmented_scenes()
        rotated, taken, filtered = [], [], []
        for rec in doc["records"]:
            a = cu.AugmentedScene(scenes[rec["id"]], rec["parent"], rec["class"],
                                  rec["similarity"])
            if rec["kind"] == "rotated":
                rotated.append(a)
            elif rec["taken"]:
                taken.append(a)
            else:
                filtered.append(a)
        return cu.AugmentationResult(tuple(rotated), tuple(taken), tuple(filtered),
                                     doc["threshold"])

    def _train_config(self, section, stage: str) -> nn.TrainConfig:
        return nn.TrainConfig(
            seed=self.config.stage_seed(stage),
            learning_rate=section.learning_rate,
            epochs=section.epochs,
            batch_size=section.batch_size,
            weight_decay=getattr(section, "weight_decay", 0.0),
            split=section.split,
        )

    def _scene_lookup(self) -> Callable[[str], sc.Scene]:
        corpus_dir = self.ws / "corpus" / "scenes"
        augmented_dir = self.ws / "augmented" / "scenes"

        def lookup(scene_id: str) -> sc.Scene:
            for base in (corpus_dir, augmented_dir):
                path = base / f"{scene_id}.json"
                if path.exists():
                    return sc.load_scene(path)
            raise FileNotFoundError(f"scene {scene_id!r} not found in workspace")

        return lookup

    # --- stages --------------------------------------------------------------

    def run_gen(self) -> None:
        cfg = self.config
        corpus = sc.generate_corpus(cfg.corpus.n, cfg.corpus.width, cfg.corpus.height,
                                    seed=cfg.stage_seed("gen"))
        out = self.dir("gen")
        sc.save_corpus(corpus, out, config={
            "corpus": {"n": cfg.corpus.n, "width": cfg.corpus.width,
                       "height": cfg.corpus.height},
            "oracle": self._oracle().to_dict(),
            "seed": cfg.seed,
        }, fingerprint=self.fingerprint)
        self._write_meta("gen")

    def run_rate(self) -> None:
        self._check_deps("rate", [("corpus manifest", self.ws / "corpus" / "manifest.json")])
        corpus = self._load_corpus()
        judgments = rk.simulate_judgments(
            corpus, self._oracle(), self.config.judgments.pairs_per_scene,
            seed=self.config.stage_seed("rate"))
        out = self.dir("rate")
        out.mkdir(parents=True, exist_ok=True)
        rk.write_judgments(judgments, out / "judgments.ndjson")
        self._write_meta("rate")

    def run_rank(self) -> None:
        self._check_deps("rank", [
            ("corpus manifest", self.ws / "corpus" / "manifest.json"),
            ("judgments", self.ws / "ratings" / "judgments.ndjson"),
        ])
        corpus = self._load_corpus()
        judgments = rk.read_judgments(self.ws / "ratings" / "judgments.ndjson")
        ratings = rk.rate(judgments, self.config.trueskill, ids=[s.id for s in corpus])
        part = rk.partition(ratings, self.config.partition.min_judgments,
                            self.config.partition.lower, self.config.partition.upper)
        out = self.dir("rank")
        out.mkdir(parents=True, exist_ok=True)
        rk.write_ratings_csv(ratings, out / "ratings.csv", self.fingerprint)
        _write_json(out / "partition.json", {
            "beautiful": sorted(part.beautiful),
            "ugly": sorted(part.ugly),
            "discarded": sorted(part.discarded),
            "fingerprint": self.fingerprint,
        })
        self._write_meta("rank")

    def run_curate(self) -> None:
        self._check_deps("curate", [
            ("corpus manifest", self.ws / "corpus" / "manifest.json"),
            ("partition", self.ws / "ratings" / "partition.json"),
        ])
        cfg = self.config
        labeled = self._load_labeled()
        extractor, extractor_report = nn.train_classifier(
            [nn.Example(s, c, s.id) for s, c in labeled],
            self._train_config(cfg.classifier, "curate"),
            input_grid=cfg.classifier.input_grid, hidden=cfg.classifier.hidden,
            feature_dim=cfg.classifier.feature_dim)
        result = cu.augment_labeled(labeled, cfg.augmentation, extractor.features,
                                    seed=cfg.stage_seed("curate-translate"))

        out = self.dir("curate")
        (out / "scenes").mkdir(parents=True, exist_ok=True)
        records = []
        for a in result.rotated:
            records.append({"id": a.scene.id, "parent": a.parent_id,
                            "class": a.inherited_class,
                            "similarity": a.similarity_to_parent,
                            "kind": "rotated", "taken": None})
        for group, taken in ((result.taken, True), (result.filtered, False)):
            for a in group:
                records.append({"id": a.scene.id, "parent": a.parent_id,
                                "class": a.inherited_class,
                                "similarity": a.similarity_to_parent,
                                "kind": "translated", "taken": taken})
        records.sort(key=lambda r: r["id"])
        for a in (*result.rotated, *result.taken, *result.filtered):
            sc.save_scene(a.scene, out / "scenes" / f"{a.scene.id}.json", self.fingerprint)
        _write_json(out / "augmented.json", {
            "records": records,
            "threshold": result.threshold,
            "fingerprint": self.fingerprint,
        })
        cu.write_filter_report(result, out / "filter_report.csv", self.fingerprint)
        prone = cu.propensity(list(result.taken), list(result.filtered))
        _write_json(out / "propensity.json",
                    {"propensity": prone, "fingerprint": self.fingerprint})

        models_dir = self.ws / "models"
        models_dir.mkdir(parents=True, exist_ok=True)
        nn.save_model(extractor, models_dir / "extractor.bin",
                      seed=cfg.stage_seed("curate"), config_hash=self.fingerprint)
        _write_json(out / "extractor_report.json", {
            "train_accuracy": extractor_report.train_accuracy,
            "test_accuracy": extractor_report.test_accuracy,
            "n_train": extractor_report.n_train,
            "n_test": extractor_report.n_test,
            "fingerprint": self.fingerprint,
        })
        self._write_meta("curate")

    def run_train(self) -> None:
        self._check_deps("train", [
            ("corpus manifest", self.ws / "corpus" / "manifest.json"),
            ("partition", self.ws / "ratings" / "partition.json"),
            ("augmented corpus", self.ws / "augmented" / "augmented.json"),
        ])
        cfg = self.config
        labeled = self._load_labeled()
        result = self._load_augmentation_result()
        out = self.dir("train")
        out.mkdir(parents=True, exist_ok=True)

        ladder_rows = []
        final_classifier = None
        train_cfg = self._train_config(cfg.classifier, "train")
        for mode in cu.MODES:
            examples = cu.examples_for_mode(labeled, result, mode)
            clf, report = nn.train_classifier(
                examples, train_cfg, input_grid=cfg.classifier.input_grid,
                hidden=cfg.classifier.hidden, feature_dim=cfg.classifier.feature_dim)
            ladder_rows.append({
                "mode": mode, "label": cu.MODE_LABELS[mode],
                "n_train": report.n_train, "n_test": report.n_test,
                "train_accuracy": report.train_accuracy,
                "test_accuracy": report.test_accuracy,
            })
            if mode == cfg.augmentation.mode:
                final_classifier = clf
        if final_classifier is None:  # mode outside the ladder cannot happen
            raise RuntimeError("final augmentation mode missing from ladder")

        with open(out / "table2.csv", "w", encoding="utf-8") as fh:
            fh.write(f"# fingerprint: {self.fingerprint}\n")
            fh.write("mode,label,n_train,n_test,train_accuracy,test_accuracy\n")
            for row in ladder_rows:
                fh.write(f"{row['mode']},{row['label']},{row['n_train']},"
                         f"{row['n_test']},{row['train_accuracy']!r},"
                         f"{row['test_accuracy']!r}\n")

        corpus = self._load_corpus()
        gen_cfg = self._train_config(cfg.generator, "train-generator")
        generator, gen_report = nn.train_generator(
            corpus, gen_cfg, input_grid=cfg.generator.input_grid,
            latent_dim=cfg.generator.latent_dim, enc_hidden=cfg.generator.enc_hidden,
            dec_hidden=cfg.generator.dec_hidden)

        probe_a = max(corpus, key=lambda s: sc.element_histogram(s)[sc.TREES])
        probe_b = max(corpus, key=lambda s: sc.element_histogram(s)[sc.ROAD])
        fractions, monotone = nn.latent_interpolation_probe(generator, probe_b, probe_a)
        if not monotone:
            import warnings
            warnings.warn("latent interpolation probe is not monotone in tree fraction")

        nn.save_model(final_classifier, out / "classifier.bin",
                      seed=train_cfg.seed, config_hash=self.fingerprint)
        nn.save_model(generator, out / "generator.bin",
                      seed=gen_cfg.seed, config_hash=self.fingerprint)
        _write_json(out / "generator_report.json", {
            "train_cell_accuracy": gen_report.train_cell_accuracy,
            "test_cell_accuracy": gen_report.test_cell_accuracy,
            "n_train": gen_report.n_train, "n_test": gen_report.n_test,
            "interpolation_tree_fractions": fractions,
            "interpolation_monotone": monotone,
            "fingerprint": self.fingerprint,
        })
        self._write_meta("train")

    # Beautification helpers -------------------------------------------------

    def _beautify_candidates(self, classifier: nn.Classifier,
                             ) -> dict[str, list[sc.Scene]]:
        """Scenes eligible per direction: worst-scored predicted-ugly scenes
        for beautification, best-scored predicted-beautiful for uglification."""
        part = self._load_partition()
        ratings = rk.read_ratings_csv(self.ws / "ratings" / "ratings.csv")
        by_id = {s.id: s for s in self._load_corpus()}
        count = self.config.maximize.count

        ugly_sorted = sorted(part["ugly"], key=lambda i: (rk.score(ratings[i]), i))
        beautiful_sorted = sorted(part["beautiful"],
                                  key=lambda i: (-rk.score(ratings[i]), i))
        out: dict[str, list[sc.Scene]] = {"beautified": [], "uglified": []}
        for sid in ugly_sorted:
            if len(out["beautified"]) >= count:
                break
            scene = by_id[sid]
            if classifier.predict(scene) == rk.UGLY:
                out["beautified"].append(scene)
        for sid in beautiful_sorted:
            if len(out["uglified"]) >= count:
                break
            scene = by_id[sid]
            if classifier.predict(scene) == rk.BEAUTIFUL:
                out["uglified"].append(scene)
        return out

    def run_beautify(self) -> None:
        self._check_deps("beautify", [
            ("corpus manifest", self.ws / "corpus" / "manifest.json"),
            ("partition", self.ws / "ratings" / "partition.json"),
            ("ratings", self.ws / "ratings" / "ratings.csv"),
            ("augmented corpus", self.ws / "augmented" / "augmented.json"),
            ("classifier model", self.ws / "models" / "classifier.bin"),
            ("generator model", self.ws / "models" / "generator.bin"),
        ])
        cfg = self.config
        classifier = nn.load_model(self.ws / "models" / "classifier.bin")
        generator = nn.load_model(self.ws / "models" / "generator.bin")
        taxonomy = sc.default_taxonomy()

        labeled = self._load_labeled()
        result = self._load_augmentation_result()
        index_scenes = ([s for s, _ in labeled]
                        + [a.scene for a in result.rotated]
                        + [a.scene for a in result.taken])
        index = bf.build_index(index_scenes, classifier)
        index_dir = self.ws / "index"
        index_dir.mkdir(parents=True, exist_ok=True)
        bf.save_index(index, index_dir / "features.idx")
        _write_json(index_dir / "meta_index.json",
                    {"count": len(index), "dimension": index.dimension,
                     "fingerprint": self.fingerprint})

        by_id = {s.id: s for s in index_scenes}
        candidates = self._beautify_candidates(classifier)
        out = self.dir("beautify")
        stats = {}
        for direction, scenes in candidates.items():
            target = rk.BEAUTIFUL if direction == "beautified" else rk.UGLY
            rec_dir = out / f"records_{direction}"
            tpl_dir = out / f"templates_{direction}"
            rec_dir.mkdir(parents=True, exist_ok=True)
            tpl_dir.mkdir(parents=True, exist_ok=True)
            worker = _TransformWorker(cfg, classifier, generator, taxonomy,
                                      index, target)
            if self.workers > 1:
                import multiprocessing as mp
                with mp.Pool(self.workers) as pool:
                    records = pool.map(worker, scenes)
            else:
                records = [worker(s) for s in scenes]
            for scene, (record, template) in zip(scenes, records):
                retrieved = by_id[record["retrieved_id"]]
                record["explanation"] = bf.explain(scene, retrieved).to_dict()
                record["fingerprint"] = self.fingerprint
                sc.save_scene(template, tpl_dir / f"{scene.id}.json", self.fingerprint)
                _write_json(rec_dir / f"{scene.id}.json", record)
            stats[direction] = len(records)
        _write_json(out / "summary.json", {"counts": stats,
                                           "fingerprint": self.fingerprint})
        self._write_meta("beautify")

    def _load_records(self, direction: str) -> list[dict]:
        rec_dir = self.ws / "beautified" / f"records_{direction}"
        return [_read_json(p) for p in sorted(rec_dir.glob("*.json"))]

    def run_metrics(self) -> None:
        self._check_deps("metrics", [
            ("beautification records", self.ws / "beautified" / "summary.json"),
            ("corpus manifest", self.ws / "corpus" / "manifest.json"),
        ])
        taxonomy = sc.default_taxonomy()
        lookup = self._scene_lookup()
        out = self.dir("metrics")
        out.mkdir(parents=True, exist_ok=True)

        counts = {}
        for direction in BEAUTIFY_DIRECTIONS:
            records = self._load_records(direction)
            retrieved = [lookup(r["retrieved_id"]) for r in records]
            reports = [mx.metric_report(s) for s in retrieved]
            mx.write_metrics_csv(reports, out / f"metrics_{direction}.csv",
                                 self.fingerprint)
            counts[direction] = mx.taxonomy_counts(retrieved, taxonomy)
            originals = [lookup(r["original_id"]) for r in records]
            mx.write_metrics_csv([mx.metric_report(s) for s in originals],
                                 out / f"metrics_{direction}_originals.csv",
                                 self.fingerprint)
        corpus_reports = [mx.metric_report(s) for s in self._load_corpus()]
        mx.write_metrics_csv(corpus_reports, out / "metrics_corpus.csv",
                             self.fingerprint)
        _write_json(out / "taxonomy_counts.json",
                    {"counts": counts, "fingerprint": self.fingerprint})
        self._write_meta("metrics")

    def run_analyze(self) -> None:
        self._check_deps("analyze", [
            ("corpus manifest", self.ws / "corpus" / "manifest.json"),
            ("partition", self.ws / "ratings" / "partition.json"),
        ])
        labeled = self._load_labeled()
        data = [(sc.element_histogram(s), cls) for s, cls in labeled]
        out = self.dir("analyze")
        out.mkdir(parents=True, exist_ok=True)
        models = []
        bounds = {}
        for pair in self.config.regression.pairs:
            model = mx.fit_pair_regression(data, tuple(pair),
                                           ridge=self.config.regression.ridge)
            models.append(model)
            key = f"{pair[0]} - {pair[1]}"
            bounds[key] = mx.divide_by_four(model) if model.converged else None
        mx.write_regression_csv(models, out / "regression.csv", self.fingerprint)
        _write_json(out / "divide_by_four.json",
                    {"bounds": bounds, "fingerprint": self.fingerprint})
        self._write_meta("analyze")

    def run_evaluate(self) -> None:
        self._check_deps("evaluate", [
            ("beautification records", self.ws / "beautified" / "summary.json"),
            ("ratings", self.ws / "ratings" / "ratings.csv"),
            ("corpus manifest", self.ws / "corpus" / "manifest.json"),
        ])
        cfg = self.config.evaluation
        ratings = rk.read_ratings_csv(self.ws / "ratings" / "ratings.csv")
        scores = {sid: rk.score(st) for sid, st in ratings.items()}
        values = np.fromiter(scores.values(), dtype=np.float64)
        lo, hi = np.percentile(values, [cfg.decile_lower, cfg.decile_upper])
        lookup = self._scene_lookup()

        pairs = []
        for direction, cutoff in (("beautified", lo), ("uglified", hi)):
            selected = 0
            for record in self._load_records(direction):
                sid = record["original_id"]
                in_decile = (scores[sid] <= cutoff if direction == "beautified"
                             else scores[sid] >= cutoff)
                if not in_decile:
                    continue
                intended = "transformed" if direction == "beautified" else "original"
                pairs.append((lookup(sid), lookup(record["retrieved_id"]), intended))
                selected += 1
                if selected >= cfg.max_pairs_per_class:
                    break
            if selected < 2:
                raise ValueError(
                    f"need at least 2 evaluation pairs for direction {direction}, "
                    f"got {selected}")

        result = evaluate(pairs, self._oracle(noise_scale=cfg.rater_noise),
                          votes=cfg.votes, seed=self.config.stage_seed("evaluate"))
        out = self.dir("evaluate")
        out.mkdir(parents=True, exist_ok=True)
        _write_json(out / "evaluation.json", {
            "pairs_judged": result.pairs_judged,
            "correct_pick_rate": result.correct_pick_rate,
            "votes_per_pair": result.votes_per_pair,
            "rater_noise": cfg.rater_noise,
            "per_pair": [vars(v) for v in result.per_pair],
            "fingerprint": self.fingerprint,
        })
        self._write_meta("evaluate")

    def run_report(self) -> None:
        from . import report as rp
        rp.emit_report(self)
        self._write_meta("report")


class _TransformWorker:
    """Runs one latent maximization + retrieval; picklable for worker pools."""

    def __init__(self, cfg: PipelineConfig, classifier, generator, taxonomy,
                 index, target: str):
        self.cfg = cfg
        self.classifier = classifier
        self.generator = generator
        self.taxonomy = taxonomy
        self.index = index
        self.target = target

    def __call__(self, scene: sc.Scene) -> tuple[dict, sc.Scene]:
        m = self.cfg.maximize
        result = bf.maximize(scene, self.target, self.classifier, self.generator,
                             lam=m.lam, steps=m.steps, step_size=m.step_size,
                             rel_tol=m.rel_tol, patience=m.patience,
                             taxonomy=self.taxonomy)
        hits = bf.retrieve(self.index, result.template, self.classifier, k=1,
                           exclude=(scene.id,))
        record = {
            "original_id": scene.id,
            "template_file": f"templates_{'beautified' if self.target == rk.BEAUTIFUL else 'uglified'}/{scene.id}.json",
            "retrieved_id": hits[0][0],
            "retrieved_distance": hits[0][1],
            "objective_trace": list(result.objective_trace),
            "target_class": self.target,
            "probability_before": result.probability_before,
            "probability_after": result.probability_after,
        }
        return record, result.template


_DEPENDS: dict[str, tuple[str, ...]] = {
    "gen": (),
    "rate": ("gen",),
    "rank": ("gen", "rate"),
    "curate": ("gen", "rank"),
    "train": ("gen", "rank", "curate"),
    "beautify": ("gen", "rank", "curate", "train"),
    "metrics": ("gen", "beautify"),
    "analyze": ("gen", "rank"),
    "evaluate": ("gen", "rank", "beautify"),
    "report": (),
}
