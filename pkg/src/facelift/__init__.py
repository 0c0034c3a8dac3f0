"""Beauty-driven urban scene ranking, beautification, and explanation."""

from .beautify import (Explanation, FeatureIndex, LatentCode, MaximizationError,
                       MaximizationResult, build_index, explain, maximize, retrieve)
from .config import PipelineConfig
from .curation import (AugmentationConfig, AugmentedScene, conservative_filter,
                       feature_similarity, propensity, rotate, translate)
from .metrics import (MetricReport, RegressionModel, complexity, divide_by_four,
                      fit_pair_regression, metric_report, sky_bin, taxonomy_counts)
from .neural import (Classifier, Example, Generator, TrainConfig, features,
                     load_model, save_model, train_classifier, train_generator)
from .pipeline import EvaluationResult, Pipeline, evaluate
from .ranking import (BEAUTIFUL, UGLY, Judgment, Partition, RatingState,
                      TrueSkillConfig, partition, rate, score, simulate_judgments,
                      update)
from .scene import (ELEMENT_NAMES, HiddenBeautyOracle, Scene, SceneTag, Taxonomy,
                    default_oracle, default_taxonomy, element_histogram,
                    generate_corpus, oracle_score)

__version__ = "0.1.0"
