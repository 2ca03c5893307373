"""Zero-shot classification with structured joint embeddings.

Images (or any samples) and classes are embedded separately; a bilinear
compatibility ``x @ W @ phi(y)`` is learned on training classes and used to
rank unseen classes at test time.
"""

from .embeddings import (
    InputEmbeddingSet,
    OutputEmbeddingTable,
    SplitSpec,
    binarize_attributes,
    l2_normalize_rows,
    load_feature_matrix,
    load_output_table,
    make_split,
)
from .ensemble import (
    EnsembleModel,
    concatenate_embeddings,
    ensemble_predict,
    ensemble_score,
    grid_search_alpha,
)
from .errors import ParseError, SJEError, ValidationError, ZeroShotLeakError
from .harness import ExperimentConfig, Report, cross_validate_eta, emit_report, run_experiment, run_zero_shot
from .model import (
    CompatibilityModel,
    TrainConfig,
    compatibility,
    most_violating_class,
    per_class_accuracy,
    predict,
    sgd_step,
    train,
)
from .synth import PlantedTask, generate_planted_task, noise_table
from .taxonomy import Taxonomy, build_hierarchy_embedding, build_taxonomy, information_content, similarity
from .text import FinetuneConfig, bow_embedding, build_vocabulary, ws_w2v_finetune

__version__ = "0.1.0"
