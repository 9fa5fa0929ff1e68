"""Streaming class-incremental classification over precomputed embeddings.

Pipeline: seeded sparse random expansion, winner-take-all sparsification,
and a streaming ridge classifier whose penalty is selected per task by
generalized cross-validation.  Includes a cosine prototype baseline, vanilla
component variants for benchmarking, a synthetic data generator, and an
analysis harness.
"""

from .analysis import (
    CorrelationMatrix,
    RunReport,
    overall_accuracy,
    prototype_correlations,
    stage_accuracy,
    timing_split,
)
from .baseline import PrototypeBank, accumulate_prototypes, cosine_predict, cosine_predict_batch
from .embed_store import (
    EmbeddingDataset,
    TaskBatch,
    TaskManifest,
    holdout_split,
    load_manifest,
    make_manifest,
    read_embedding_file,
    save_manifest,
    split_tasks,
    write_embedding_file,
)
from .kernels import backend_name, compiled_available
from .pipeline import (
    AblationFlags,
    ExperimentConfig,
    FlyPipeline,
    NcmPipeline,
    PipelineFlags,
    run_cil,
    run_sweep,
)
from .projector import (
    ActivationBatch,
    SparseActivation,
    SparseProjectionMatrix,
    build_projection,
    project,
    project_batch,
    sparsification_residual,
    top_k,
    top_k_batch,
)
from .ridge import (
    GcvReport,
    RidgeState,
    StageTimings,
    gcv_select,
    load_checkpoint,
    new_state,
    predict,
    predict_batch,
    save_checkpoint,
    solve_prototypes,
    solve_prototypes_lu,
    train_online,
    train_task,
    update_stats,
)
from .synthgen import SynthSpec, generate

__version__ = "0.1.0"
