"""Interactive machine teaching: adaptive example selection for human students."""

from .dataset import (
    DatasetManifest,
    FeatureDataset,
    ManifestError,
    PcaModel,
    apply_pca,
    fit_pca,
    load_manifest,
    save_manifest,
)
from .propagation import (
    HarmonicSolverState,
    SimilarityGraph,
    build_similarity,
    harmonic_solve,
    predict_class,
)
from .session import (
    PreparedDataset,
    Session,
    SessionConfig,
    SessionResult,
    create_session,
    replay_session,
)
from .simulator import (
    SimulatedStudent,
    StudentKind,
    StudentSpec,
    TrialResult,
    learning_curve,
    make_gaussian_mixture,
    run_experiment,
    run_trial,
    welch_t_test,
)
from .strategies import StrategyKind, TeachingPick

__version__ = "0.1.0"

__all__ = [
    "DatasetManifest",
    "FeatureDataset",
    "ManifestError",
    "PcaModel",
    "apply_pca",
    "fit_pca",
    "load_manifest",
    "save_manifest",
    "HarmonicSolverState",
    "SimilarityGraph",
    "build_similarity",
    "harmonic_solve",
    "predict_class",
    "PreparedDataset",
    "Session",
    "SessionConfig",
    "SessionResult",
    "create_session",
    "replay_session",
    "SimulatedStudent",
    "StudentKind",
    "StudentSpec",
    "TrialResult",
    "learning_curve",
    "make_gaussian_mixture",
    "run_experiment",
    "run_trial",
    "welch_t_test",
    "StrategyKind",
    "TeachingPick",
    "__version__",
]
