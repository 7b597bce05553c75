"""Case-based regression with a learned case-difference adaptation stage."""

from .adaptation import (
    AdaptationPair,
    AdapterModel,
    CaseDifferenceAdapter,
    adapt,
    load_adapter,
    make_training_pair,
    make_validation_pairs,
    predict_delta,
    save_adapter,
    train_adapter,
)
from .baselines import (
    ConstantModel,
    ConstantRegressor,
    NeuralRegressor,
    RegressorModel,
    fit_constant,
    load_regressor,
    predict_regressor,
    save_regressor,
    train_regressor,
)
from .casebase import (
    Case,
    CaseBase,
    LabelRange,
    SplitPlan,
    SynthConfig,
    generate_synthetic,
    kfold_split,
    load_cases,
    novel_split,
    save_cases,
)
from .pipeline import CBRRegressor
from .retrieval import (
    L1Retriever,
    RetrievalResult,
    SiameseModel,
    SiameseRetriever,
    Triplet,
    TripletSampler,
    l1_distance,
    load_siamese,
    retrieve_l1,
    retrieve_siamese,
    sample_triplet,
    save_siamese,
    train_siamese,
)

__all__ = [
    "adapt",
    "AdaptationPair",
    "AdapterModel",
    "Case",
    "CaseBase",
    "CaseDifferenceAdapter",
    "CBRRegressor",
    "ConstantModel",
    "ConstantRegressor",
    "fit_constant",
    "generate_synthetic",
    "kfold_split",
    "l1_distance",
    "L1Retriever",
    "LabelRange",
    "load_adapter",
    "load_cases",
    "load_regressor",
    "load_siamese",
    "make_training_pair",
    "make_validation_pairs",
    "NeuralRegressor",
    "novel_split",
    "predict_delta",
    "predict_regressor",
    "RegressorModel",
    "RetrievalResult",
    "retrieve_l1",
    "retrieve_siamese",
    "sample_triplet",
    "save_adapter",
    "save_cases",
    "save_regressor",
    "save_siamese",
    "SiameseModel",
    "SiameseRetriever",
    "SplitPlan",
    "SynthConfig",
    "train_adapter",
    "train_regressor",
    "train_siamese",
    "Triplet",
    "TripletSampler",
]

__version__ = "0.1.0"
