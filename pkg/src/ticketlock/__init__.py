"""Sparse winning-ticket ownership toolkit.

Find extremely sparse winning tickets with iterative magnitude pruning,
split their masks into key/locked pairs, embed error-corrected signature
matrices into mask topology, train with trigger sets for black-box
probing, and run the removal/ambiguity attack suite with its defenses.
"""

from .masks import LayerMask, MaskError, SparsityStats, is_submask, mask_or, masks_disjoint, rspar, spar
from .model import Architecture, LayerSpec, ModelError, SparseModel, arch_to_string, init_model, merge, parse_arch
from .bundle import (
    BundleChecksumError,
    BundleError,
    BundleHeaderError,
    BundleTruncatedError,
    load_bundle,
    save_bundle,
)
from .data import Dataset, TriggerSet, make_dataset, make_trigger_set, parse_data_spec
from .train import TrainConfig, TrainResult, TrainingDiverged, evaluate, train, trigger_accuracy
from .imp import (
    PruneSchedule,
    TicketProvenance,
    TicketResult,
    global_magnitude_prune,
    global_random_prune,
    imp_find_extreme_ticket,
    retrain_ticket,
    rewound,
)
from .scoring import NEG_INF, SCORERS, ScoreMatrixSet, score_betweenness, score_ewp, score_model, score_omp, score_random
from .keysplit import KeySplit, SplitError, budget_to_count, retrain_without_key, split, split_models
from .ecc import ECCDecodeError, ECCError, crc16, rm64_decode, rm64_encode, rs_decode, rs_encode
from .codec import (
    CapacityError,
    CodecError,
    DecodeResult,
    SignatureMatrix,
    damage,
    decode,
    encode,
    export_pbm,
    import_pbm,
    make_geometry,
)
from .embed import EmbedError, EmbedRecord, ScanHit, blind_scan, embed, extract, similarity_scan, squeeze
from .attacks import (
    AttackContext,
    AttackError,
    AttackOutcome,
    AttackSpec,
    attack_addon,
    attack_fake1,
    attack_fake2,
    attack_fake3,
    attack_finetune,
    attack_prune,
    defend_addon,
    forge_key,
    min_surviving_magnitude,
)
from .verify import (
    VerificationReport,
    VerifyError,
    fidelity,
    model_predict_fn,
    run_scheme,
    verify_blackbox,
    verify_whitebox,
)

__version__ = "0.1.0"

__all__ = [
    "Architecture", "AttackContext", "AttackError", "AttackOutcome", "AttackSpec",
    "BundleChecksumError", "BundleError", "BundleHeaderError", "BundleTruncatedError",
    "CapacityError", "CodecError", "Dataset", "DecodeResult", "ECCDecodeError", "ECCError",
    "EmbedError", "EmbedRecord", "KeySplit", "LayerMask", "LayerSpec", "MaskError",
    "ModelError", "NEG_INF", "PruneSchedule", "SCORERS", "ScanHit", "ScoreMatrixSet",
    "SignatureMatrix", "SparseModel", "SparsityStats", "SplitError", "TicketProvenance",
    "TicketResult", "TrainConfig", "TrainResult", "TrainingDiverged", "TriggerSet",
    "VerificationReport", "VerifyError",
    "arch_to_string", "attack_addon", "attack_fake1", "attack_fake2", "attack_fake3",
    "attack_finetune", "attack_prune", "blind_scan", "budget_to_count", "crc16", "damage",
    "decode", "defend_addon", "embed", "encode", "evaluate", "export_pbm", "extract",
    "fidelity", "forge_key", "global_magnitude_prune", "global_random_prune",
    "imp_find_extreme_ticket", "import_pbm", "init_model", "is_submask", "load_bundle",
    "make_dataset", "make_geometry", "make_trigger_set", "mask_or", "masks_disjoint",
    "merge", "min_surviving_magnitude", "model_predict_fn", "parse_arch", "parse_data_spec",
    "retrain_ticket", "retrain_without_key", "rewound", "rm64_decode", "rm64_encode",
    "rs_decode", "rs_encode", "rspar", "run_scheme", "save_bundle", "score_betweenness",
    "score_ewp", "score_model", "score_omp", "score_random", "similarity_scan", "spar",
    "split", "split_models", "squeeze", "train", "trigger_accuracy", "verify_blackbox",
    "verify_whitebox",
]
