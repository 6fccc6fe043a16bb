"""Source-free domain adaptation on feature vectors."""

from ._sfda import (
    Activation,
    AdaptConfig,
    ContractError,
    Dataset,
    FormatError,
    FtspConfig,
    IoError,
    Model,
    NumericError,
    OptimConfig,
    SourceTrainConfig,
    SpreadingConfig,
    SynthShiftConfig,
    TrustedClassifierKind,
    TsalConfig,
    adapt,
    cross_entropy,
    delete_uncertain,
    entropy,
    evaluate,
    fit_lda,
    fit_mlr,
    ftsp_pipeline,
    l2_normalize_rows,
    label_spreading,
    load_dataset,
    lr_at,
    mixup,
    pseudo_label_metrics,
    save_dataset,
    select_trusted,
    smooth_labels,
    softmax,
    spreading_affinity,
    synth_domain_pair,
    target_distribution,
    tau_dis,
    tau_div,
    topk_indices,
    train_source,
    tsal_batch,
)

__version__ = "0.1.0"
