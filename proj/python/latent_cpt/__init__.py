"""Python access to the latent CPT pipeline."""

from ._latent_cpt import (
    Autoencoder,
    Ensemble,
    LatentCptError,
    Pca,
    abs_log_difference,
    config_hash,
    confusion,
    metrics,
    perturbation_probe,
    positional_encoding,
    regularize_profile,
    rmse,
    run_stage,
    split_dataset,
    stage_names,
)

__all__ = [
    "Autoencoder",
    "Ensemble",
    "LatentCptError",
    "Pca",
    "abs_log_difference",
    "config_hash",
    "confusion",
    "metrics",
    "perturbation_probe",
    "positional_encoding",
    "regularize_profile",
    "rmse",
    "run_stage",
    "split_dataset",
    "stage_names",
]
