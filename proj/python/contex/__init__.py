"""Supervised contrastive losses, bound checks and desk-scale training."""

from ._contex import (
    DomainError,
    NumericalError,
    ParameterError,
    UsageError,
    ValidationError,
    anchor_gradient,
    compare_bounds,
    contex,
    contex_a,
    contex_b,
    cross_entropy,
    dataset_arrays,
    generate_dataset,
    lemma1_witness,
    linear_eval,
    lse_bracket,
    ntxent,
    ntxent_eval,
    pretrain,
    similarity,
    supcon,
)

__all__ = [
    "DomainError",
    "NumericalError",
    "ParameterError",
    "UsageError",
    "ValidationError",
    "anchor_gradient",
    "compare_bounds",
    "contex",
    "contex_a",
    "contex_b",
    "cross_entropy",
    "dataset_arrays",
    "generate_dataset",
    "lemma1_witness",
    "linear_eval",
    "lse_bracket",
    "ntxent",
    "ntxent_eval",
    "pretrain",
    "similarity",
    "supcon",
]
