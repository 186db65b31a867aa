# SPDX-License-Identifier: Apache-2.0
"""Saliency-masked unlearning of one-step diffusion generators on 2-d mixtures."""

from ._unlearnlab import (
    CheckpointError,
    Config,
    bayes_classify,
    build_mask,
    config_keys,
    evaluate,
    frechet_gaussian,
    frechet_proxy,
    load_config,
    make_mixture,
    parse_config,
    precision_proxy,
    pretrain,
    read_metrics,
    sweep,
    unlearn,
)

__all__ = [
    "CheckpointError",
    "Config",
    "bayes_classify",
    "build_mask",
    "config_keys",
    "evaluate",
    "frechet_gaussian",
    "frechet_proxy",
    "load_config",
    "make_mixture",
    "parse_config",
    "precision_proxy",
    "pretrain",
    "read_metrics",
    "sweep",
    "unlearn",
]
