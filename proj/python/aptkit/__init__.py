"""Prompt-extended attention, its low-rank approximation module and the
associated parameter/FLOP accounting.

Thin re-export of the compiled core. All operations take and return float64
numpy arrays and are pure and deterministic.
"""

from ._core import (
    CostSpec,
    aggregate_softmax,
    approx_keys,
    apt_attention,
    apt_delta,
    apt_saving_vs_deep,
    cost_preset,
    cost_preset_names,
    cost_table_markdown,
    decompose_attention,
    exact_diffusion,
    fit_sequence_length,
    flops_apt,
    flops_deep_prompt,
    flops_shallow_prompt,
    params_apt,
    params_deep_prompt,
    params_shallow_prompt,
    prompt_extended_attention,
    run_identity_suite,
    self_attention,
    vk_transform_gap,
)

__all__ = [
    "CostSpec",
    "aggregate_softmax",
    "approx_keys",
    "apt_attention",
    "apt_delta",
    "apt_saving_vs_deep",
    "cost_preset",
    "cost_preset_names",
    "cost_table_markdown",
    "decompose_attention",
    "exact_diffusion",
    "fit_sequence_length",
    "flops_apt",
    "flops_deep_prompt",
    "flops_shallow_prompt",
    "params_apt",
    "params_deep_prompt",
    "params_shallow_prompt",
    "prompt_extended_attention",
    "run_identity_suite",
    "self_attention",
    "vk_transform_gap",
]

__version__ = "0.1.0"
