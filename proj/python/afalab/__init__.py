"""Behaviour-cloning pooling laboratory.

Thin Python surface over the C++ core: pooling kernels, the synthetic
token world, robustness metrics, and the config-driven experiment runner.
"""

try:
    from . import _afalab as _core  # installed wheel layout
except ImportError:  # build-tree layout: extension on PYTHONPATH
    import _afalab as _core

attention_entropy = _core.attention_entropy
attention_mass = _core.attention_mass
default_config = _core.default_config
expert_action = _core.expert_action
generate_demos_dir = _core.generate_demos_dir
gradient_audit = _core.gradient_audit
iqm = _core.iqm
lr_at = _core.lr_at
mean_pool = _core.mean_pool
pearson = _core.pearson
render_tokens = _core.render_tokens
run_experiment = _core.run_experiment
softmax_rows = _core.softmax_rows
spatial_softmax = _core.spatial_softmax
temporal_embed = _core.temporal_embed

__all__ = [
    "attention_entropy",
    "attention_mass",
    "default_config",
    "expert_action",
    "generate_demos_dir",
    "gradient_audit",
    "iqm",
    "lr_at",
    "mean_pool",
    "pearson",
    "render_tokens",
    "run_experiment",
    "softmax_rows",
    "spatial_softmax",
    "temporal_embed",
]
