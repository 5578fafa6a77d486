"""gatecrash: energy-oriented adversarial attacks on gated dynamic networks.

Trains toy networks whose gates skip computation on easy inputs, then
optimizes input perturbations that force those gates open, maximizing
inference FLOPs while keeping the perturbation imperceptible.
"""

from .attack import (
    AttackConfig,
    AttackResult,
    TraceRow,
    mask_gradient,
    project,
    reject,
    run_attack,
)
from .checkpoint import load_checkpoint, save_checkpoint
from .data import SynthDataset, synth_dataset
from .metrics import SampleMetrics, arp, mean_arp, mse_255, psnr
from .nets import (
    DynamicNet,
    FlopsReport,
    GatedBlock,
    GateReadout,
    build_skip_net,
    build_width_net,
    forward_with_gates,
    infer,
    lambda_weights,
)
from .train import DegenerateGatingError, TrainConfig, evaluate_gating, train_toy_net

__version__ = "0.1.0"

__all__ = [
    "AttackConfig",
    "AttackResult",
    "TraceRow",
    "mask_gradient",
    "project",
    "reject",
    "run_attack",
    "load_checkpoint",
    "save_checkpoint",
    "SynthDataset",
    "synth_dataset",
    "SampleMetrics",
    "arp",
    "mean_arp",
    "mse_255",
    "psnr",
    "DynamicNet",
    "FlopsReport",
    "GatedBlock",
    "GateReadout",
    "build_skip_net",
    "build_width_net",
    "forward_with_gates",
    "infer",
    "lambda_weights",
    "DegenerateGatingError",
    "TrainConfig",
    "evaluate_gating",
    "train_toy_net",
    "__version__",
]
