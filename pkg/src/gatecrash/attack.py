"""The perturbation attack: gradient geometry, update rules, main loop.

The attack maximizes the number of activated gates while keeping the
perturbation small.  Beyond plain joint optimization it implements two
gradient manipulations:

* a power-weighted gate loss that concentrates effort on the gates
  closest to their threshold, and
* conflict masking: when the gradient that opens closed gates opposes
  the gradient that keeps open gates open, only its orthogonal
  component is applied, so newly-attacked gates stop knocking
  already-open gates shut.

Update methods
    relaxed    joint all-gates relaxation (single loss)
    baseline   imperceptibility + deactivated-gate loss (single loss)
    pl         baseline with the power-weighted gate loss
    cgm        conflict masking on the plain gate gradient
    gradmdm    conflict masking on the power-weighted gate gradient
    joint-pf   power loss and activated-gate loss summed, no masking

All methods optimize the raw perturbation with adaptive-moment descent;
the first ``warmup_frac`` of iterations run the baseline update (except
for ``relaxed``/``baseline`` themselves, which run unchanged throughout).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from . import losses as L
from .metrics import mse_255, psnr
from .nets import forward_with_gates, lambda_weights
from .optim import Adam, NormSGD

__all__ = [
    "METHODS",
    "AttackConfig",
    "TraceRow",
    "AttackResult",
    "AttackState",
    "project",
    "reject",
    "mask_gradient",
    "attack_step",
    "run_attack",
]

METHODS = ("relaxed", "baseline", "pl", "cgm", "gradmdm", "joint-pf")
_ALIASES = {"power-only": "pl", "cgm-only": "cgm", "joint-PF": "joint-pf", "joint_pf": "joint-pf"}


def canonical_method(name: str) -> str:
    name = _ALIASES.get(name, name)
    if name not in METHODS:
        raise ValueError(f"unknown method {name!r}; expected one of {METHODS}")
    return name


# ---------------------------------------------------------------------------
# gradient geometry


def project(g_c: np.ndarray, g_f: np.ndarray) -> np.ndarray:
    """Component of g_c along g_f.  Caller guarantees g_f is not degenerate."""
    g_c = np.asarray(g_c, dtype=np.float64)
    g_f = np.asarray(g_f, dtype=np.float64)
    return (np.vdot(g_c, g_f) / np.vdot(g_f, g_f)) * g_f


def reject(g_c: np.ndarray, g_f: np.ndarray) -> np.ndarray:
    """Component of g_c orthogonal to g_f; project + reject == g_c."""
    return np.asarray(g_c, dtype=np.float64) - project(g_c, g_f)


def _mask_with_diag(g_c, g_f, eps_gf):
    g_c = np.asarray(g_c, dtype=np.float64)
    g_f = np.asarray(g_f, dtype=np.float64)
    nf = float(np.linalg.norm(g_f))
    if nf <= eps_gf:
        return g_c, False, math.nan
    nc = float(np.linalg.norm(g_c))
    dot = float(np.vdot(g_c, g_f))
    theta = math.nan
    if nc > 0.0:
        theta = math.degrees(math.acos(max(-1.0, min(1.0, dot / (nc * nf)))))
    if dot >= 0.0:
        return g_c, False, theta
    return reject(g_c, g_f), True, theta


def mask_gradient(g_c: np.ndarray, g_f: np.ndarray, eps_gf: float = 1e-12) -> np.ndarray:
    """Drop the component of g_c that opposes g_f.

    Returns g_c unchanged when g_f is degenerate (below ``eps_gf``) or
    when the two gradients agree; otherwise returns the rejection of
    g_c from g_f, which never has negative alignment with g_f.
    """
    masked, _, _ = _mask_with_diag(g_c, g_f, eps_gf)
    return masked


# ---------------------------------------------------------------------------
# configuration and results


@dataclass
class AttackConfig:
    gamma: float = 100.0  # imperceptibility weight
    alpha: float = 4.0  # power-loss exponent
    tau: float = 0.5
    iterations: int = 100
    warmup_frac: float = 0.2
    method: str = "gradmdm"
    mapping: str = "tanh"
    norm: str = "l2"
    class_loss_weight: float = 0.0
    # "norm-sgd" takes direction-true steps of size step_size; masking's
    # whole point is the direction of the combined gradient, which
    # adaptive-moment preconditioning would rescale per-coordinate and
    # thereby re-introduce the masked-out component.  "adam" is kept as
    # an alternative.
    optimizer: str = "norm-sgd"
    step_size: float = 0.05
    beta1: float = 0.9
    beta2: float = 0.999
    eps_opt: float = 1e-8
    eps_gf: float = 1e-12
    eps_map: float = 1e-6

    @property
    def use_class_loss(self) -> bool:
        return self.class_loss_weight > 0

    def validate(self):
        if self.gamma < 0:
            raise ValueError("gamma must be >= 0")
        if self.alpha < 1:
            raise ValueError("alpha must be >= 1")
        if not 0 < self.tau < 1:
            raise ValueError("tau must lie in (0, 1)")
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if not 0 <= self.warmup_frac <= 1:
            raise ValueError("warmup_frac must lie in [0, 1]")
        canonical_method(self.method)
        if self.mapping not in L.MAP_MODES:
            raise ValueError(f"unknown mapping {self.mapping!r}")
        if self.norm not in ("l2", "linf"):
            raise ValueError(f"unknown norm {self.norm!r}")
        if self.class_loss_weight < 0:
            raise ValueError("class_loss_weight must be >= 0")
        if self.optimizer not in ("norm-sgd", "adam"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if self.eps_gf < 0:
            raise ValueError("eps_gf must be >= 0")
        if self.step_size <= 0:
            raise ValueError("step_size must be > 0")


@dataclass
class TraceRow:
    """State after one update step, plus what the step did.

    ``mse_term`` and ``complexity_term`` are the loss values of the
    step's method evaluated at the post-update perturbation, so the last
    row always describes the final state.
    """

    iteration: int
    mse_term: float
    complexity_term: float
    gate_values: tuple
    activated: int
    used_flops: float
    masked: bool
    theta_deg: float


@dataclass
class AttackResult:
    delta: np.ndarray
    x_adv: np.ndarray
    clean_flops: float
    attacked_flops: float
    full_flops: float
    base_flops: float
    mse_255: float
    psnr_db: float
    trace: list[TraceRow] = field(default_factory=list)
    clean_pattern: tuple = ()
    clean_gate_values: tuple = ()


# ---------------------------------------------------------------------------
# the loop


class _Eval:
    """One forward pass at the current perturbation, with all loss nodes."""

    def __init__(self, net, x0, delta_value, config, lam, label):
        self.graph = ad.Graph()
        self.delta_node = self.graph.variable(delta_value)
        self.x_adv = L.map_input(x0, self.delta_node, config.mapping, config.eps_map)
        self.logits, self.readouts, self.flops = forward_with_gates(net, self.x_adv, self.graph)
        self.mse_node = L.imperceptibility_loss(x0, self.x_adv, config.norm)
        self.complexity_node = L.complexity_loss(self.readouts, config.tau, lam)
        self.power_node = L.power_loss(self.readouts, config.tau, lam, config.alpha)
        self.finished_node = L.finished_loss(self.readouts, config.tau, lam)
        self.relaxed_node = L.relaxed_gate_loss(self.readouts, config.tau, lam)
        self.class_node = None
        if config.use_class_loss:
            if label is None:
                raise ValueError("class_loss_weight is set but no label was given")
            self.class_node = L.classification_loss(self.logits, int(label))

    def grad(self, node) -> np.ndarray:
        return self.graph.backward(node)[self.delta_node]

    def gate_values(self) -> tuple:
        return tuple(r.value for r in self.readouts)

    def activated_count(self) -> int:
        return sum(1 for r in self.readouts if r.activated)


@dataclass
class AttackState:
    net: object
    x0: np.ndarray
    config: AttackConfig
    label: object
    lam: list[float]
    delta: np.ndarray
    opt: Adam
    current: _Eval
    iteration: int = 0

    def refresh(self):
        self.current = _Eval(
            self.net, self.x0, self.delta, self.config, self.lam, self.label
        )


def _composed_direction(ev: _Eval, cfg: AttackConfig, gate_node) -> np.ndarray:
    total = ad.add(ad.scale(ev.mse_node, cfg.gamma), gate_node)
    if ev.class_node is not None:
        total = ad.add(total, ad.scale(ev.class_node, cfg.class_loss_weight))
    return ev.grad(total)


def attack_step(state: AttackState, method: str) -> TraceRow:
    """Apply one update of ``method`` and return the resulting trace row."""
    cfg = state.config
    ev = state.current
    masked = False
    theta = math.nan

    if method == "relaxed":
        direction = _composed_direction(ev, cfg, ev.relaxed_node)
    elif method == "baseline":
        direction = _composed_direction(ev, cfg, ev.complexity_node)
    elif method == "pl":
        direction = _composed_direction(ev, cfg, ev.power_node)
    elif method == "joint-pf":
        direction = _composed_direction(ev, cfg, ad.add(ev.power_node, ev.finished_node))
    elif method in ("cgm", "gradmdm"):
        gate_node = ev.complexity_node if method == "cgm" else ev.power_node
        g_c = ev.grad(gate_node)
        g_f = ev.grad(ev.finished_node)
        g_masked, masked, theta = _mask_with_diag(g_c, g_f, cfg.eps_gf)
        direction = g_masked + cfg.gamma * ev.grad(ev.mse_node)
        if ev.class_node is not None:
            direction = direction + cfg.class_loss_weight * ev.grad(ev.class_node)
    else:
        raise ValueError(f"unknown method {method!r}")

    state.opt.step([direction])
    state.iteration += 1
    state.refresh()

    new = state.current
    if method == "relaxed":
        comp = float(new.relaxed_node.value)
    elif method in ("baseline", "cgm"):
        comp = float(new.complexity_node.value)
    elif method in ("pl", "gradmdm"):
        comp = float(new.power_node.value)
    else:  # joint-pf
        comp = float(new.power_node.value) + float(new.finished_node.value)
    return TraceRow(
        iteration=state.iteration - 1,
        mse_term=float(new.mse_node.value),
        complexity_term=comp,
        gate_values=new.gate_values(),
        activated=new.activated_count(),
        used_flops=new.flops.used,
        masked=masked,
        theta_deg=theta,
    )


def run_attack(net, x0, config: AttackConfig, label=None) -> AttackResult:
    """Optimize a perturbation for one input; the net is never modified.

    The clean label is only consulted when the classification loss is
    enabled.  Deterministic: no randomness enters the loop, so identical
    inputs give bit-identical results.
    """
    config.validate()
    x0 = np.asarray(x0, dtype=np.float64).reshape(-1)
    if x0.min() < 0.0 or x0.max() > 1.0:
        raise ValueError("inputs must lie in [0, 1]")
    method = canonical_method(config.method)
    lam = lambda_weights(net)

    state = AttackState(
        net=net,
        x0=x0,
        config=config,
        label=label,
        lam=lam,
        delta=np.zeros_like(x0),
        opt=None,
        current=None,
    )
    if config.optimizer == "adam":
        state.opt = Adam(
            [state.delta],
            step_size=config.step_size,
            beta1=config.beta1,
            beta2=config.beta2,
            eps=config.eps_opt,
        )
    else:
        state.opt = NormSGD([state.delta], step_size=config.step_size)
    state.refresh()

    clean = state.current
    clean_flops = clean.flops.used
    clean_pattern = tuple(r.activated for r in clean.readouts)
    clean_gates = clean.gate_values()

    warmup = 0
    if method not in ("relaxed", "baseline"):
        warmup = math.ceil(config.warmup_frac * config.iterations)
    trace = []
    for t in range(config.iterations):
        step_method = "baseline" if t < warmup else method
        trace.append(attack_step(state, step_method))

    final = state.current
    x_adv = final.x_adv.value.copy()
    err = mse_255(x0, x_adv)
    return AttackResult(
        delta=state.delta.copy(),
        x_adv=x_adv,
        clean_flops=clean_flops,
        attacked_flops=final.flops.used,
        full_flops=net.full_flops,
        base_flops=net.base_flops,
        mse_255=err,
        psnr_db=psnr(err),
        trace=trace,
        clean_pattern=clean_pattern,
        clean_gate_values=clean_gates,
    )
