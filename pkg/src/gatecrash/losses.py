"""Loss builders for the perturbation attack.

All builders return scalar graph nodes.  Gate-side losses take the gate
readouts of a live forward pass together with the activation threshold
``tau`` and the per-gate cost weights, and follow a common subgradient
convention: a gate sitting exactly on the threshold receives zero
gradient from both the deactivated-side and the activated-side loss
(it already counts as activated for FLOPs purposes).
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad

__all__ = [
    "map_input",
    "imperceptibility_loss",
    "complexity_loss",
    "power_loss",
    "finished_loss",
    "relaxed_gate_loss",
    "relaxed_loss",
    "classification_loss",
]

MAP_MODES = ("tanh", "clamp", "tanh-raw")


def map_input(x0, delta: ad.Node, mode: str, eps_map: float = 1e-6) -> ad.Node:
    """Map a raw perturbation onto a valid image in [0, 1].

    ``tanh``: squash through 0.5*(tanh(w0 + delta) + 1) where w0 is the
    arctanh preimage of x0 (pre-squeezed away from 0/1 by ``eps_map``),
    so delta = 0 reproduces x0 and the map is differentiable everywhere.
    ``tanh-raw``: same squash but w0 = x0 taken literally; delta = 0 then
    does NOT reproduce x0.  ``clamp``: plain projection clip(x0+delta, 0, 1).
    """
    graph = delta.graph
    x0 = np.asarray(x0, dtype=np.float64).reshape(-1)
    if x0.shape != delta.value.shape:
        raise ad.ShapeError(f"x0 {x0.shape} and delta {delta.value.shape} differ")
    if mode == "tanh":
        squeezed = np.clip(x0, eps_map, 1.0 - eps_map)
        w0 = graph.constant(np.arctanh(2.0 * squeezed - 1.0))
        z = ad.tanh(ad.add(w0, delta))
        return ad.scale(ad.add(z, graph.constant(np.asarray(1.0))), 0.5)
    if mode == "tanh-raw":
        z = ad.tanh(ad.add(graph.constant(x0), delta))
        return ad.scale(ad.add(z, graph.constant(np.asarray(1.0))), 0.5)
    if mode == "clamp":
        shifted = ad.add(graph.constant(x0), delta)
        return ad.clip_max_const(ad.clip_min_const(shifted, 1.0), 0.0)
    raise ValueError(f"unknown mapping mode {mode!r}")


def imperceptibility_loss(x0, x_adv: ad.Node, norm: str = "l2") -> ad.Node:
    """Distance between clean and perturbed input: squared L2 or hard L-inf."""
    graph = x_adv.graph
    x0 = np.asarray(x0, dtype=np.float64).reshape(-1)
    if x0.shape != x_adv.value.shape:
        raise ad.ShapeError(f"x0 {x0.shape} and x_adv {x_adv.value.shape} differ")
    diff = ad.sub(x_adv, graph.constant(x0))
    if norm == "l2":
        return ad.sq_l2(diff)
    if norm == "linf":
        return ad.max_abs(diff)
    raise ValueError(f"unknown norm {norm!r}")


def _weighted_sum(terms):
    acc = None
    for t in terms:
        acc = t if acc is None else ad.add(acc, t)
    return acc


def _check_alignment(readouts, weights):
    if len(weights) != len(readouts):
        raise ValueError(f"{len(weights)} weights for {len(readouts)} gates")


def complexity_loss(readouts, tau, weights) -> ad.Node:
    """Push deactivated gates up: -sum_i w_i * min(G_i, tau).

    Gradient support is exactly the strictly-deactivated gates.
    """
    _check_alignment(readouts, weights)
    return _weighted_sum(
        ad.scale(ad.clip_min_const(r.node, tau), -w) for r, w in zip(readouts, weights)
    )


def power_loss(readouts, tau, weights, alpha) -> ad.Node:
    """Complexity loss with each gate term raised to ``alpha``.

    Larger alpha concentrates gradient on the gates closest to the
    threshold; alpha = 1 reproduces the plain complexity loss exactly.
    """
    if alpha < 1:
        raise ValueError(f"power exponent must be >= 1, got {alpha}")
    _check_alignment(readouts, weights)
    return _weighted_sum(
        ad.scale(ad.pow_const(ad.clip_min_const(r.node, tau), alpha), -w)
        for r, w in zip(readouts, weights)
    )


def finished_loss(readouts, tau, weights) -> ad.Node:
    """Track activated gates: -sum_i w_i * max(G_i, tau).

    Only used to obtain the gradient direction that keeps open gates
    open; its gradient support is exactly the strictly-activated gates.
    """
    _check_alignment(readouts, weights)
    return _weighted_sum(
        ad.scale(ad.clip_max_const(r.node, tau), -w) for r, w in zip(readouts, weights)
    )


def relaxed_gate_loss(readouts, tau, weights) -> ad.Node:
    """Penalize every gate regardless of state: -sum_i w_i * (G_i - tau)."""
    _check_alignment(readouts, weights)
    graph = readouts[0].node.graph
    tau_c = graph.constant(np.asarray(float(tau)))
    return _weighted_sum(
        ad.scale(ad.sub(r.node, tau_c), -w) for r, w in zip(readouts, weights)
    )


def relaxed_loss(x0, x_adv, readouts, gamma, tau, weights, norm="l2") -> ad.Node:
    """Joint relaxation: gamma * imperceptibility + all-gates penalty."""
    imp = imperceptibility_loss(x0, x_adv, norm)
    return ad.add(ad.scale(imp, gamma), relaxed_gate_loss(readouts, tau, weights))


def classification_loss(logits: ad.Node, label: int) -> ad.Node:
    """Softmax cross-entropy against the clean label (accuracy preservation)."""
    return ad.cross_entropy_logits(logits, label)
