"""Toy gated feed-forward networks with exact FLOPs accounting.

Two gate families are modelled:

* ``skip`` blocks (dynamic depth): a residual branch that either runs or
  is skipped entirely, the input passing through unchanged.
* ``width-group`` blocks (dynamic width): a dense layer split into unit
  groups, each group gated independently; a closed group contributes
  zeros to the layer output.

Every gate is a one-layer sigmoid subnet over the block input.  A gate
counts as activated when its soft value reaches the threshold ``tau``;
the branch then executes and its FLOPs cost is charged.  Gate subnets
and the stem/head are always executed and belong to the base cost.
FLOPs are counted as 2 * fan_in * fan_out per dense layer.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad

__all__ = [
    "GatedBlock",
    "DynamicNet",
    "GateReadout",
    "FlopsReport",
    "build_skip_net",
    "build_width_net",
    "forward_with_gates",
    "infer",
    "flops_report",
    "lambda_weights",
    "normalized_costs",
    "weights_checksum",
]


@dataclass
class GatedBlock:
    kind: str  # "skip" | "width-group"
    gate_w: np.ndarray  # (fan_in,)
    gate_b: np.ndarray  # scalar, shape ()
    main_w: np.ndarray  # (out, fan_in)
    main_b: np.ndarray  # (out,)
    cost: float  # MAC FLOPs of the optional branch
    offset: int = 0  # width groups: first unit of the layer this group fills

    def parameters(self):
        return [self.gate_w, self.gate_b, self.main_w, self.main_b]


@dataclass
class DynamicNet:
    arch: str  # "skip" | "width"
    input_dim: int
    hidden_dim: int
    classes: int
    tau: float
    blocks: list[GatedBlock]
    head_w: np.ndarray
    head_b: np.ndarray
    stem_w: np.ndarray | None = None  # skip arch only
    stem_b: np.ndarray | None = None
    groups_per_layer: int = 0  # width arch only
    data_info: tuple[int, int, int] | None = None  # (seed, n, classes) provenance

    @property
    def num_gates(self) -> int:
        return len(self.blocks)

    @property
    def base_flops(self) -> float:
        gates = sum(2.0 * b.gate_w.size for b in self.blocks)
        head = 2.0 * self.head_w.shape[1] * self.head_w.shape[0]
        stem = 0.0
        if self.stem_w is not None:
            stem = 2.0 * self.stem_w.shape[1] * self.stem_w.shape[0]
        return stem + head + gates

    @property
    def full_flops(self) -> float:
        return self.base_flops + sum(b.cost for b in self.blocks)

    def parameters(self) -> list[np.ndarray]:
        params = []
        if self.stem_w is not None:
            params += [self.stem_w, self.stem_b]
        for blk in self.blocks:
            params += blk.parameters()
        params += [self.head_w, self.head_b]
        return params


@dataclass
class GateReadout:
    index: int
    node: ad.Node | None  # soft gate value in the live graph
    value: float
    activated: bool
    cost: float
    weight: float  # cost share of this gate among all gates


@dataclass
class FlopsReport:
    full: float
    base: float
    used: float
    per_gate: list[tuple[bool, float]] = field(default_factory=list)


def normalized_costs(costs) -> list[float]:
    costs = [float(c) for c in costs]
    if any(c < 0 for c in costs):
        raise ValueError("gate costs must be non-negative")
    total = sum(costs)
    if total <= 0:
        raise ValueError("cannot weight gates: all costs are zero")
    return [c / total for c in costs]


def lambda_weights(net: DynamicNet) -> list[float]:
    """Per-gate cost shares; non-negative and summing to one."""
    return normalized_costs([b.cost for b in net.blocks])


def flops_report(net: DynamicNet, activated) -> FlopsReport:
    per_gate = [(bool(a), blk.cost) for a, blk in zip(activated, net.blocks)]
    used = net.base_flops + sum(c for a, c in per_gate if a)
    return FlopsReport(full=net.full_flops, base=net.base_flops, used=used, per_gate=per_gate)


def build_skip_net(
    rng,
    input_dim=64,
    hidden_dim=32,
    blocks=6,
    classes=2,
    tau=0.5,
    gate_gain=40.0,
    stem_gain=4.0,
    gate_subspace=4,
    center_input=None,
) -> DynamicNet:
    """Dynamic-depth net: linear stem, gated residual blocks, head.

    ``gate_gain`` and ``stem_gain`` scale the initial weights along the
    input-to-gate path.  At two layers of depth a unit-scale path barely
    reacts to the input; the hot start stands in for the gradient
    amplification a deep backbone would provide and keeps gates
    attackable through the input.  Gate directions are drawn from a
    shared ``gate_subspace``-dimensional subspace: gates keying on
    overlapping features is what makes their gradients interact, as they
    do when gates sit on one backbone.  ``center_input`` (typically the
    training-data mean) zeroes each gate's initial logit there so the hot
    gates start in their responsive range instead of saturated.
    """
    if blocks < 1:
        raise ValueError("need at least one gated block")
    stem_w = rng.normal(0.0, stem_gain * input_dim ** -0.5, (hidden_dim, input_dim))
    stem_b = np.zeros(hidden_dim)
    h_center = None
    if center_input is not None:
        h_center = stem_w @ np.asarray(center_input, dtype=np.float64).reshape(-1)
    basis = rng.normal(0.0, 1.0, (hidden_dim, max(1, gate_subspace)))
    blks = []
    for _ in range(blocks):
        gate_w = basis @ rng.normal(0.0, 1.0, basis.shape[1])
        # Normalize so every gate logit has input-gradient norm exactly
        # gate_gain through the stem; gates then share one attackability
        # scale instead of inheriting the stem's 5-6x singular spread.
        gate_w *= gate_gain / np.linalg.norm(stem_w.T @ gate_w)
        gate_b = np.zeros(())
        if h_center is not None:
            gate_b = np.asarray(-(gate_w @ h_center))
        blks.append(
            GatedBlock(
                kind="skip",
                gate_w=gate_w,
                gate_b=gate_b,
                main_w=rng.normal(0.0, hidden_dim ** -0.5, (hidden_dim, hidden_dim)),
                main_b=np.zeros(hidden_dim),
                cost=2.0 * hidden_dim * hidden_dim,
            )
        )
    return DynamicNet(
        arch="skip",
        input_dim=input_dim,
        hidden_dim=hidden_dim,
        classes=classes,
        tau=tau,
        blocks=blks,
        stem_w=stem_w,
        stem_b=stem_b,
        head_w=rng.normal(0.0, hidden_dim ** -0.5, (classes, hidden_dim)),
        head_b=np.zeros(classes),
    )


def build_width_net(
    rng,
    input_dim=64,
    hidden_dim=32,
    layers=3,
    groups=4,
    classes=2,
    tau=0.5,
    gate_gain=40.0,
    gate_subspace=4,
    center_input=None,
) -> DynamicNet:
    """Dynamic-width net: dense layers of independently gated unit groups.

    ``gate_gain``, ``gate_subspace`` and ``center_input`` play the same
    roles as for the skip net; first-layer gates read the raw input,
    deeper gates read the previous layer (centered at zero, where tanh
    units average out).
    """
    if layers < 1 or groups < 1:
        raise ValueError("need at least one layer with one group")
    if hidden_dim % groups:
        raise ValueError("hidden_dim must divide evenly into groups")
    gsize = hidden_dim // groups
    center = None
    if center_input is not None:
        center = np.asarray(center_input, dtype=np.float64).reshape(-1)
    bases = {}
    blks = []
    fan_in = input_dim
    for layer in range(layers):
        if fan_in not in bases:
            bases[fan_in] = rng.normal(0.0, 1.0, (fan_in, max(1, gate_subspace)))
        basis = bases[fan_in]
        for g in range(groups):
            gate_w = basis @ rng.normal(0.0, 1.0, basis.shape[1])
            gate_w *= gate_gain / np.linalg.norm(gate_w)
            gate_b = np.zeros(())
            if layer == 0 and center is not None:
                gate_b = np.asarray(-(gate_w @ center))
            blks.append(
                GatedBlock(
                    kind="width-group",
                    gate_w=gate_w,
                    gate_b=gate_b,
                    main_w=rng.normal(0.0, fan_in ** -0.5, (gsize, fan_in)),
                    main_b=np.zeros(gsize),
                    cost=2.0 * fan_in * gsize,
                    offset=g * gsize,
                )
            )
        fan_in = hidden_dim
    return DynamicNet(
        arch="width",
        input_dim=input_dim,
        hidden_dim=hidden_dim,
        classes=classes,
        tau=tau,
        blocks=blks,
        groups_per_layer=groups,
        head_w=rng.normal(0.0, hidden_dim ** -0.5, (classes, hidden_dim)),
        head_b=np.zeros(classes),
    )


def _scatter_matrix(hidden_dim, offset, gsize):
    s = np.zeros((hidden_dim, gsize))
    s[offset : offset + gsize, np.arange(gsize)] = 1.0
    return s


def _forward_graph(net, x, graph, *, straight_through=False, force_open=False, wrap=None):
    """Shared forward builder.

    ``wrap`` maps a weight array to its graph node (default: constant);
    training passes a wrapper that returns variables so backward reaches
    the weights.  In straight-through mode every branch is built and
    multiplied by a hard 0/1 gate whose backward is the identity
    (training).  Otherwise branches are built only when their gate clears
    ``tau`` (inference and attack), which is numerically identical.
    """
    if wrap is None:
        wrap = graph.constant
    gate_nodes = []
    activated = []

    def dense(w, b, inp):
        return ad.add(ad.matmul(wrap(w), inp), wrap(b))

    def gate_of(blk, inp):
        gate = ad.sigmoid(dense(blk.gate_w, blk.gate_b, inp))
        act = True if force_open else float(gate.value) >= net.tau
        gate_nodes.append(gate)
        activated.append(act)
        return gate, act

    # Straight-through training: the forward product uses the hard 0/1
    # gate, the backward pass sees the sigmoid's own derivative (the
    # hard threshold passes gradient through to the soft gate).
    if net.arch == "skip":
        # Linear stem: keeps the input-to-gate path free of squashing, so
        # gate sensitivity to the input survives training.
        h = dense(net.stem_w, net.stem_b, x)
        for blk in net.blocks:
            gate, act = gate_of(blk, h)
            if straight_through and not force_open:
                hard = ad.hard_gate(gate, net.tau)
                branch = ad.tanh(dense(blk.main_w, blk.main_b, h))
                h = ad.add(h, ad.hadamard(hard, branch))
            elif act:
                h = ad.add(h, ad.tanh(dense(blk.main_w, blk.main_b, h)))
    elif net.arch == "width":
        h = x
        k = net.groups_per_layer
        for layer_start in range(0, len(net.blocks), k):
            inp = h
            acc = None
            for blk in net.blocks[layer_start : layer_start + k]:
                gate, act = gate_of(blk, inp)
                if not (act or (straight_through and not force_open)):
                    continue
                units = ad.tanh(dense(blk.main_w, blk.main_b, inp))
                scatter = graph.constant(
                    _scatter_matrix(net.hidden_dim, blk.offset, blk.main_w.shape[0])
                )
                contrib = ad.matmul(scatter, units)
                if straight_through and not force_open:
                    contrib = ad.hadamard(ad.hard_gate(gate, net.tau), contrib)
                acc = contrib if acc is None else ad.add(acc, contrib)
            h = acc if acc is not None else graph.constant(np.zeros(net.hidden_dim))
    else:
        raise ValueError(f"unknown architecture kind: {net.arch}")

    logits = dense(net.head_w, net.head_b, h)
    return logits, gate_nodes, activated


def _as_input_node(net, x, graph):
    if isinstance(x, ad.Node):
        if x.graph is not graph:
            raise ValueError("input node belongs to a different graph")
        if x.value.size != net.input_dim:
            raise ad.ShapeError(
                f"input has {x.value.size} entries, net expects {net.input_dim}"
            )
        return x
    arr = np.asarray(x, dtype=np.float64).reshape(-1)
    if arr.size != net.input_dim:
        raise ad.ShapeError(f"input has {arr.size} entries, net expects {net.input_dim}")
    if arr.min() < 0.0 or arr.max() > 1.0:
        raise ValueError("inputs must lie in [0, 1]")
    return graph.constant(arr)


def forward_with_gates(net, x, graph, *, straight_through=False, force_open=False, wrap=None):
    """Run the net, exposing every soft gate as a differentiable node.

    Returns (logits node, gate readouts, flops report).  The optional
    branch of gate i executes iff its soft value reaches ``net.tau``
    (or ``force_open`` clamps everything on).
    """
    x = _as_input_node(net, x, graph)
    logits, gate_nodes, activated = _forward_graph(
        net, x, graph, straight_through=straight_through, force_open=force_open, wrap=wrap
    )
    lam = lambda_weights(net)
    readouts = [
        GateReadout(
            index=i,
            node=gate_nodes[i],
            value=float(gate_nodes[i].value),
            activated=activated[i],
            cost=net.blocks[i].cost,
            weight=lam[i],
        )
        for i in range(len(net.blocks))
    ]
    return logits, readouts, flops_report(net, activated)


def _sigmoid_np(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def infer(net, x):
    """Graph-free forward pass: (gate values, activation flags, flops, logits).

    Kept independent of the autodiff path so the two implementations can
    cross-check each other.
    """
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    if x.size != net.input_dim:
        raise ad.ShapeError(f"input has {x.size} entries, net expects {net.input_dim}")
    gates = []
    acts = []
    if net.arch == "skip":
        h = net.stem_w @ x + net.stem_b
        for blk in net.blocks:
            g = float(_sigmoid_np(np.atleast_1d(blk.gate_w @ h + blk.gate_b))[0])
            act = g >= net.tau
            gates.append(g)
            acts.append(act)
            if act:
                h = h + np.tanh(blk.main_w @ h + blk.main_b)
    else:
        h = x
        k = net.groups_per_layer
        for layer_start in range(0, len(net.blocks), k):
            inp = h
            out = np.zeros(net.hidden_dim)
            for blk in net.blocks[layer_start : layer_start + k]:
                g = float(_sigmoid_np(np.atleast_1d(blk.gate_w @ inp + blk.gate_b))[0])
                act = g >= net.tau
                gates.append(g)
                acts.append(act)
                if act:
                    gsize = blk.main_w.shape[0]
                    out[blk.offset : blk.offset + gsize] = np.tanh(
                        blk.main_w @ inp + blk.main_b
                    )
            h = out
    logits = net.head_w @ h + net.head_b
    return np.array(gates), np.array(acts), flops_report(net, acts), logits


def weights_checksum(net: DynamicNet) -> str:
    digest = hashlib.sha256()
    for p in net.parameters():
        digest.update(np.ascontiguousarray(p).tobytes())
    return digest.hexdigest()
