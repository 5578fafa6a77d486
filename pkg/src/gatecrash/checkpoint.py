"""Line-oriented text checkpoints for trained nets.

Layout (UTF-8, one record per line)::

    GRADMDM-CKPT v1
    arch <skip|width> <input_dim> <hidden_dim> <classes> [<groups_per_layer>]
    data <seed> <n> <classes>            # optional dataset provenance
    block <kind> <fan_in> <fan_out> <cost>
    ...
    tau <value>
    <tensor name> <ndim> <dim...> <value...>

Tensor values are stored as 32-bit floats printed with 9 significant
digits, so a save/load round trip reproduces each weight to float32
precision (well within 1e-6 of the original for unit-scale weights).
"""

from __future__ import annotations

import numpy as np

from .nets import DynamicNet, GatedBlock

__all__ = [
    "CheckpointError",
    "NotACheckpointError",
    "CheckpointStructureError",
    "CheckpointDimensionError",
    "CheckpointTruncatedError",
    "save_checkpoint",
    "load_checkpoint",
]

MAGIC = "GRADMDM-CKPT v1"


class CheckpointError(RuntimeError):
    pass


class NotACheckpointError(CheckpointError):
    """File does not start with the checkpoint magic line."""


class CheckpointStructureError(CheckpointError):
    """Descriptor lines or the tensor inventory are inconsistent."""


class CheckpointDimensionError(CheckpointError):
    """A tensor's declared dimensions do not match the architecture."""


class CheckpointTruncatedError(CheckpointError):
    """The payload ends before all declared values were read."""


def _tensor_names(net: DynamicNet) -> list[tuple[str, tuple[int, ...]]]:
    names = []
    if net.arch == "skip":
        names.append(("stem.w", (net.hidden_dim, net.input_dim)))
        names.append(("stem.b", (net.hidden_dim,)))
    for i, blk in enumerate(net.blocks):
        names.append((f"b{i}.gate.w", blk.gate_w.shape))
        names.append((f"b{i}.gate.b", ()))
        names.append((f"b{i}.main.w", blk.main_w.shape))
        names.append((f"b{i}.main.b", blk.main_b.shape))
    names.append(("head.w", (net.classes, net.hidden_dim)))
    names.append(("head.b", (net.classes,)))
    return names


def _tensor_arrays(net: DynamicNet) -> list[np.ndarray]:
    return net.parameters()


def save_checkpoint(net: DynamicNet, path) -> None:
    lines = [MAGIC]
    arch = f"arch {net.arch} {net.input_dim} {net.hidden_dim} {net.classes}"
    if net.arch == "width":
        arch += f" {net.groups_per_layer}"
    lines.append(arch)
    if net.data_info is not None:
        seed, n, classes = net.data_info
        lines.append(f"data {seed} {n} {classes}")
    for blk in net.blocks:
        lines.append(
            f"block {blk.kind} {blk.gate_w.size} {blk.main_w.shape[0]} {blk.cost:.9g}"
        )
    lines.append(f"tau {net.tau:.9g}")
    for (name, _), arr in zip(_tensor_names(net), _tensor_arrays(net)):
        vals = np.asarray(arr, dtype=np.float32).reshape(-1)
        dims = " ".join(str(d) for d in np.shape(arr))
        head = f"{name} {np.ndim(arr)}" + (f" {dims}" if dims else "")
        lines.append(head + " " + " ".join(f"{v:.9g}" for v in vals))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def load_checkpoint(path) -> DynamicNet:
    with open(path, encoding="utf-8") as fh:
        lines = [ln.rstrip("\n") for ln in fh]
    if not lines or lines[0] != MAGIC:
        raise NotACheckpointError(f"{path}: not a checkpoint (bad magic line)")

    arch = None
    data_info = None
    block_specs = []
    tau = None
    i = 1
    while i < len(lines):
        tokens = lines[i].split()
        if not tokens:
            i += 1
            continue
        if tokens[0] == "arch":
            if len(tokens) not in (5, 6):
                raise CheckpointStructureError(f"bad arch line: {lines[i]!r}")
            arch = tokens[1:]
        elif tokens[0] == "data":
            if len(tokens) != 4:
                raise CheckpointStructureError(f"bad data line: {lines[i]!r}")
            data_info = tuple(int(t) for t in tokens[1:])
        elif tokens[0] == "block":
            if len(tokens) != 5:
                raise CheckpointStructureError(f"bad block line: {lines[i]!r}")
            block_specs.append((tokens[1], int(tokens[2]), int(tokens[3]), float(tokens[4])))
        elif tokens[0] == "tau":
            tau = float(tokens[1])
            i += 1
            break
        else:
            raise CheckpointStructureError(f"unknown descriptor line: {lines[i]!r}")
        i += 1
    if arch is None or tau is None or not block_specs:
        raise CheckpointStructureError("missing arch, block, or tau descriptor")

    kind = arch[0]
    if kind not in ("skip", "width"):
        raise CheckpointStructureError(f"unknown architecture kind {kind!r}")
    input_dim, hidden_dim, classes = (int(x) for x in arch[1:4])
    groups = int(arch[4]) if len(arch) == 6 else 0
    if kind == "width" and (groups < 1 or len(block_specs) % groups):
        raise CheckpointStructureError("width checkpoint needs a consistent group count")

    gsize = hidden_dim // groups if kind == "width" else hidden_dim
    blocks = []
    for j, (bkind, fan_in, fan_out, cost) in enumerate(block_specs):
        expect_kind = "skip" if kind == "skip" else "width-group"
        if bkind != expect_kind:
            raise CheckpointStructureError(f"block {j}: kind {bkind!r} does not fit arch {kind!r}")
        if fan_out != gsize:
            raise CheckpointDimensionError(f"block {j}: fan_out {fan_out} != expected {gsize}")
        offset = (j % groups) * gsize if kind == "width" else 0
        blocks.append(
            GatedBlock(
                kind=bkind,
                gate_w=np.zeros(fan_in),
                gate_b=np.zeros(()),
                main_w=np.zeros((fan_out, fan_in)),
                main_b=np.zeros(fan_out),
                cost=cost,
                offset=offset,
            )
        )

    net = DynamicNet(
        arch=kind,
        input_dim=input_dim,
        hidden_dim=hidden_dim,
        classes=classes,
        tau=tau,
        blocks=blocks,
        head_w=np.zeros((classes, hidden_dim)),
        head_b=np.zeros(classes),
        stem_w=np.zeros((hidden_dim, input_dim)) if kind == "skip" else None,
        stem_b=np.zeros(hidden_dim) if kind == "skip" else None,
        groups_per_layer=groups,
        data_info=data_info,
    )

    expected = _tensor_names(net)
    arrays = _tensor_arrays(net)
    tensor_lines = [ln for ln in lines[i:] if ln.strip()]
    if len(tensor_lines) < len(expected):
        raise CheckpointTruncatedError(
            f"payload ends after {len(tensor_lines)} of {len(expected)} tensors"
        )
    if len(tensor_lines) > len(expected):
        raise CheckpointStructureError(
            f"expected {len(expected)} tensors, found {len(tensor_lines)}"
        )
    for ln, (name, shape), target in zip(tensor_lines, expected, arrays):
        tokens = ln.split()
        if tokens[0] != name:
            raise CheckpointStructureError(f"expected tensor {name!r}, found {tokens[0]!r}")
        try:
            ndim = int(tokens[1])
            dims = tuple(int(t) for t in tokens[2 : 2 + ndim])
            values = [float(t) for t in tokens[2 + ndim :]]
        except (ValueError, IndexError) as exc:
            raise CheckpointTruncatedError(f"tensor {name!r}: unreadable payload") from exc
        if dims != tuple(shape):
            raise CheckpointDimensionError(f"tensor {name!r}: dims {dims} != expected {tuple(shape)}")
        count = int(np.prod(dims)) if dims else 1
        if len(values) != count:
            raise CheckpointTruncatedError(
                f"tensor {name!r}: expected {count} values, found {len(values)}"
            )
        target[...] = np.array(values, dtype=np.float64).reshape(shape)
    return net
