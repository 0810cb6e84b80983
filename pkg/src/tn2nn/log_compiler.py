"""Exact compilation of non-negative arithmetic circuits into log-space softplus networks."""
from __future__ import annotations

import math
from dataclasses import dataclass

from .ac_ir import INDICATOR, PRODUCT, ArithmeticCircuit
from .nn_ir import IDENTITY, LOG_ZERO, SOFTPLUS, NeuralNet, to_strict_softplus


@dataclass(frozen=True)
class CompileOptions:
    strict_softplus: bool = False
    delta_identity: float = 1.0
    delta_relu: float = 1e6
    log_zero: float = LOG_ZERO

    def __post_init__(self):
        if not (self.delta_identity > 0 and self.delta_relu > 0):
            raise ValueError("delta must be positive")


def logadd(net: NeuralNet, a: int, b: int) -> int:
    """log(e^a + e^b) as a + softplus(b - a)."""
    s = net.add(SOFTPLUS, [(b, 1.0), (a, -1.0)])
    return net.add(IDENTITY, [(a, 1.0), (s, 1.0)])


def log_sum_tree(net: NeuralNet, leaves: list[int], pad: int) -> int:
    width = 1 << max(0, (len(leaves) - 1).bit_length())
    layer = leaves + [pad] * (width - len(leaves))
    while len(layer) > 1:
        layer = [logadd(net, layer[j], layer[j + 1]) for j in range(0, len(layer), 2)]
    return layer[0]


def cone(ac: ArithmeticCircuit, roots) -> list[bool]:
    keep = [False] * len(ac)
    for r in roots:
        keep[r] = True
    for nid in range(len(ac) - 1, -1, -1):
        if keep[nid]:
            for u in ac.inputs[nid]:
                keep[u] = True
    return keep


def compile_roots_into(net: NeuralNet, ac: ArithmeticCircuit, roots, inputs: dict[tuple[int, int], int],
                       opts: CompileOptions = CompileOptions()) -> list[int]:
    """Append the log-network for the cone of ``roots``; return the ids computing ln(root)."""
    for w in ac.weights:
        if w is not None and (abs(w.imag).max(initial=0) != 0 or w.real.min(initial=0) < 0):
            raise ValueError("compile_nonneg requires real non-negative weights")
    keep = cone(ac, roots)
    pad = None
    o: dict[int, int] = {}
    for nid, kind in enumerate(ac.kinds):
        if not keep[nid]:
            continue
        src = ac.inputs[nid]
        if kind == INDICATOR:
            o[nid] = inputs[ac.labels[nid]]
        elif kind == PRODUCT:
            o[nid] = net.add(IDENTITY, [(o[u], 1.0) for u in src])
        else:
            leaves = []
            for u, w in zip(src, ac.weights[nid].real):
                b = math.log(w) if w > 0 else opts.log_zero
                leaves.append(net.add(IDENTITY, [(o[u], 1.0)], b))
            if not leaves:
                leaves = [net.const(opts.log_zero)]
            if len(leaves) == 1:
                o[nid] = leaves[0]
                continue
            if pad is None and len(leaves) & (len(leaves) - 1):
                pad = net.const(opts.log_zero)
            o[nid] = log_sum_tree(net, leaves, pad)
    return [o[r] for r in roots]


def compile_part_into(net: NeuralNet, part: ArithmeticCircuit, inputs: dict[tuple[int, int], int],
                      opts: CompileOptions = CompileOptions()) -> int:
    return compile_roots_into(net, part, [part.root], inputs, opts)[0]


def add_indicator_inputs(net: NeuralNet, dims) -> dict[tuple[int, int], int]:
    return {(i, k): net.add_input("indicator", site=i, value=k) for i, d in enumerate(dims) for k in range(d)}


def compile_nonneg(part: ArithmeticCircuit, opts: CompileOptions = CompileOptions()) -> NeuralNet:
    net = NeuralNet()
    inputs = add_indicator_inputs(net, part.dims)
    root = compile_part_into(net, part, inputs, opts)
    if net.act[root] != IDENTITY or net.ins[root] == [] or root in net.input_ids:
        root = net.add(IDENTITY, [(root, 1.0)])
    net.roots = [root]
    if opts.strict_softplus:
        net = to_strict_softplus(net, opts.delta_identity, opts.delta_relu)
    return net


def logadd_pair_subnet() -> NeuralNet:
    net = NeuralNet()
    a = net.add_input("value", name="o1")
    b = net.add_input("value", name="o2")
    net.roots = [logadd(net, a, b)]
    return net


def emulate_identity(delta: float) -> NeuralNet:
    """x as (softplus(delta x) - softplus(-delta x)) / delta."""
    if delta <= 0:
        raise ValueError("delta must be positive")
    net = NeuralNet()
    x = net.add_input("value", name="x")
    p = net.add(SOFTPLUS, [(x, delta)])
    q = net.add(SOFTPLUS, [(x, -delta)])
    net.roots = [net.add(IDENTITY, [(p, 1.0 / delta), (q, -1.0 / delta)])]
    return net
