"""Split a complex circuit into four non-negative circuits (re+, re-, im+, im-).

A real ``x`` is carried as ``x = x+ - x-`` with both halves non-negative, so sums
and products can be propagated without ever subtracting:

    x + y = (x+ + y+) - (x- + y-)
    x * y = (x+ y+ + x- y-) - (x+ y- + x- y+)
"""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .ac_ir import INDICATOR, PRODUCT, ArithmeticCircuit, CircuitError, eval_ac_nodes

PART_NAMES = ("re+", "re-", "im+", "im-")
RP, RM, IP, IM = range(4)


class InvariantViolation(AssertionError):
    pass


@dataclass
class QuadAC:
    """Four non-negative circuits over one shared node list.

    The component circuits reference each other's intermediate values (a re+
    product needs the re- and im+/- halves of its operands), so they live in a
    single graph with four roots; ``owner`` records which component each node
    belongs to (``None`` for the shared indicators).
    """

    body: ArithmeticCircuit
    owner: list[int | None]
    provenance: dict[int, tuple[int, int, int, int]]

    @property
    def roots(self) -> list[int]:
        return list(self.body.roots)

    @property
    def parts(self) -> tuple[ArithmeticCircuit, ...]:
        return tuple(_view(self.body, r) for r in self.body.roots)

    def part_edges(self, q: int) -> int:
        return sum(len(ins) for ins, o in zip(self.body.inputs, self.owner) if o == q)

    def part_nodes(self, q: int) -> int:
        return sum(1 for o in self.owner if o == q)

    def to_json(self) -> str:
        return json.dumps({
            "parts": {
                name: json.loads(p.to_json()) | {"owner": self.owner}
                for name, p in zip(PART_NAMES, self.parts)
            },
            "provenance": {str(k): list(v) for k, v in sorted(self.provenance.items())},
        })


def _view(body: ArithmeticCircuit, root: int) -> ArithmeticCircuit:
    view = ArithmeticCircuit(body.dims)
    view.kinds, view.inputs, view.weights, view.labels = body.kinds, body.inputs, body.weights, body.labels
    view._indicator = body._indicator
    view.roots = [root]
    return view


def _halves(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    return np.maximum(x, 0.0), np.maximum(-x, 0.0)


def split_complex(ac: ArithmeticCircuit) -> QuadAC:
    body = ArithmeticCircuit(ac.dims)
    body.add_indicators()
    owner: list[int | None] = [None] * len(body)
    prov: dict[int, tuple[int, int, int, int]] = {}

    for nid, kind in enumerate(ac.kinds):
        if kind == INDICATOR:
            ind = body.indicator(*ac.labels[nid])
            ids = [ind]
            for q in (RM, IP, IM):
                ids.append(body.wsum([ind], [0.0]))
                owner.append(q)
            prov[nid] = tuple(ids)
            continue

        if kind == PRODUCT:
            if len(ac.inputs[nid]) != 2:
                raise CircuitError(
                    f"product node {nid} has {len(ac.inputs[nid])} inputs; apply normalize_binary first"
                )
            x, y = (prov[u] for u in ac.inputs[nid])
            # (component of x, component of y) pairs feeding each output part
            table = {
                RP: [(RP, RP), (RM, RM), (IP, IM), (IM, IP)],
                RM: [(RP, RM), (RM, RP), (IP, IP), (IM, IM)],
                IP: [(RP, IP), (RM, IM), (IP, RP), (IM, RM)],
                IM: [(RP, IM), (RM, IP), (IP, RM), (IM, RP)],
            }
            ids = []
            for q in range(4):
                prods = [body.product([x[a], y[b]]) for a, b in table[q]]
                ids.append(body.wsum(prods, np.ones(4)))
                owner.extend([q] * 5)
            prov[nid] = tuple(ids)
            continue

        w = ac.weights[nid]
        ap, am = _halves(w.real)
        bp, bm = _halves(w.imag)
        srcs = [prov[u] for u in ac.inputs[nid]]
        # per input edge: (weight array, source component) for each output part
        table = {
            RP: [(ap, RP), (am, RM), (bp, IM), (bm, IP)],
            RM: [(ap, RM), (am, RP), (bp, IP), (bm, IM)],
            IP: [(ap, IP), (am, IM), (bp, RP), (bm, RM)],
            IM: [(ap, IM), (am, IP), (bp, RM), (bm, RP)],
        }
        ids = []
        for q in range(4):
            ins, ws = [], []
            for j, src in enumerate(srcs):
                for warr, comp in table[q]:
                    ins.append(src[comp])
                    ws.append(warr[j])
            ids.append(body.wsum(ins, ws))
            owner.append(q)
        prov[nid] = tuple(ids)

    body.roots = list(prov[ac.root])
    return QuadAC(body, owner, prov)


def eval_quad_batch(quad: QuadAC, states: np.ndarray) -> np.ndarray:
    """Part values, shape (4, batch)."""
    vals = eval_ac_nodes(quad.body, states, np.float64)
    out = np.stack([vals[r] for r in quad.roots])
    if np.any(out < 0):
        raise InvariantViolation("negative value in a non-negative part circuit")
    return out


def eval_quad(quad: QuadAC, s) -> tuple[float, float, float, float]:
    return tuple(float(v) for v in eval_quad_batch(quad, np.asarray([s]))[:, 0])


def recombine(parts: np.ndarray) -> np.ndarray:
    return (parts[RP] - parts[RM]) + 1j * (parts[IP] - parts[IM])


def cancellation_ratio(parts: np.ndarray) -> np.ndarray:
    """max part magnitude / |recombined value| per state (inf when the value is 0)."""
    z = np.abs(recombine(parts))
    top = parts.max(axis=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(z > 0, top / np.where(z > 0, z, 1.0), np.inf)
