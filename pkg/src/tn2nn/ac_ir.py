"""Arithmetic-circuit IR: indicator inputs, product nodes and complex weighted sums."""
from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .planner import ContractionPlan, operand_shapes
from .tensor_core import MPS

INDICATOR, PRODUCT, WSUM = "indicator", "product", "wsum"


class CircuitError(ValueError):
    pass


class ArithmeticCircuit:
    """A DAG stored in topological order; node ids are list positions."""

    def __init__(self, dims: Sequence[int] = ()):
        self.dims: tuple[int, ...] = tuple(dims)
        self.kinds: list[str] = []
        self.inputs: list[list[int]] = []
        self.weights: list[np.ndarray | None] = []
        self.labels: list[tuple[int, int] | None] = []
        self.roots: list[int] = []
        self._indicator: dict[tuple[int, int], int] = {}

    def __len__(self):
        return len(self.kinds)

    def _append(self, kind, inputs, weights, label=None) -> int:
        nid = len(self.kinds)
        for u in inputs:
            if not 0 <= u < nid:
                raise CircuitError(f"node {nid} references {u}, which is not earlier in the order")
        self.kinds.append(kind)
        self.inputs.append([int(u) for u in inputs])
        self.weights.append(weights)
        self.labels.append(label)
        return nid

    def indicator(self, site: int, value: int) -> int:
        key = (site, value)
        if key not in self._indicator:
            self._indicator[key] = self._append(INDICATOR, [], None, key)
        return self._indicator[key]

    def add_indicators(self):
        for i, d in enumerate(self.dims):
            for k in range(d):
                self.indicator(i, k)

    def product(self, inputs: Sequence[int]) -> int:
        return self._append(PRODUCT, inputs, None)

    def wsum(self, inputs: Sequence[int], weights) -> int:
        w = np.asarray(weights, dtype=np.complex128).reshape(-1)
        if len(w) != len(inputs):
            raise CircuitError("weight count does not match input count")
        return self._append(WSUM, inputs, w)

    @property
    def root(self) -> int:
        return self.roots[0]

    def to_json(self) -> str:
        nodes = []
        for kind, ins, w, lab in zip(self.kinds, self.inputs, self.weights, self.labels):
            row = {"kind": kind, "inputs": ins}
            if kind == WSUM:
                row["w_re"] = [float(x) for x in w.real]
                row["w_im"] = [float(x) for x in w.imag]
            if kind == INDICATOR:
                row["site"], row["value"] = lab
            nodes.append(row)
        return json.dumps({"dims": list(self.dims), "nodes": nodes, "roots": self.roots})

    @classmethod
    def from_json(cls, text: str) -> ArithmeticCircuit:
        doc = json.loads(text)
        ac = cls(doc.get("dims", ()))
        for row in doc["nodes"]:
            if row["kind"] == INDICATOR:
                nid = ac._append(INDICATOR, [], None, (row["site"], row["value"]))
                ac._indicator[(row["site"], row["value"])] = nid
            elif row["kind"] == PRODUCT:
                ac.product(row["inputs"])
            else:
                ac.wsum(row["inputs"], np.asarray(row["w_re"]) + 1j * np.asarray(row["w_im"]))
        ac.roots = list(doc["roots"])
        return ac


@dataclass(frozen=True)
class ACStats:
    """Size statistics; ``w_max`` reads each complex weight by its modulus."""

    n: int
    m: int
    l: int
    w_max: float
    n_inputs: int


def lower_to_ac(mps: MPS, plan: ContractionPlan) -> ArithmeticCircuit:
    shapes = operand_shapes(mps, plan)
    ac = ArithmeticCircuit(mps.dims)
    ac.add_indicators()
    mats: list[np.ndarray] = []
    for i, st in enumerate(plan.steps):
        if st.kind == "embed":
            a = mps.sites[st.site].to_array()
            l, d, r = a.shape
            ind = [ac.indicator(st.site, k) for k in range(d)]
            m = np.empty((l, r), dtype=np.int64)
            for x in range(l):
                for y in range(r):
                    m[x, y] = ac.wsum(ind, a[x, :, y])
            mats.append(m)
            continue
        left, right = mats[st.left], mats[st.right]
        p, q = shapes[st.left]
        r = shapes[st.right][1]
        m = np.empty((p, r), dtype=np.int64)
        for x in range(p):
            for y in range(r):
                if q == 1:
                    m[x, y] = ac.product(_flat_factors(ac, [left[x, 0], right[0, y]]))
                else:
                    prods = [ac.product([left[x, t], right[t, y]]) for t in range(q)]
                    m[x, y] = ac.wsum(prods, np.ones(q))
        mats.append(m)
    ac.roots = [int(mats[-1][0, 0])]
    return ac


def _flat_factors(ac: ArithmeticCircuit, ids: list[int]) -> list[int]:
    out = []
    for u in ids:
        if ac.kinds[u] == PRODUCT:
            out.extend(ac.inputs[u])
        else:
            out.append(int(u))
    return out


def _indicator_values(ac: ArithmeticCircuit, states: np.ndarray) -> dict[int, np.ndarray]:
    states = np.atleast_2d(np.asarray(states, dtype=np.int64))
    if states.shape[1] != len(ac.dims):
        raise CircuitError(f"state length {states.shape[1]} != {len(ac.dims)} sites")
    if np.any(states < 0) or np.any(states >= np.asarray(ac.dims)):
        raise CircuitError("basis state index outside the circuit's indicator set")
    return {
        nid: (states[:, lab[0]] == lab[1]).astype(np.float64)
        for nid, lab in enumerate(ac.labels)
        if lab is not None
    }


def eval_ac_nodes(ac: ArithmeticCircuit, states: np.ndarray, dtype=np.complex128) -> list[np.ndarray]:
    ind = _indicator_values(ac, states)
    vals: list[np.ndarray] = []
    for nid, kind in enumerate(ac.kinds):
        if kind == INDICATOR:
            vals.append(ind[nid].astype(dtype))
        elif kind == PRODUCT:
            v = vals[ac.inputs[nid][0]]
            for u in ac.inputs[nid][1:]:
                v = v * vals[u]
            vals.append(v)
        else:
            w = ac.weights[nid]
            if dtype is not np.complex128:
                w = w.real
            v = np.zeros(len(next(iter(ind.values()))), dtype=dtype)
            for wu, u in zip(w, ac.inputs[nid]):
                v = v + wu * vals[u]
            vals.append(v)
    return vals


def eval_ac_batch(ac: ArithmeticCircuit, states: np.ndarray) -> np.ndarray:
    vals = eval_ac_nodes(ac, states)
    return vals[ac.root]


def eval_ac(ac: ArithmeticCircuit, s: Sequence[int]) -> complex:
    return complex(eval_ac_batch(ac, np.asarray([s]))[0])


def node_depths(ac: ArithmeticCircuit) -> list[int]:
    depth = []
    for ins in ac.inputs:
        depth.append(1 + max(depth[u] for u in ins) if ins else 0)
    return depth


def ac_stats(ac: ArithmeticCircuit) -> ACStats:
    m = sum(len(ins) for ins in ac.inputs)
    wmax = 1.0
    for w in ac.weights:
        if w is not None and len(w):
            wmax = max(wmax, float(np.max(np.abs(w))))
    n_in = sum(1 for k in ac.kinds if k == INDICATOR)
    return ACStats(len(ac), m, max(node_depths(ac)), wmax, n_in)


def normalize_binary(ac: ArithmeticCircuit) -> ArithmeticCircuit:
    """Rewrite every k-ary product as a balanced tree of binary products."""
    out = ArithmeticCircuit(ac.dims)
    remap: dict[int, int] = {}
    for nid, kind in enumerate(ac.kinds):
        ins = [remap[u] for u in ac.inputs[nid]]
        if kind == INDICATOR:
            remap[nid] = out.indicator(*ac.labels[nid])
        elif kind == WSUM:
            remap[nid] = out.wsum(ins, ac.weights[nid])
        elif len(ins) == 1:
            remap[nid] = out.wsum(ins, [1.0])
        else:
            layer = ins
            while len(layer) > 2:
                nxt = [out.product(layer[j:j + 2]) for j in range(0, len(layer) - 1, 2)]
                if len(layer) % 2:
                    nxt.append(layer[-1])
                layer = nxt
            remap[nid] = out.product(layer)
    out.roots = [remap[r] for r in ac.roots]
    return out
