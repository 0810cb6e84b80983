"""Feed-forward network DAG with softplus / ReLU / identity neurons.

Every node computes ``act(bias + sum_u w_u * value(u))``. Input nodes are
identity nodes with no in-edges whose value is bound at evaluation time;
other nodes without in-edges are constants equal to ``act(bias)``.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy import sparse

SOFTPLUS, RELU, IDENTITY = "softplus", "relu", "identity"
ACTIVATIONS = (SOFTPLUS, RELU, IDENTITY)
LOG_ZERO = -1e4

# cap on nodes * batch held in memory at once during evaluation
_EVAL_BUDGET = 20_000_000


class StructureError(ValueError):
    pass


def softplus(x):
    x = np.asarray(x, dtype=np.float64)
    return np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))


def relu(x):
    return np.maximum(x, 0.0)


class NeuralNet:
    def __init__(self):
        self.act: list[str] = []
        self.bias: list[float] = []
        self.ins: list[list[tuple[int, float]]] = []
        self.inputs: list[dict] = []
        self.roots: list[int] = []
        self._plan = None

    def __len__(self):
        return len(self.act)

    def add_input(self, role: str = "indicator", **info) -> int:
        nid = self._add(IDENTITY, 0.0, [])
        self.inputs.append({"id": nid, "role": role, **info})
        return nid

    def add(self, act: str, edges: Iterable[tuple[int, float]] = (), bias: float = 0.0) -> int:
        return self._add(act, bias, list(edges))

    def const(self, value: float) -> int:
        return self._add(IDENTITY, value, [])

    def _add(self, act, bias, edges) -> int:
        if act not in ACTIVATIONS:
            raise StructureError(f"unknown activation {act!r}")
        nid = len(self.act)
        clean = []
        for src, w in edges:
            if not 0 <= src < nid:
                raise StructureError(f"node {nid} has an edge from {src}, which is not earlier")
            w = float(w)
            if not math.isfinite(w):
                raise StructureError(f"non-finite weight on edge {src}->{nid}")
            clean.append((int(src), w))
        bias = float(bias)
        if not math.isfinite(bias):
            raise StructureError(f"non-finite bias on node {nid}")
        self.act.append(act)
        self.bias.append(bias)
        self.ins.append(clean)
        self._plan = None
        return nid

    @property
    def input_ids(self) -> list[int]:
        return [r["id"] for r in self.inputs]

    def to_json(self) -> str:
        doc = {
            "nodes": [
                {"act": a, "bias": b, "in": [[s, w] for s, w in e]}
                for a, b, e in zip(self.act, self.bias, self.ins)
            ],
            "inputs": self.inputs,
            "roots": self.roots,
        }
        return json.dumps(doc)

    @classmethod
    def from_json(cls, text: str) -> NeuralNet:
        doc = json.loads(text)
        nn = cls()
        for row in doc["nodes"]:
            nn._add(row["act"], row["bias"], [(s, w) for s, w in row["in"]])
        nn.inputs = [dict(r) for r in doc["inputs"]]
        nn.roots = list(doc["roots"])
        return nn

    # evaluation -----------------------------------------------------------

    def levels(self) -> list[int]:
        lv = []
        for edges in self.ins:
            lv.append(1 + max(lv[s] for s, _ in edges) if edges else 0)
        return lv

    def _compiled(self):
        if self._plan is not None and self._plan[0] == len(self):
            return self._plan[1]
        lv = np.asarray(self.levels(), dtype=np.int64)
        n = len(self)
        input_set = set(self.input_ids)
        consts = [i for i in range(n) if lv[i] == 0 and i not in input_set]
        stages = []
        for level in range(1, int(lv.max(initial=0)) + 1):
            ids = np.flatnonzero(lv == level)
            rows, cols, vals = [], [], []
            for r, nid in enumerate(ids):
                for s, w in self.ins[nid]:
                    rows.append(r)
                    cols.append(s)
                    vals.append(w)
            mat = sparse.csr_matrix((vals, (rows, cols)), shape=(len(ids), n))
            acts = np.array([self.act[i] for i in ids])
            bias = np.array([self.bias[i] for i in ids])
            stages.append((ids, mat, bias[:, None], acts == SOFTPLUS, acts == RELU))
        plan = (np.asarray(consts, dtype=np.int64), stages)
        self._plan = (len(self), plan)
        return plan


def _apply(pre, sp_mask, relu_mask):
    out = pre.copy()
    if sp_mask.any():
        out[sp_mask] = softplus(pre[sp_mask])
    if relu_mask.any():
        out[relu_mask] = relu(pre[relu_mask])
    return out


def eval_nn_nodes(nn: NeuralNet, values: np.ndarray) -> np.ndarray:
    """All node values, shape (n_nodes, batch), for input values shaped (batch, n_inputs)."""
    values = np.atleast_2d(np.asarray(values, dtype=np.float64))
    if values.shape[1] != len(nn.inputs):
        raise StructureError(f"expected {len(nn.inputs)} input values, got {values.shape[1]}")
    consts, stages = nn._compiled()
    vals = np.zeros((len(nn), values.shape[0]))
    vals[nn.input_ids, :] = values.T
    for c in consts:
        vals[c, :] = nn.bias[c]
    for ids, mat, bias, sp_mask, relu_mask in stages:
        vals[ids, :] = _apply(mat @ vals + bias, sp_mask, relu_mask)
    return vals


def eval_nn(nn: NeuralNet, values):
    """Evaluate the roots.

    ``values`` is either a mapping from input id to value, a 1-D sequence in
    declared input order (returns a tuple of floats), or a (batch, n_inputs)
    array (returns a (batch, n_roots) array).
    """
    if isinstance(values, Mapping):
        missing = [i for i in nn.input_ids if i not in values]
        if missing:
            raise StructureError(f"unbound inputs {missing}")
        values = [values[i] for i in nn.input_ids]
    arr = np.asarray(values, dtype=np.float64)
    single = arr.ndim == 1
    arr = np.atleast_2d(arr)
    if arr.shape[1] != len(nn.inputs):
        raise StructureError(f"expected {len(nn.inputs)} input values, got {arr.shape[1]}")
    chunk = max(1, _EVAL_BUDGET // max(1, len(nn)))
    out = np.empty((arr.shape[0], len(nn.roots)))
    for lo in range(0, arr.shape[0], chunk):
        vals = eval_nn_nodes(nn, arr[lo:lo + chunk])
        out[lo:lo + chunk] = vals[nn.roots, :].T
    if single:
        return tuple(float(v) for v in out[0])
    return out


@dataclass(frozen=True)
class NNStats:
    nodes: int
    edges: int
    depth: int


def nn_stats(nn: NeuralNet) -> NNStats:
    lv = nn.levels()
    depth = max((lv[r] for r in nn.roots), default=0)
    return NNStats(len(nn), sum(len(e) for e in nn.ins), depth)


def encode_input(nn: NeuralNet, states, log_zero: float = LOG_ZERO) -> np.ndarray:
    """Bind log-indicator channels: 0 where s_i == k, ``log_zero`` otherwise."""
    states = np.asarray(states, dtype=np.int64)
    single = states.ndim == 1
    states = np.atleast_2d(states)
    out = np.empty((states.shape[0], len(nn.inputs)))
    for j, role in enumerate(nn.inputs):
        if role["role"] == "indicator":
            out[:, j] = np.where(states[:, role["site"]] == role["value"], 0.0, log_zero)
        elif role["role"] == "const":
            out[:, j] = role["value"]
        else:
            out[:, j] = states[:, role["site"]] if "site" in role else 0.0
    return out[0] if single else out


def to_strict_softplus(nn: NeuralNet, delta_identity: float = 1.0, delta_relu: float = 1e6) -> NeuralNet:
    """Rewrite a network to use softplus neurons only (roots stay identity).

    Identity neurons become ``(sp(d*x) - sp(-d*x)) / d`` folded into consumers,
    which is exact up to rounding. ReLU neurons become ``sp(d*x) / d``, off by at
    most ``ln(2)/d`` per neuron.
    """
    out = NeuralNet()
    rep: list[tuple[dict[int, float], float]] = []
    roots = set(nn.roots)
    input_set = set(nn.input_ids)
    role_of = {r["id"]: r for r in nn.inputs}

    def expand(edges, bias):
        terms: dict[int, float] = {}
        b = bias
        for s, w in edges:
            t, c = rep[s]
            b += w * c
            for k, v in t.items():
                terms[k] = terms.get(k, 0.0) + w * v
        return list(terms.items()), b

    new_root = {}
    for nid, (act, bias, edges) in enumerate(zip(nn.act, nn.bias, nn.ins)):
        if nid in input_set:
            r = dict(role_of[nid])
            r.pop("id")
            rep.append(({out.add_input(**r): 1.0}, 0.0))
            continue
        terms, b = expand(edges, bias)
        if not edges:
            val = float(softplus(b)) if act == SOFTPLUS else max(b, 0.0) if act == RELU else b
            rep.append(({}, val))
        elif act == SOFTPLUS:
            rep.append(({out.add(SOFTPLUS, terms, b): 1.0}, 0.0))
        elif act == RELU:
            d = delta_relu
            k = out.add(SOFTPLUS, [(s, d * w) for s, w in terms], d * b)
            rep.append(({k: 1.0 / d}, 0.0))
        elif nid in roots:
            rep.append(({out.add(IDENTITY, terms, b): 1.0}, 0.0))
        else:
            d = delta_identity
            p = out.add(SOFTPLUS, [(s, d * w) for s, w in terms], d * b)
            q = out.add(SOFTPLUS, [(s, -d * w) for s, w in terms], -d * b)
            rep.append(({p: 1.0 / d, q: -1.0 / d}, 0.0))
        if nid in roots:
            t, c = rep[nid]
            if len(t) == 1 and c == 0.0 and next(iter(t.values())) == 1.0:
                new_root[nid] = next(iter(t))
            else:
                new_root[nid] = out.add(IDENTITY, list(t.items()), c)
    out.roots = [new_root[r] for r in nn.roots]
    return out


def scan_activations(nn: NeuralNet, ids: Sequence[int] | None = None) -> dict[str, int]:
    ids = range(len(nn)) if ids is None else ids
    counts = {a: 0 for a in ACTIVATIONS}
    for i in ids:
        counts[nn.act[i]] += 1
    return counts
