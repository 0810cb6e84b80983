"""End-to-end driver: MPS -> plan -> AC -> four non-negative parts -> log network + heads."""
from __future__ import annotations

import csv
import io
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .ac_ir import ACStats, ac_stats, eval_ac_batch, lower_to_ac, normalize_binary
from .complex_split import QuadAC, cancellation_ratio, eval_quad_batch, recombine, split_complex
from .heads import HeadParams, RangeOverflowError, attach_heads, derive_params
from .log_compiler import CompileOptions, add_indicator_inputs, compile_roots_into
from .nn_ir import LOG_ZERO, NeuralNet, NNStats, encode_input, eval_nn, nn_stats, to_strict_softplus
from .planner import CostReport, execute_plan, make_plan, plan_cost
from .tensor_core import (
    ENUMERATION_LIMIT_BITS, MPS, PreconditionError, contract_batch, sample_states, state_array,
)

CANCELLATION_LIMIT = 1e12
EXHAUSTIVE_LIMIT = 4096
SAMPLE_SIZE = 2048


class AuditError(AssertionError):
    """A pass broke its own equivalence invariant (paranoid mode)."""


@dataclass
class Compilation:
    nn: NeuralNet
    params: HeadParams
    ac_stats: ACStats
    cost: CostReport
    quad: QuadAC
    scheme: str
    part_roots: list[int]
    head_nodes: int
    timings: dict[str, float] = field(default_factory=dict)


def _bits(mps: MPS) -> float:
    return sum(math.log2(d) for d in mps.dims)


def verification_states(mps: MPS, seed: int = 0, sample: int | None = None) -> np.ndarray:
    """All states when there are at most 4096 of them, else a seeded sample."""
    if sample is None and mps.num_states() <= EXHAUSTIVE_LIMIT:
        return state_array(mps.dims)
    return sample_states(mps.dims, sample or SAMPLE_SIZE, seed)


def empirical_bounds(mps: MPS, quad: QuadAC, states: np.ndarray) -> tuple[float, float]:
    """(f_min, ln of twice the largest part value) over ``states``."""
    f_min, top = math.inf, 0.0
    for lo in range(0, len(states), 4096):
        chunk = states[lo:lo + 4096]
        psi = contract_batch(mps, chunk)
        f_min = min(f_min, float(np.min(np.minimum(abs(psi.real), abs(psi.imag)))))
        top = max(top, float(eval_quad_batch(quad, chunk).max()))
    return f_min, math.log(2 * top)


def build_quad(mps: MPS, scheme: str):
    plan = make_plan(mps, scheme)
    ac = lower_to_ac(mps, plan)
    return plan, ac, split_complex(normalize_binary(ac))


def compile_full(mps: MPS, scheme: str = "parallel", eps: float = 1e-2, f_min: float | None = None,
                 log_part_bound: float | None = None, opts: CompileOptions = CompileOptions(),
                 params: HeadParams | None = None, paranoid: bool = False) -> Compilation:
    """Compile ``mps`` into a network with roots (ln|Psi|, arg Psi).

    With ``f_min=None`` the state space is enumerated (at most 2^20 states) and
    both f_min and the part bound are measured on it.
    """
    timings = {}
    t0 = time.perf_counter()
    plan = make_plan(mps, scheme)
    ac = lower_to_ac(mps, plan)
    timings["lower"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    binary = normalize_binary(ac)
    quad = split_complex(binary)
    timings["split"] = time.perf_counter() - t0
    stats = ac_stats(ac)

    if paranoid:
        _audit_front(mps, plan, ac, binary, quad)

    t0 = time.perf_counter()
    if params is None:
        source = "explicit" if log_part_bound is not None else None
        if f_min is None:
            if _bits(mps) > ENUMERATION_LIMIT_BITS:
                raise PreconditionError(
                    f"empirical f_min needs enumeration of {mps.num_states()} states; pass an explicit f_min"
                )
            f_min, emp_bound = empirical_bounds(mps, quad, state_array(mps.dims))
            if log_part_bound is None:
                log_part_bound, source = emp_bound, "empirical"
        params = derive_params(eps, f_min, stats, log_part_bound, source)
    timings["params"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    net = NeuralNet()
    inputs = add_indicator_inputs(net, mps.dims)
    o = compile_roots_into(net, quad.body, quad.roots, inputs, opts)
    timings["log_compile"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    before = len(net)
    net.roots = list(attach_heads(net, o, params))
    head_nodes = len(net) - before
    timings["heads"] = time.perf_counter() - t0

    if opts.strict_softplus:
        net = to_strict_softplus(net, opts.delta_identity, opts.delta_relu)
        o = []
    elif paranoid:
        _audit_parts(mps, net, o, quad, opts.log_zero)

    return Compilation(net, params, stats, plan_cost(mps, plan), quad, scheme, o, head_nodes, timings)


def _audit_front(mps, plan, ac, binary, quad, n_states: int = 64):
    states = verification_states(mps, seed=1, sample=None if mps.num_states() <= n_states else n_states)
    psi = contract_batch(mps, states)
    scale = np.maximum(abs(psi), 1e-300)
    plan_vals = np.array([execute_plan(mps, plan, s)[0] for s in states])
    checks = {
        "execute_plan": plan_vals,
        "lower_to_ac": eval_ac_batch(ac, states),
        "normalize_binary": eval_ac_batch(binary, states),
        "split_complex": recombine(eval_quad_batch(quad, states)),
    }
    for name, vals in checks.items():
        err = float(np.max(abs(vals - psi) / scale))
        if err > 1e-10:
            raise AuditError(f"{name}: relative deviation {err:.3g} from the exact contraction")


def _audit_parts(mps, net, o, quad, log_zero, n_states: int = 64):
    states = verification_states(mps, seed=2, sample=None if mps.num_states() <= n_states else n_states)
    saved = net.roots
    net.roots = list(o)
    try:
        logs = eval_nn(net, encode_input(net, states, log_zero)).T
    finally:
        net.roots = saved
    parts = eval_quad_batch(quad, states)
    err = np.max(abs(np.exp(logs) - parts) / np.maximum(parts, 1e-300))
    if err > 1e-9:
        raise AuditError(f"log_compile: relative deviation {err:.3g} on part values")


# ---------------------------------------------------------------------------
# verification


def wrap_phase(x):
    """Map to (-pi, pi]."""
    y = np.mod(np.asarray(x, dtype=np.float64) + math.pi, 2 * math.pi) - math.pi
    return np.where(y == -math.pi, math.pi, y)


@dataclass
class VerifyReport:
    eps: float
    records: list[dict]
    max_error: float
    f_min_empirical: float
    excluded: list[dict]
    nn_stats: NNStats | None = None
    ac_stats: ACStats | None = None
    cost: CostReport | None = None
    timings: dict[str, float] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return bool(self.max_error < self.eps)

    def summary(self) -> dict:
        return {
            "eps": self.eps,
            "passed": self.passed,
            "max_error": self.max_error,
            "states": len(self.records) + len(self.excluded),
            "excluded": len(self.excluded),
            "f_min_empirical": self.f_min_empirical,
            "nn": vars(self.nn_stats) if self.nn_stats else None,
            "ac": vars(self.ac_stats) if self.ac_stats else None,
            "multiply_count": self.cost.multiply_count if self.cost else None,
            "timings": self.timings,
        }


def verify(mps: MPS, nn: NeuralNet, eps: float, states: np.ndarray | None = None,
           quad: QuadAC | None = None, log_zero: float = LOG_ZERO, f_min: float | None = None) -> VerifyReport:
    """Compare (g1, g2) with the exact complex log on every tested state.

    States with an exactly zero real or imaginary amplitude, a cancellation ratio
    above 1e12 (only checked when ``quad`` is given) or, when ``f_min`` is given,
    min(|re|, |im|) below it are excluded with a reason code.
    """
    t0 = time.perf_counter()
    if states is None:
        states = verification_states(mps)
    states = np.asarray(states, dtype=np.int64)
    psi = contract_batch(mps, states)
    out = eval_nn(nn, encode_input(nn, states, log_zero))
    t_eval = time.perf_counter() - t0

    reasons: list[str | None] = [None] * len(states)
    smallest = np.minimum(abs(psi.real), abs(psi.imag))
    if quad is not None:
        ratio = cancellation_ratio(eval_quad_batch(quad, states))
    else:
        ratio = np.zeros(len(states))
    for j in range(len(states)):
        if psi[j].real == 0 or psi[j].imag == 0:
            reasons[j] = "zero_part"
        elif ratio[j] > CANCELLATION_LIMIT:
            reasons[j] = "cancellation"
        elif f_min is not None and smallest[j] < f_min:
            reasons[j] = "below_f_min"

    records, excluded = [], []
    max_err = 0.0
    for j, s in enumerate(states):
        state = [int(v) for v in s]
        if reasons[j] is not None:
            excluded.append({"state": state, "reason": reasons[j]})
            continue
        ref = (math.log(abs(psi[j])), math.atan2(psi[j].imag, psi[j].real))
        d1 = out[j, 0] - ref[0]
        d2 = float(wrap_phase(out[j, 1] - ref[1]))
        err = math.hypot(d1, d2)
        max_err = max(max_err, err)
        records.append({"state": state, "log_abs": ref[0], "phase": ref[1],
                        "g1": float(out[j, 0]), "g2": float(out[j, 1]), "error": err})
    kept = np.array([r is None for r in reasons])
    f_emp = float(smallest[kept].min()) if kept.any() else 0.0
    if not records:
        max_err = math.nan
    return VerifyReport(eps, records, max_err, f_emp, excluded, nn_stats(nn),
                        timings={"evaluate": t_eval})


# ---------------------------------------------------------------------------
# scaling sweep

CSV_COLUMNS = ["N", "nn_depth", "nn_edges", "ac_edges", "ac_depth", "plan_multiply_count",
               "compile_time", "verify_max_error"]


def scaling_report(d: int, chi: int, eps: float, n_list, scheme: str = "parallel", seed: int = 0,
                   sample: int = 256) -> tuple[list[dict], str]:
    """Compile one MPS per N and tabulate network size against N.

    All instances share one HeadParams so head depth is the same for every N
    and depth differences isolate the compiled body. The parameters come from
    the worst-conditioned instance whose own measured f_min and part bound still
    admit certified constants; larger instances cancel too strongly in the
    redundant representation to be certified in double precision, and their
    error column reflects that.
    """
    from .tensor_core import random_mps

    prepared = []
    candidates = []
    for n in n_list:
        if n < 2:
            raise PreconditionError("all N must be >= 2")
        mps = random_mps(n, d, chi, seed)
        plan, ac, quad = build_quad(mps, scheme)
        states = verification_states(mps, seed=seed, sample=None if mps.num_states() <= sample else sample)
        fm, lb = empirical_bounds(mps, quad, states)
        st = ac_stats(ac)
        try:
            derive_params(eps, fm, st, lb, "empirical")
        except RangeOverflowError:
            pass
        else:
            candidates.append((math.log(fm) - lb, fm, lb, st))
        prepared.append((n, mps, states))
    if not candidates:
        raise RangeOverflowError("no instance in the sweep admits certifiable head parameters")
    _, fm, lb, st = min(candidates, key=lambda c: c[0])
    params = derive_params(eps, fm, st, lb, "empirical")

    rows = []
    for n, mps, states in prepared:
        t0 = time.perf_counter()
        comp = compile_full(mps, scheme, eps, params=params)
        elapsed = time.perf_counter() - t0
        rep = verify(mps, comp.nn, eps, states, quad=comp.quad)
        ns = nn_stats(comp.nn)
        rows.append({
            "N": n, "nn_depth": ns.depth, "nn_edges": ns.edges, "ac_edges": comp.ac_stats.m,
            "ac_depth": comp.ac_stats.l, "plan_multiply_count": comp.cost.multiply_count,
            "compile_time": round(elapsed, 4), "verify_max_error": rep.max_error,
        })
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\n")
    writer.writeheader()
    writer.writerows(rows)
    return rows, buf.getvalue()
