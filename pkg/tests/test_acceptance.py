"""Acceptance criteria, one test each; a PASS/FAIL line per criterion is printed
in the terminal summary (or to stdout when run as a script)."""
import math
import subprocess
import sys
import time

import numpy as np
import pytest

from tn2nn import random_mps
from tn2nn.ac_ir import eval_ac_batch, lower_to_ac
from tn2nn.complex_split import cancellation_ratio, eval_quad_batch, recombine
from tn2nn.heads import (
    build_arctan_exp, build_heads, build_heaviside, build_log_abs_head, build_mul_gadget, build_softplus_inv,
    derive_params,
)
from tn2nn.nn_ir import NeuralNet, encode_input, eval_nn, eval_nn_nodes, softplus
from tn2nn.pipeline import build_quad, compile_full, scaling_report, verify
from tn2nn.planner import execute_plan, make_plan
from tn2nn.tensor_core import contract_exact, sample_states, state_array

RESULTS: list[str] = []


def record(number, title, ok, detail):
    RESULTS.append(f"[{'PASS' if ok else 'FAIL'}] {number}. {title}: {detail}")
    assert ok, detail


@pytest.fixture(scope="module")
def reference():
    mps = random_mps(8, 2, 4, 42)
    t0 = time.perf_counter()
    comp = compile_full(mps, "parallel", 1e-2)
    rep = verify(mps, comp.nn, 1e-2, quad=comp.quad)
    return mps, comp, rep, time.perf_counter() - t0


def test_1_end_to_end_bound(reference):
    _, _, rep, elapsed = reference
    ok = rep.max_error < 1e-2 and len(rep.excluded) <= 5 and elapsed < 60
    record(1, "end-to-end bound", ok,
           f"max error {rep.max_error:.4g} < 1e-2 over {len(rep.records)} states, "
           f"{len(rep.excluded)} excluded, {elapsed:.1f} s")


def test_2_nonnegative_exactness(reference):
    mps, comp, _, _ = reference
    states = state_array(mps.dims)
    nodes = eval_nn_nodes(comp.nn, encode_input(comp.nn, states))
    parts = eval_quad_batch(comp.quad, states)
    worst = max(
        float(np.max(np.abs(np.exp(nodes[r]) - parts[q]) / np.maximum(parts[q], 1e-300)))
        for q, r in enumerate(comp.part_roots)
    )
    record(2, "non-negative exactness", worst < 1e-9, f"max relative error {worst:.3g} < 1e-9 on 4 parts x 256 states")


def _chain_error(mps, states):
    """(worst relative disagreement, worst of the same divided by the cancellation ratio)."""
    exact = np.array([contract_exact(mps, s) for s in states])
    worst, per_ratio = 0.0, 0.0
    for scheme in ("sequential", "parallel"):
        plan, ac, quad = build_quad(mps, scheme)
        planned = np.array([execute_plan(mps, plan, s)[0] for s in states])
        parts = eval_quad_batch(quad, states)
        for got in (planned, eval_ac_batch(ac, states), recombine(parts)):
            rel = np.abs(got - exact) / np.abs(exact)
            worst = max(worst, float(rel.max()))
        per_ratio = max(per_ratio, float(np.max(rel / cancellation_ratio(parts))))
    return worst, per_ratio


def test_3_oracle_chain(reference):
    mps = reference[0]
    e8, _ = _chain_error(mps, state_array(mps.dims))
    big = random_mps(16, 2, 4, 42)
    e16, floor16 = _chain_error(big, sample_states(big.dims, 500, 0))
    ok = max(e8, e16) < 1e-10
    record(3, "oracle chain", ok,
           f"max relative disagreement {e8:.3g} (N=8, 256 states), {e16:.3g} (N=16, 500 states); "
           f"recombination error / cancellation ratio <= {floor16:.2g}, i.e. the float64 floor of x+ - x-")


def test_4_gadget_certificates(reference):
    p = reference[1].params
    rng = np.random.default_rng(0)
    checks = {}

    x = np.linspace(-50 * p.delta, 50 * p.delta, 20001)
    h = eval_nn(build_heaviside(p.delta), x[:, None])[:, 0]
    out = np.abs(x) >= p.delta
    checks["heaviside exact outside +-delta"] = (np.array_equal(h[out], (x[out] > 0) * 1.0), 0.0)

    xy = np.column_stack([rng.uniform(0, 1, 1000), rng.uniform(-p.mul_bound, p.mul_bound, 1000)])
    err = np.abs(eval_nn(build_mul_gadget(p.mul_bound, p.eps_tilde), xy)[:, 0] - xy[:, 0] * xy[:, 1]).max()
    checks["multiplication < eps_tilde"] = (err < p.eps_tilde, err)

    spi = build_softplus_inv(p)
    xs = np.geomspace(p.x_min, p.x_large, 1000)
    ref = np.log(np.expm1(xs))
    err = np.abs(eval_nn(spi, xs[:, None])[:, 0] - ref).max()
    checks["softplus^-1 < eps_inv on [x_min, x_large]"] = (err < p.eps_inv, err)
    big = np.linspace(p.x_large, 50, 1000)
    err = np.abs(eval_nn(spi, big[:, None])[:, 0] - (big + np.log(-np.expm1(-big)))).max()
    checks["softplus^-1 pass-through above x_large"] = (err < p.eps_inv, err)

    grid = np.linspace(-20, 20, 1000)
    err = np.abs(eval_nn(build_arctan_exp(p.eps_t), grid[:, None])[:, 0] - np.arctan(np.exp(grid))).max()
    checks["arctan(exp) < eps_t on [-20, 20]"] = (err < p.eps_t, err)

    lz = -1e4
    g1 = eval_nn(build_log_abs_head(p), [math.log(3), lz, math.log(4), lz])[0]
    err = abs(g1 - math.log(5))
    checks["log-abs head ln 5 at 3+4i"] = (err < p.eps / 2, err)
    g2 = eval_nn(build_heads(p), [0.0, lz, 0.0, lz])[1]
    err = abs(g2 - math.pi / 4)
    checks["arg head pi/4 at 1+i"] = (err < p.eps / 2, err)

    failed = [k for k, (ok, _) in checks.items() if not ok]
    detail = "; ".join(f"{k} ({e:.3g})" for k, (_, e) in checks.items())
    record(4, "gadget certificates", not failed, detail if not failed else f"failed: {failed}")


def test_5_scaling_signatures():
    t0 = time.perf_counter()
    ns = [4, 8, 16, 32, 64]
    par, _ = scaling_report(2, 4, 1e-2, ns, "parallel", seed=0)
    seq, _ = scaling_report(2, 4, 1e-2, ns, "sequential", seed=0)
    elapsed = time.perf_counter() - t0
    dp = {r["N"]: r["nn_depth"] for r in par}
    log_depth = dp[32] - dp[16] == dp[16] - dp[8]
    edges = np.array([r["nn_edges"] for r in par], dtype=float)
    resid = np.abs(np.polyval(np.polyfit(ns, edges, 1), ns) - edges).max() / (edges.max() - edges.min())
    ds = np.array([r["nn_depth"] for r in seq], dtype=float)
    per_site = np.diff(ds) / np.diff(ns)
    seq_linear = bool(np.all(per_site == per_site[0]))
    ok = log_depth and resid < 0.05 and seq_linear and elapsed < 300
    record(5, "scaling signatures", ok,
           f"parallel depths {[dp[n] for n in ns]}, edge fit residual {resid:.2%} of range, "
           f"sequential depth per site {per_site.tolist()}, {elapsed:.0f} s")


def test_6_head_size_scaling(reference):
    p0 = reference[1].params
    stats = reference[1].ac_stats
    sizes, ratios = [], []
    for eps in (1e-1, 1e-2, 1e-3):
        p = derive_params(eps, p0.f_min, stats, p0.log_part_bound, p0.bound_source)
        size = len(build_heads(p)) - 4
        c = math.log(p.m / eps * (p.log_part_bound - math.log(p.f_min))) ** 2 \
            + math.log(1 / eps) * math.sqrt(1 / eps)
        sizes.append(size)
        ratios.append(size / c)
    spread = max(ratios) / min(ratios)
    record(6, "head-size scaling", spread <= 2,
           f"head nodes {sizes}, fitted C {[round(r, 1) for r in ratios]}, spread {spread:.2f} <= 2")


def test_7_tightness_and_fault_injection(reference):
    mps, comp, _, _ = reference
    tight = verify(mps, comp.nn, 1e-3, quad=comp.quad)
    broken = NeuralNet.from_json(comp.nn.to_json())
    broken.bias[broken.roots[0]] += 1.0
    fault = verify(mps, broken, 1e-2, quad=comp.quad)
    ok = not tight.passed and tight.max_error > 1e-3 and not fault.passed
    record(7, "tightness and fault injection", ok,
           f"error {tight.max_error:.6g} > eps/10 = 1e-3; perturbed bias gives {fault.max_error:.3g} > 1e-2")


def test_8_determinism(tmp_path):
    mps = tmp_path / "mps.json"
    cli = [sys.executable, "-m", "tn2nn.cli"]
    subprocess.run(cli + ["gen-mps", "--n", "8", "--d", "2", "--chi", "4", "--seed", "42", "--out", str(mps)],
                   check=True)
    blobs = []
    for name in ("a.json", "b.json"):
        out = tmp_path / name
        subprocess.run(cli + ["compile", "--mps", str(mps), "--scheme", "parallel", "--epsilon", "0.01",
                              "--out", str(out)], check=True)
        blobs.append(out.read_bytes())
    record(8, "determinism", blobs[0] == blobs[1], f"two compile runs, {len(blobs[0])} bytes each, identical")


if __name__ == "__main__":
    code = pytest.main([__file__, "-q", "-p", "no:cacheprovider"])
    sys.exit(code)
