"""Approximate output heads: ln|z| and arg z from the four log-parts of z.

Gadgets are appended to an existing :class:`NeuralNet` and take *linear forms*
as operands: a pair ``(terms, const)`` meaning ``const + sum(w * node)``. This
lets a gadget read a weighted combination of earlier neurons without paying
for an extra identity neuron.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .ac_ir import ACStats
from .nn_ir import IDENTITY, RELU, SOFTPLUS, NeuralNet, softplus

Lin = tuple[list[tuple[int, float]], float]

# below this the H_delta ramp cannot be resolved against O(1) operands in double precision
DELTA_FLOOR = 1e-14


class RangeOverflowError(ArithmeticError):
    pass


# ---------------------------------------------------------------------------
# parameters


@dataclass(frozen=True)
class HeadParams:
    eps: float
    f_min: float
    m: int
    w_max: float
    log_part_bound: float
    bound_source: str
    eps_inv: float
    eps_hat: float
    x_large: float
    x_min: float
    y_min: float
    y_max: float
    T: int
    L: float
    delta: float
    delta_sign: float
    eps_tilde: float
    mul_bound: float
    blend_bound: float
    eps_t: float
    x_min_t: float
    n_anchors: int
    K: int
    eps_mul_sign: float
    eps_mul_arctan: float
    budget: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)


def derive_params(eps: float, f_min: float, stats: ACStats, log_part_bound: float | None = None,
                  bound_source: str | None = None) -> HeadParams:
    """Compute every approximation constant of the heads.

    ``log_part_bound`` is ln of an upper bound on every part value. By default
    it is ``m * ln(m * W_max)``, the bound that holds for any non-negative
    circuit with ``m`` edges and weights at most ``W_max``.
    """
    if not 0 < eps < 1:
        raise ValueError(f"eps must lie in (0, 1), got {eps}")
    if not f_min > 0:
        raise ValueError(f"f_min must be positive, got {f_min}")
    m, w_max = stats.m, max(1.0, stats.w_max)
    if log_part_bound is None:
        log_part_bound = m * math.log(m * w_max)
        bound_source = bound_source or "circuit"
    bound_source = bound_source or "explicit"

    eps_inv = eps / 4
    eps_hat = eps_inv / 2
    x_large = -math.log(-math.expm1(-eps_hat))
    y_min = math.log(f_min) - log_part_bound
    y_max = x_large
    if not math.isfinite(y_min):
        raise RangeOverflowError(f"ln f_min - ln bound is not finite (f_min={f_min}, ln bound={log_part_bound})")
    if y_min >= y_max:
        raise RangeOverflowError(f"empty search range: y*_min={y_min} >= y*_max={y_max}")
    x_min = float(softplus(y_min))
    if x_min == 0.0:
        raise RangeOverflowError(
            f"x_min underflows: y*_min = ln f_min - ln bound = {y_min:.6g} "
            f"(f_min={f_min:.3g}, ln bound={log_part_bound:.6g}); supply a tighter part bound"
        )
    T = math.ceil(math.log2((y_max - y_min) / eps_hat))
    L = 1.0 / -math.expm1(-x_min)
    delta = eps_hat / (4 * L)
    if delta < DELTA_FLOOR:
        raise RangeOverflowError(
            f"Heaviside width {delta:.3g} is below double-precision resolution "
            f"(x_min={x_min:.3g}, L={L:.3g}); supply a tighter part bound"
        )
    eps_tilde = eps_hat / (8 * T)
    mul_bound = y_max - y_min
    blend_bound = x_large + delta - y_min

    eps_t = eps / 8
    x_min_t = math.log(eps_t)
    n_anchors = int(abs(x_min_t) / (4 * math.sqrt(eps_t))) + 1
    eps_mul_sign = eps / (32 * math.pi)
    eps_mul_arctan = eps / 64

    budget = {
        "log_abs": eps / 2,
        "arg": eps / 2,
        "softplus_inverse": eps_inv,
        "bisection_width": eps_hat / 2,
        "bisection_ramp": L * delta,
        "bisection_products": 2 * T * eps_tilde,
        "arctan_exp": eps_t,
        "arg_from_log_parts": eps_inv,
        "mul_sign": eps_mul_sign,
        "mul_arctan": eps_mul_arctan,
        "log_abs_total": eps_inv,
        "arg_total": eps_t + eps_inv + 2 * eps_mul_arctan + 2 * math.pi * eps_mul_sign,
    }
    return HeadParams(
        eps=eps, f_min=f_min, m=m, w_max=w_max, log_part_bound=log_part_bound, bound_source=bound_source,
        eps_inv=eps_inv, eps_hat=eps_hat, x_large=x_large, x_min=x_min, y_min=y_min, y_max=y_max,
        T=T, L=L, delta=delta, delta_sign=x_min / 2, eps_tilde=eps_tilde, mul_bound=mul_bound,
        blend_bound=blend_bound, eps_t=eps_t, x_min_t=x_min_t, n_anchors=n_anchors,
        K=2 * (n_anchors + 2), eps_mul_sign=eps_mul_sign, eps_mul_arctan=eps_mul_arctan, budget=budget,
    )


# ---------------------------------------------------------------------------
# linear-form helpers


def lin(node: int, w: float = 1.0) -> Lin:
    return [(node, w)], 0.0


def const(c: float) -> Lin:
    return [], float(c)


def comb(*parts: tuple[float, Lin], bias: float = 0.0) -> Lin:
    terms: dict[int, float] = {}
    c = bias
    for coef, (ts, b) in parts:
        c += coef * b
        for nid, w in ts:
            terms[nid] = terms.get(nid, 0.0) + coef * w
    return [(k, v) for k, v in terms.items() if v != 0.0], c


def node(net: NeuralNet, act: str, form: Lin, scale: float = 1.0, shift: float = 0.0) -> int:
    """A neuron computing act(scale * form + shift)."""
    ts, c = form
    return net.add(act, [(k, scale * w) for k, w in ts], scale * c + shift)


# ---------------------------------------------------------------------------
# gadgets


def heaviside(net: NeuralNet, x: Lin, delta: float) -> int:
    """H_delta(x) = clip(x / 2delta + 1/2, 0, 1).

    Realised as 1 - relu(1 - relu(x/2delta + 1/2)), the same piecewise-linear
    function as relu(x/2delta + 1/2) - relu(x/2delta - 1/2) but exactly 0 / 1 in
    floating point outside the ramp, however large |x| / delta gets.
    """
    r1 = node(net, RELU, x, 1.0 / (2 * delta), 0.5)
    r2 = net.add(RELU, [(r1, -1.0)], 1.0)
    return net.add(IDENTITY, [(r2, -1.0)], 1.0)


def square(net: NeuralNet, v: Lin, bound: float, levels: int) -> Lin:
    """v^2 for |v| <= bound via the sawtooth expansion x - sum g_s(x) / 4^s on x = |v|/bound."""
    a = node(net, RELU, v)
    b = node(net, RELU, v, -1.0)
    w = comb((1.0 / bound, lin(a)), (1.0 / bound, lin(b)))
    g = w
    acc = [(1.0, w)]
    for s in range(1, levels + 1):
        r0 = node(net, RELU, g)
        r1 = node(net, RELU, g, 1.0, -0.5)
        r2 = node(net, RELU, g, 1.0, -1.0)
        g = ([(r0, 2.0), (r1, -4.0), (r2, 2.0)], 0.0)
        acc.append((-(4.0 ** -s), g))
    return comb(*[(bound * bound * c, f) for c, f in acc])


def mul(net: NeuralNet, x: Lin, y: Lin, bound: float, eps: float) -> int:
    """x * y for x in [0, 1], |y| <= bound, within eps.

    x y = bound * ((x + y')^2 - x^2 - y'^2) / 2 with y' = y / bound.
    """
    bound = max(bound, 1.0)
    yp = comb((1.0 / bound, y))
    levels = mul_levels(bound, eps)
    sa = square(net, comb((1.0, x), (1.0, yp)), 2.5, levels)
    sx = square(net, x, 1.25, levels)
    sy = square(net, yp, 1.25, levels)
    return node(net, IDENTITY, comb((1.0, sa), (-1.0, sx), (-1.0, sy)), bound / 2)


def mul_levels(bound: float, eps: float) -> int:
    # one square on [-B, B] is off by at most B^2 2^(-2S-2); the three squares
    # (B = 2.5, 1.25, 1.25) scaled by bound/2 sum to bound * 9.375 * 2^(-2S-3)
    return max(1, math.ceil(0.5 * math.log2(max(bound, 1.0) * 9.375 / (8 * eps))))


def softplus_inverse(net: NeuralNet, x: Lin, p: HeadParams) -> int:
    """Bisection for softplus^-1(x) on [y*_min, y*_max], blended with x above x_large."""
    y_lo = net.const(p.y_min)
    y_hi = net.const(p.y_max)
    for _ in range(p.T):
        mid = net.add(IDENTITY, [(y_lo, 0.5), (y_hi, 0.5)])
        spm = net.add(SOFTPLUS, [(mid, 1.0)])
        c = heaviside(net, comb((1.0, lin(spm)), (-1.0, x)), p.delta)
        d_lo = mul(net, lin(c), ([(y_lo, 1.0), (mid, -1.0)], 0.0), p.mul_bound, p.eps_tilde)
        d_hi = mul(net, lin(c), ([(mid, 1.0), (y_hi, -1.0)], 0.0), p.mul_bound, p.eps_tilde)
        y_lo, y_hi = (net.add(IDENTITY, [(mid, 1.0), (d_lo, 1.0)]),
                      net.add(IDENTITY, [(y_hi, 1.0), (d_hi, 1.0)]))
    mid = net.add(IDENTITY, [(y_lo, 0.5), (y_hi, 0.5)])
    h = heaviside(net, comb((1.0, x), bias=-p.x_large), p.delta)
    cap = p.x_large + p.delta
    below = node(net, RELU, comb((-1.0, x), bias=cap))   # cap - min(x, cap)
    above = node(net, RELU, comb((1.0, x), bias=-cap))   # x - cap when x > cap
    # min(x, cap) - (1 - h)(min(x, cap) - mid): exact pass-through once h = 1
    gap = ([(below, -1.0), (mid, -1.0)], cap)
    blend = mul(net, comb((-1.0, lin(h)), bias=1.0), gap, p.blend_bound, p.eps_tilde)
    return net.add(IDENTITY, [(below, -1.0), (blend, -1.0), (above, 1.0)], cap)


def _t(x):
    return np.arctan(np.exp(x))


def _dt(x):
    return 1.0 / (np.exp(x) + np.exp(-x))


def anchors(eps_t: float) -> np.ndarray:
    x_min_t = math.log(eps_t)
    n = int(abs(x_min_t) / (4 * math.sqrt(eps_t))) + 1
    return np.linspace(x_min_t, 0.0, n + 1)


def _max_tree(net: NeuralNet, ids: list[int]) -> int:
    layer = ids
    while len(layer) > 1:
        nxt = []
        for j in range(0, len(layer) - 1, 2):
            a, b = layer[j], layer[j + 1]
            r = net.add(RELU, [(a, 1.0), (b, -1.0)])
            nxt.append(net.add(IDENTITY, [(b, 1.0), (r, 1.0)]))
        if len(layer) % 2:
            nxt.append(layer[-1])
        layer = nxt
    return layer[0]


def _tangent_max(net: NeuralNet, y: Lin, pts: np.ndarray) -> int:
    """max(0, max_j tangent_j(y)) for y <= 0."""
    lines = []
    for a in pts:
        slope, icpt = float(_dt(a)), float(_t(a) - _dt(a) * a)
        lines.append(node(net, IDENTITY, y, slope, icpt))
    return net.add(RELU, [(_max_tree(net, lines), 1.0)])


def arctan_exp(net: NeuralNet, u: Lin, eps_t: float) -> int:
    """arctan(exp(u)) within eps_t, using t(u) = pi/2 - t(-u) for u > 0."""
    pts = anchors(eps_t)
    neg = node(net, RELU, u, -1.0)   # -min(u, 0)
    pos = node(net, RELU, u)         # max(u, 0)
    left = _tangent_max(net, lin(neg, -1.0), pts)
    right = _tangent_max(net, lin(pos, -1.0), pts)
    return net.add(IDENTITY, [(left, 1.0), (right, -1.0)], math.pi / 4)


def log_abs_component(net: NeuralNet, o_pos: int, o_neg: int, p: HeadParams) -> int:
    """ln|e^o_pos - e^o_neg| = o_min + softplus^-1(o_max - o_min)."""
    dpos = net.add(RELU, [(o_pos, 1.0), (o_neg, -1.0)])
    dneg = net.add(RELU, [(o_neg, 1.0), (o_pos, -1.0)])
    x = ([(dpos, 1.0), (dneg, 1.0)], 0.0)
    y = softplus_inverse(net, x, p)
    return net.add(IDENTITY, [(o_neg, 1.0), (dneg, -1.0), (y, 1.0)])


def log_abs_head(net: NeuralNet, o: list[int], p: HeadParams) -> tuple[int, int, int]:
    """Returns (g1, ln|re z|, ln|im z|) for o = (o_re+, o_re-, o_im+, o_im-)."""
    lr = log_abs_component(net, o[0], o[1], p)
    li = log_abs_component(net, o[2], o[3], p)
    s = net.add(SOFTPLUS, [(li, 2.0), (lr, -2.0)])
    g1 = net.add(IDENTITY, [(lr, 1.0), (s, 0.5)])
    return g1, lr, li


def arg_head(net: NeuralNet, o: list[int], lr: int, li: int, p: HeadParams) -> int:
    """sgn(re im) arctan exp(ln|im| - ln|re|) + H(-re) sgn(im) pi, clamped to [-pi, pi]."""
    def sign(a, b):
        hp = heaviside(net, ([(a, 1.0), (b, -1.0)], 0.0), p.delta_sign)
        hn = heaviside(net, ([(b, 1.0), (a, -1.0)], 0.0), p.delta_sign)
        return [(hp, 1.0), (hn, -1.0)], 0.0

    sgn_re = sign(o[0], o[1])
    sgn_im = sign(o[2], o[3])
    neg_re = comb((-0.5, sgn_re), bias=0.5)
    a = arctan_exp(net, ([(li, 1.0), (lr, -1.0)], 0.0), p.eps_t)
    pm = mul(net, neg_re, sgn_im, 2.0, p.eps_mul_sign)
    q = comb((0.5, sgn_im), (-1.0, lin(pm)), bias=0.5)
    r = mul(net, q, lin(a), 2.0, p.eps_mul_arctan)
    raw = ([(r, 2.0), (a, -1.0), (pm, math.pi)], 0.0)
    lo = node(net, RELU, raw, 1.0, math.pi)
    hi = node(net, RELU, raw, 1.0, -math.pi)
    return net.add(IDENTITY, [(lo, 1.0), (hi, -1.0)], -math.pi)


def attach_heads(net: NeuralNet, o: list[int], p: HeadParams) -> tuple[int, int]:
    g1, lr, li = log_abs_head(net, o, p)
    g2 = arg_head(net, o, lr, li, p)
    return g1, g2


# ---------------------------------------------------------------------------
# standalone fragments


def _fragment(n_inputs: int, names=None):
    net = NeuralNet()
    names = names or [f"x{i}" for i in range(n_inputs)]
    ids = [net.add_input("value", name=nm) for nm in names]
    return net, ids


def build_heaviside(delta: float) -> NeuralNet:
    net, (x,) = _fragment(1)
    net.roots = [heaviside(net, lin(x), delta)]
    return net


def build_mul_gadget(bound: float, eps: float) -> NeuralNet:
    net, (x, y) = _fragment(2, ["x", "y"])
    net.roots = [mul(net, lin(x), lin(y), bound, eps)]
    return net


def build_softplus_inv(p: HeadParams) -> NeuralNet:
    net, (x,) = _fragment(1)
    net.roots = [softplus_inverse(net, lin(x), p)]
    return net


def build_arctan_exp(eps_t: float) -> NeuralNet:
    net, (x,) = _fragment(1)
    net.roots = [arctan_exp(net, lin(x), eps_t)]
    return net


def build_log_abs_head(p: HeadParams) -> NeuralNet:
    net, o = _fragment(4, ["o_re+", "o_re-", "o_im+", "o_im-"])
    g1, lr, li = log_abs_head(net, o, p)
    net.roots = [g1, lr, li]
    return net


def build_arg_head(p: HeadParams) -> NeuralNet:
    net, ids = _fragment(6, ["o_re+", "o_re-", "o_im+", "o_im-", "ln|re|", "ln|im|"])
    net.roots = [arg_head(net, ids[:4], ids[4], ids[5], p)]
    return net


def build_heads(p: HeadParams) -> NeuralNet:
    net, o = _fragment(4, ["o_re+", "o_re-", "o_im+", "o_im-"])
    net.roots = list(attach_heads(net, o, p))
    return net


# ---------------------------------------------------------------------------
# semantic mode: the same arithmetic without a graph


def heaviside_ref(x, delta):
    x = np.asarray(x, dtype=np.float64)
    return np.maximum(x / (2 * delta) + 0.5, 0) - np.maximum(x / (2 * delta) - 0.5, 0)


def square_ref(v, bound, levels):
    w = np.abs(v) / bound
    g, acc = w, w.copy()
    for s in range(1, levels + 1):
        g = 2 * np.maximum(g, 0) - 4 * np.maximum(g - 0.5, 0) + 2 * np.maximum(g - 1, 0)
        acc = acc - g / 4.0 ** s
    return bound * bound * acc


def mul_ref(x, y, bound, eps):
    bound = max(bound, 1.0)
    k = mul_levels(bound, eps)
    x = np.asarray(x, dtype=np.float64)
    yp = np.asarray(y, dtype=np.float64) / bound
    return bound / 2 * (square_ref(x + yp, 2.5, k) - square_ref(x, 1.25, k) - square_ref(yp, 1.25, k))


def softplus_inverse_ref(x, p: HeadParams, trace: list | None = None):
    """Semantic bisection; appends each stage's (lo, hi) to ``trace`` if given."""
    x = np.asarray(x, dtype=np.float64)
    lo = np.full_like(x, p.y_min)
    hi = np.full_like(x, p.y_max)
    for _ in range(p.T):
        mid = 0.5 * lo + 0.5 * hi
        c = np.clip((softplus(mid) - x) / (2 * p.delta) + 0.5, 0, 1)
        lo, hi = (mid + mul_ref(c, lo - mid, p.mul_bound, p.eps_tilde),
                  hi + mul_ref(c, mid - hi, p.mul_bound, p.eps_tilde))
        if trace is not None:
            trace.append((lo, hi))
    mid = 0.5 * lo + 0.5 * hi
    h = np.clip((x - p.x_large) / (2 * p.delta) + 0.5, 0, 1)
    cap = p.x_large + p.delta
    low = np.minimum(x, cap)
    return low - mul_ref(1 - h, low - mid, p.blend_bound, p.eps_tilde) + np.maximum(x - cap, 0)


def arctan_exp_ref(u, eps_t):
    pts = anchors(eps_t)
    u = np.asarray(u, dtype=np.float64)

    def pmax(y):
        lines = _t(pts)[:, None] + _dt(pts)[:, None] * (y[None, :] - pts[:, None])
        return np.maximum(lines.max(axis=0), 0)

    return pmax(np.minimum(u, 0)) - pmax(-np.maximum(u, 0)) + math.pi / 4


def heads_ref(o, p: HeadParams):
    """Semantic (g1, g2) for o shaped (4, batch)."""
    o = np.asarray(o, dtype=np.float64)

    def comp(a, b):
        x = np.abs(a - b)
        return np.minimum(a, b) + softplus_inverse_ref(x, p)

    lr, li = comp(o[0], o[1]), comp(o[2], o[3])
    g1 = lr + 0.5 * softplus(2 * li - 2 * lr)

    def sign(a, b):
        return np.clip((a - b) / (2 * p.delta_sign) + 0.5, 0, 1) - np.clip((b - a) / (2 * p.delta_sign) + 0.5, 0, 1)

    s_re, s_im = sign(o[0], o[1]), sign(o[2], o[3])
    a = arctan_exp_ref(li - lr, p.eps_t)
    pm = mul_ref((1 - s_re) / 2, s_im, 2.0, p.eps_mul_sign)
    r = mul_ref((1 + s_im) / 2 - pm, a, 2.0, p.eps_mul_arctan)
    g2 = np.clip(2 * r - a + math.pi * pm, -math.pi, math.pi)
    return g1, g2
