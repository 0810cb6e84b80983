"""Sequential and parallel MPS contraction schedules with multiplication accounting."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .tensor_core import MPS


class PlanError(ValueError):
    pass


@dataclass(frozen=True)
class Step:
    kind: str  # "embed" | "contract"
    site: int | None = None
    left: int | None = None
    right: int | None = None
    round: int = 0


@dataclass(frozen=True)
class ContractionPlan:
    scheme: str
    n_sites: int
    steps: tuple[Step, ...]

    @property
    def result(self) -> int:
        return len(self.steps) - 1

    @property
    def n_rounds(self) -> int:
        """Contraction rounds, excluding the embedding round."""
        return max((st.round for st in self.steps), default=0)

    def round_depth(self) -> int:
        return 1 + self.n_rounds

    def to_json(self) -> str:
        rows = []
        for i, st in enumerate(self.steps):
            if st.kind == "embed":
                rows.append({"id": i, "kind": "embed", "site": st.site, "round": 0})
            else:
                rows.append({"id": i, "kind": "contract", "left": st.left, "right": st.right, "round": st.round})
        return json.dumps({"scheme": self.scheme, "n": self.n_sites, "steps": rows})

    @classmethod
    def from_json(cls, text: str) -> ContractionPlan:
        doc = json.loads(text)
        steps = tuple(
            Step("embed", site=r["site"]) if r["kind"] == "embed"
            else Step("contract", left=r["left"], right=r["right"], round=r["round"])
            for r in doc["steps"]
        )
        return cls(doc["scheme"], doc["n"], steps)


@dataclass
class CostReport:
    multiply_count: int = 0
    round_depth: int = 0
    per_round: list[int] = field(default_factory=list)
    per_round_contractions: list[int] = field(default_factory=list)


def plan_sequential(mps: MPS) -> ContractionPlan:
    n = mps.n
    steps = [Step("embed", site=i) for i in range(n)]
    acc = 0
    for i in range(1, n):
        steps.append(Step("contract", left=acc, right=i, round=i))
        acc = len(steps) - 1
    return ContractionPlan("sequential", n, tuple(steps))


def plan_parallel(mps: MPS) -> ContractionPlan:
    n = mps.n
    steps = [Step("embed", site=i) for i in range(n)]
    layer = list(range(n))
    rnd = 0
    while len(layer) > 1:
        rnd += 1
        nxt = []
        for j in range(0, len(layer) - 1, 2):
            steps.append(Step("contract", left=layer[j], right=layer[j + 1], round=rnd))
            nxt.append(len(steps) - 1)
        if len(layer) % 2:
            # the unpaired operand is carried into the next round untouched
            nxt.append(layer[-1])
        layer = nxt
    return ContractionPlan("parallel", n, tuple(steps))


def make_plan(mps: MPS, scheme: str) -> ContractionPlan:
    if scheme == "sequential":
        return plan_sequential(mps)
    if scheme == "parallel":
        return plan_parallel(mps)
    raise PlanError(f"unknown scheme {scheme!r}")


def operand_shapes(mps: MPS, plan: ContractionPlan) -> list[tuple[int, int]]:
    """(rows, cols) of the matrix produced by every step."""
    if plan.n_sites != mps.n:
        raise PlanError(f"plan is for {plan.n_sites} sites, MPS has {mps.n}")
    shapes: list[tuple[int, int]] = []
    seen = set()
    for i, st in enumerate(plan.steps):
        if st.kind == "embed":
            if st.site in seen or not 0 <= st.site < mps.n:
                raise PlanError(f"bad embed of site {st.site}")
            seen.add(st.site)
            l, _, r = mps.sites[st.site].shape
            shapes.append((l, r))
        else:
            if not (0 <= st.left < i and 0 <= st.right < i):
                raise PlanError(f"step {i} references a later step")
            a, b = shapes[st.left], shapes[st.right]
            if a[1] != b[0]:
                raise PlanError(f"step {i}: shape mismatch {a} x {b}")
            shapes.append((a[0], b[1]))
    if len(seen) != mps.n or shapes[-1] != (1, 1):
        raise PlanError("plan does not reduce the MPS to a scalar")
    return shapes


def plan_cost(mps: MPS, plan: ContractionPlan) -> CostReport:
    shapes = operand_shapes(mps, plan)
    per_round = [0] * (plan.n_rounds + 1)
    per_round_c = [0] * (plan.n_rounds + 1)
    for i, st in enumerate(plan.steps):
        if st.kind == "embed":
            l, d, r = mps.sites[st.site].shape
            per_round[0] += d * l * r
        else:
            p, q = shapes[st.left]
            per_round[st.round] += p * q * shapes[st.right][1]
            per_round_c[st.round] += 1
    return CostReport(sum(per_round), plan.round_depth(), per_round, per_round_c[1:])


def execute_plan(mps: MPS, plan: ContractionPlan, s: Sequence[int]) -> tuple[complex, CostReport]:
    s = mps.check_state(s)
    report = plan_cost(mps, plan)
    vals: list[np.ndarray] = []
    for st in plan.steps:
        if st.kind == "embed":
            vals.append(mps.matrix(st.site, s[st.site]))
        else:
            vals.append(vals[st.left] @ vals[st.right])
    return complex(vals[-1][0, 0]), report
