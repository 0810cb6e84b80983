"""Dense complex tensors, the MPS container and the exact contraction oracle."""
from __future__ import annotations

import cmath
import itertools
import json
import math
from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np


class PreconditionError(ValueError):
    """Raised when an operation is called with inputs outside its contract."""


class LogUndefinedError(ArithmeticError):
    """Raised when the log of a zero amplitude is requested."""


@dataclass(frozen=True)
class DenseTensor:
    """Row-major complex tensor stored as separate real/imaginary flat arrays."""

    shape: tuple[int, ...]
    re: np.ndarray
    im: np.ndarray

    def __post_init__(self):
        if not self.shape or any(int(e) < 1 for e in self.shape):
            raise PreconditionError(f"invalid shape {self.shape}")
        size = math.prod(self.shape)
        if len(self.re) != size or len(self.im) != size:
            raise PreconditionError(
                f"data length {len(self.re)} does not match shape {self.shape}"
            )

    @classmethod
    def from_array(cls, arr) -> DenseTensor:
        arr = np.asarray(arr, dtype=np.complex128)
        flat = arr.reshape(-1)
        return cls(tuple(int(e) for e in arr.shape), flat.real.copy(), flat.imag.copy())

    def strides(self) -> tuple[int, ...]:
        out = [1] * len(self.shape)
        for i in range(len(self.shape) - 2, -1, -1):
            out[i] = out[i + 1] * self.shape[i + 1]
        return tuple(out)

    def __getitem__(self, index: tuple[int, ...]) -> complex:
        if len(index) != len(self.shape):
            raise PreconditionError("index rank mismatch")
        offset = 0
        for k, st, ext in zip(index, self.strides(), self.shape):
            if not 0 <= k < ext:
                raise PreconditionError(f"index {index} out of range for {self.shape}")
            offset += k * st
        return complex(self.re[offset], self.im[offset])

    def to_array(self) -> np.ndarray:
        return (self.re + 1j * self.im).reshape(self.shape)


@dataclass(frozen=True)
class MPS:
    """Open-boundary matrix product state; site ``i`` has shape (chi_l, d_i, chi_r)."""

    sites: tuple[DenseTensor, ...]

    def __post_init__(self):
        if len(self.sites) < 2:
            raise PreconditionError("an MPS needs at least two sites")
        for t in self.sites:
            if len(t.shape) != 3:
                raise PreconditionError(f"site tensor must be rank 3, got {t.shape}")
        if self.sites[0].shape[0] != 1 or self.sites[-1].shape[2] != 1:
            raise PreconditionError("boundary bond dimensions must be 1")
        for i in range(len(self.sites) - 1):
            if self.sites[i].shape[2] != self.sites[i + 1].shape[0]:
                raise PreconditionError(f"bond mismatch between sites {i} and {i + 1}")

    @classmethod
    def from_arrays(cls, arrays: Sequence) -> MPS:
        return cls(tuple(DenseTensor.from_array(a) for a in arrays))

    @property
    def n(self) -> int:
        return len(self.sites)

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(t.shape[1] for t in self.sites)

    @property
    def d(self) -> int:
        return max(self.dims)

    @property
    def chi(self) -> int:
        return max(max(t.shape[0], t.shape[2]) for t in self.sites)

    def arrays(self) -> list[np.ndarray]:
        return [t.to_array() for t in self.sites]

    def matrix(self, i: int, k: int) -> np.ndarray:
        """The (chi_l, chi_r) matrix selected by local index ``k`` at site ``i``."""
        return self.sites[i].to_array()[:, k, :]

    def check_state(self, s: Sequence[int]) -> tuple[int, ...]:
        s = tuple(int(v) for v in s)
        if len(s) != self.n:
            raise PreconditionError(f"state has length {len(s)}, expected {self.n}")
        for i, (v, d) in enumerate(zip(s, self.dims)):
            if not 0 <= v < d:
                raise PreconditionError(f"s[{i}]={v} out of range for local dimension {d}")
        return s

    def num_states(self) -> int:
        return math.prod(self.dims)

    def to_json(self) -> str:
        doc = {
            "n": self.n,
            "d": self.d,
            "chi": self.chi,
            "sites": [
                {"shape": list(t.shape), "re": [float(x) for x in t.re], "im": [float(x) for x in t.im]}
                for t in self.sites
            ],
        }
        return json.dumps(doc)

    @classmethod
    def from_json(cls, text: str) -> MPS:
        doc = json.loads(text)
        sites = tuple(
            DenseTensor(
                tuple(int(e) for e in site["shape"]),
                np.asarray(site["re"], dtype=np.float64),
                np.asarray(site["im"], dtype=np.float64),
            )
            for site in doc["sites"]
        )
        mps = cls(sites)
        if mps.n != doc["n"]:
            raise PreconditionError("site count does not match 'n'")
        return mps


def contract_exact(mps: MPS, s: Sequence[int]) -> complex:
    """Evaluate Psi(s) by left-to-right vector-matrix products."""
    s = mps.check_state(s)
    vec = np.ones(1, dtype=np.complex128)
    for i, k in enumerate(s):
        vec = vec @ mps.matrix(i, k)
    return complex(vec[0])


def contract_batch(mps: MPS, states: np.ndarray) -> np.ndarray:
    """Vectorised ``contract_exact`` over a (batch, N) integer array."""
    states = np.asarray(states, dtype=np.int64)
    arrays = mps.arrays()
    vec = np.ones((len(states), 1), dtype=np.complex128)
    for i, a in enumerate(arrays):
        mats = np.transpose(a, (1, 0, 2))[states[:, i]]
        vec = np.einsum("bl,blr->br", vec, mats)
    return vec[:, 0]


def log_amplitude(mps: MPS, s: Sequence[int]) -> tuple[float, float]:
    """Return (ln|Psi(s)|, arg Psi(s)) with the phase in (-pi, pi]."""
    psi = contract_exact(mps, s)
    if psi == 0:
        raise LogUndefinedError(f"log undefined: Psi{tuple(s)} = 0")
    phase = cmath.phase(psi)
    if phase == -math.pi:
        phase = math.pi
    return math.log(abs(psi)), phase


def all_states(dims: Sequence[int]) -> Iterator[tuple[int, ...]]:
    return itertools.product(*(range(d) for d in dims))


def state_array(dims: Sequence[int]) -> np.ndarray:
    return np.array(list(all_states(dims)), dtype=np.int64).reshape(-1, len(dims))


def sample_states(dims: Sequence[int], count: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return np.stack([rng.integers(0, d, size=count) for d in dims], axis=1)


ENUMERATION_LIMIT_BITS = 20


def random_mps(n: int, d: int, chi: int, seed: int = 0, scale: float | None = None) -> MPS:
    """Random complex Gaussian MPS, deterministic in ``seed``.

    When the state space is small enough to enumerate, a draw where any basis
    state has an exactly zero real or imaginary part is rejected and redrawn
    with ``seed + 1``.
    """
    if n < 2 or d < 2 or chi < 1:
        raise PreconditionError(f"need N>=2, d>=2, chi>=1; got N={n}, d={d}, chi={chi}")
    if scale is None:
        scale = chi ** -0.5
    enumerable = n * math.log2(d) <= ENUMERATION_LIMIT_BITS
    while True:
        rng = np.random.default_rng(seed)
        arrays = []
        for i in range(n):
            left = 1 if i == 0 else chi
            right = 1 if i == n - 1 else chi
            shape = (left, d, right)
            arrays.append(scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)))
        mps = MPS.from_arrays(arrays)
        if not enumerable:
            return mps
        psi = contract_batch(mps, state_array(mps.dims))
        if np.all(psi.real != 0) and np.all(psi.imag != 0):
            return mps
        seed += 1


def insert_gauge(mps: MPS, bond: int, g: np.ndarray) -> MPS:
    """Insert G, G^-1 on the bond between sites ``bond`` and ``bond + 1``."""
    arrays = mps.arrays()
    g = np.asarray(g, dtype=np.complex128)
    arrays[bond] = np.einsum("ldr,rs->lds", arrays[bond], g)
    arrays[bond + 1] = np.einsum("ml,ldr->mdr", np.linalg.inv(g), arrays[bond + 1])
    return MPS.from_arrays(arrays)
