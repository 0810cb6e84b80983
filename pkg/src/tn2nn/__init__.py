"""Compile matrix product states into softplus networks computing log-amplitudes."""
from .tensor_core import MPS, DenseTensor, contract_exact, log_amplitude, random_mps

__all__ = ["MPS", "DenseTensor", "contract_exact", "log_amplitude", "random_mps"]
