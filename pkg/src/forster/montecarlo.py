"""Realization-averaged Förster spectra ρ_i(Δ) over random atom geometries."""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .basis import enumerate_states
from .evolution import TWO_PI, PropagationError, initial_state, propagate, transfer_fraction
from .interaction import CouplingConstants, build_hamiltonian, coupling_matrix, coupling_structure, sample_positions

log = logging.getLogger(__name__)

PAPER_T0 = 0.515  # µs, effective interaction time
PAPER_L = 18.0  # µm
PAPER_REALIZATIONS = 500


def detuning_grid(start: float = -15.0, stop: float = 15.0, step: float = 0.25) -> np.ndarray:
    """Inclusive, evenly spaced grid; built from integer multiples so it is reproducible."""
    if not step > 0:
        raise ValueError(f"grid step must be > 0, got {step}")
    if stop < start:
        raise ValueError(f"grid max {stop} is below grid min {start}")
    n = int(round((stop - start) / step)) + 1
    return start + step * np.arange(n)


@dataclass(frozen=True)
class SpectrumRequest:
    i: int
    detunings: tuple[float, ...] = tuple(detuning_grid())
    t0: float = PAPER_T0
    L: float = PAPER_L
    n_realizations: int = PAPER_REALIZATIONS
    constants: CouplingConstants = CouplingConstants()
    seed: int = 0

    def __post_init__(self):
        enumerate_states(self.i)  # raises BasisError with the bound
        object.__setattr__(self, "detunings", tuple(float(d) for d in self.detunings))
        d = np.asarray(self.detunings)
        if d.size == 0:
            raise ValueError("detuning grid is empty")
        if not np.all(np.isfinite(d)):
            raise ValueError("detunings must be finite")
        if np.any(np.diff(d) <= 0):
            raise ValueError("detunings must be strictly increasing")
        if not self.t0 >= 0:
            raise ValueError(f"t0 must be >= 0, got {self.t0}")
        if not self.L > 0:
            raise ValueError(f"L must be > 0, got {self.L}")
        if self.n_realizations < 1:
            raise ValueError(f"n_realizations must be >= 1, got {self.n_realizations}")
        if not 0 <= self.seed < 2**64:
            raise ValueError(f"seed must be a 64-bit unsigned integer, got {self.seed}")

    def as_dict(self) -> dict:
        out = asdict(self)
        out["detunings"] = list(self.detunings)
        return out


@dataclass(frozen=True)
class Spectrum:
    detunings: np.ndarray
    values: np.ndarray
    stderr: np.ndarray
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        for name in ("detunings", "values", "stderr"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))
        if not (self.detunings.shape == self.values.shape == self.stderr.shape):
            raise ValueError("detunings, values and stderr must have equal lengths")

    def __len__(self) -> int:
        return len(self.detunings)

    def value_at(self, delta: float) -> tuple[float, float]:
        k = int(np.argmin(np.abs(self.detunings - delta)))
        return float(self.values[k]), float(self.stderr[k])


def realization_stream(seed: int, r: int) -> np.random.Generator:
    """Philox stream keyed by (seed, r); independent of execution order and worker count."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(r,))))


def _transfer_curve(h0: np.ndarray, flips: np.ndarray, detunings: np.ndarray, t0: float, i: int) -> np.ndarray:
    """Transfer fraction for each detuning, with all grid points eigensolved in one batch."""
    stack = np.repeat(h0[None, :, :], len(detunings), axis=0)
    diag = np.arange(h0.shape[0])
    stack[:, diag, diag] = detunings[:, None] * flips[None, :]
    energies, vecs = np.linalg.eigh(stack)
    # the initial all-P state is basis vector 0
    coeffs = np.exp(-1j * TWO_PI * energies * t0) * vecs[:, 0, :].conj()
    psi = np.einsum("dij,dj->di", vecs, coeffs)
    return (np.abs(psi) ** 2) @ flips / i


def _run_realization(req: SpectrumRequest, r: int) -> np.ndarray:
    config = sample_positions(req.i, req.L, realization_stream(req.seed, r))
    flips = coupling_structure(req.i).flips
    detunings = np.asarray(req.detunings)
    h0 = coupling_matrix(req.i, config, req.constants)
    try:
        return _transfer_curve(h0, flips, detunings, req.t0, req.i)
    except np.linalg.LinAlgError:
        pass
    # locate the offending grid point with the scalar path
    basis = enumerate_states(req.i)
    out = np.empty(len(detunings))
    for k, delta in enumerate(detunings):
        h = build_hamiltonian(basis, config, delta, req.constants)
        try:
            out[k] = transfer_fraction(propagate(h, initial_state(basis), req.t0), basis)
        except PropagationError as exc:
            raise PropagationError(f"realization r={r}, detuning {delta} MHz: {exc}") from exc
    return out


def _run_chunk(req: SpectrumRequest, realizations: range) -> np.ndarray:
    return np.stack([_run_realization(req, r) for r in realizations])


def realization_matrix(req: SpectrumRequest, workers: int = 1) -> np.ndarray:
    """Per-realization transfer fractions, shape (n_realizations, n_detunings), rows in r order."""
    n = req.n_realizations
    if workers <= 1:
        return _run_chunk(req, range(n))
    bounds = np.linspace(0, n, min(workers * 4, n) + 1).astype(int)
    chunks = [range(a, b) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        parts = list(pool.map(_run_chunk, [req] * len(chunks), chunks))
    return np.concatenate(parts, axis=0)


def simulate_spectrum(req: SpectrumRequest, workers: int = 1) -> Spectrum:
    """Average the transfer fraction over ``req.n_realizations`` random geometries.

    One geometry is drawn per realization and shared by the whole detuning grid.
    The reduction runs over realizations in ascending order, so the output does
    not depend on ``workers``.
    """
    log.info("simulating i=%d over %d realizations x %d detunings", req.i, req.n_realizations, len(req.detunings))
    samples = realization_matrix(req, workers)
    n = samples.shape[0]
    values = np.clip(samples.mean(axis=0), 0.0, 0.5)
    stderr = samples.std(axis=0, ddof=1) / np.sqrt(n) if n > 1 else np.zeros(samples.shape[1])
    return Spectrum(np.asarray(req.detunings), values, stderr, meta={"request": req.as_dict(), "kind": "rho", "i": req.i})
