"""Detection chain: ideal multi-atom spectra ρ_i to post-selected signals S_N.

Two stages are applied. First, a binomial fine-structure dilution: only a
fraction p32 of the excited atoms land in the interacting 37P3/2 level. Second,
a Poisson mixing over undetected atoms, with λ = n̄(1 − T).
"""

from __future__ import annotations

import logging
import warnings
from collections.abc import Mapping, Sequence
from dataclasses import dataclass
from math import comb, exp, factorial

import numpy as np

from .montecarlo import Spectrum

log = logging.getLogger(__name__)

TAIL_WARN = 1e-3
TAIL_CLOSURES = ("saturate", "truncate")


class TruncationWarning(UserWarning):
    """The Poisson tail dropped at i_max exceeds TAIL_WARN."""


@dataclass(frozen=True)
class DetectionChain:
    """Detector and excitation parameters.

    ``tail_closure`` decides what happens to Poisson weight beyond ``i_max``:
    "truncate" drops it, "saturate" assigns it to the ρ̃ of ``i_max`` (the
    spectra saturate with i, so this is the closer estimate of the infinite sum).
    """

    n_bar: float = 1.05
    T: float = 0.65
    rho_bg: float = 0.01
    p32: float = 0.52
    i_max: int = 5
    tail_closure: str = "saturate"

    def __post_init__(self):
        if not (np.isfinite(self.n_bar) and self.n_bar >= 0):
            raise ValueError(f"n_bar must be finite and >= 0, got {self.n_bar}")
        if not 0 < self.T <= 1:
            raise ValueError(f"detection efficiency T must lie in (0, 1], got {self.T}")
        if not 0 <= self.p32 <= 1:
            raise ValueError(f"p32 must lie in [0, 1], got {self.p32}")
        if not np.isfinite(self.rho_bg):
            raise ValueError("rho_bg must be finite")
        if int(self.i_max) != self.i_max or self.i_max < 2:
            raise ValueError(f"i_max must be an integer >= 2, got {self.i_max}")
        if self.tail_closure not in TAIL_CLOSURES:
            raise ValueError(f"tail_closure must be one of {TAIL_CLOSURES}, got {self.tail_closure!r}")

    @property
    def lam(self) -> float:
        return self.n_bar * (1.0 - self.T)

    @property
    def p12(self) -> float:
        return 1.0 - self.p32


def poisson_weight(j: int, lam: float) -> float:
    return exp(-lam) * lam**j / factorial(j)


def binomial_weight(k: int, i: int, p: float) -> float:
    return comb(i, k) * p**k * (1.0 - p) ** (i - k)


def poisson_tail(lam: float, n_kept: int) -> float:
    """Mass of Pois(λ) above ``n_kept - 1``, i.e. 1 − Σ_{j<n_kept} Pois(j; λ)."""
    return max(0.0, 1.0 - sum(poisson_weight(j, lam) for j in range(n_kept)))


def _as_indexed(spectra, first: int) -> dict[int, Spectrum]:
    if isinstance(spectra, Mapping):
        return dict(spectra)
    if isinstance(spectra, Sequence):
        return {first + n: s for n, s in enumerate(spectra)}
    raise TypeError("spectra must be a mapping {i: Spectrum} or a sequence starting at i=%d" % first)


def _common_grid(spectra: Mapping[int, Spectrum]) -> np.ndarray:
    grids = [s.detunings for s in spectra.values()]
    if not grids:
        raise ValueError("no input spectra")
    ref = grids[0]
    for g in grids[1:]:
        if g.shape != ref.shape or not np.array_equal(g, ref):
            raise ValueError("input spectra do not share one detuning grid")
    return ref


def fine_structure_mix(rho, i: int, p32: float, i_max: int | None = None) -> Spectrum:
    """ρ̃_i = Σ_{k=2}^{i} ρ_k · Binom(k; i, p32).

    ``rho`` maps k to the ideal spectrum of k interacting atoms (a sequence is
    taken to start at k=2). Terms with k > i_max or missing from ``rho`` are
    dropped; their binomial weight is returned as ``meta["truncation_mass"]``.
    """
    rho = _as_indexed(rho, 2)
    grid = _common_grid(rho)
    if i < 1:
        raise ValueError(f"atom count must be >= 1, got {i}")
    if i_max is None:
        i_max = max(rho)
    values = np.zeros_like(grid)
    var = np.zeros_like(grid)
    dropped = 0.0
    for k in range(2, i + 1):
        w = binomial_weight(k, i, p32)
        if k > i_max or k not in rho:
            dropped += w
            continue
        values = values + w * rho[k].values
        var = var + (w * rho[k].stderr) ** 2
    return Spectrum(grid, values, np.sqrt(var), meta={"kind": "rho_tilde", "i": i, "p32": p32, "truncation_mass": dropped})


def detection_mix(rho_tilde, chain: DetectionChain, N: int) -> Spectrum:
    """S_N = ρ_bg + e^{-λ} Σ_{i=N}^{i_max} ρ̃_i λ^{i−N}/(i−N)!  plus the tail closure.

    ``rho_tilde`` maps i to the diluted spectrum ρ̃_i; i=1 carries no resonant
    pair and may be omitted. The dropped Poisson mass is attached as
    ``meta["tail_mass"]``.
    """
    rho_tilde = _as_indexed(rho_tilde, 2)
    if N < 1:
        raise ValueError(f"detected count N must be >= 1, got {N}")
    if N > chain.i_max:
        raise ValueError(f"detected count N={N} exceeds i_max={chain.i_max}")
    missing = [i for i in range(max(N, 2), chain.i_max + 1) if i not in rho_tilde]
    if missing:
        raise ValueError(f"rho_tilde missing for i={missing}")
    grid = _common_grid({i: rho_tilde[i] for i in range(max(N, 2), chain.i_max + 1)})
    lam = chain.lam
    values = np.zeros_like(grid)
    var = np.zeros_like(grid)
    for i in range(max(N, 2), chain.i_max + 1):
        w = poisson_weight(i - N, lam)
        values = values + w * rho_tilde[i].values
        var = var + (w * rho_tilde[i].stderr) ** 2
    tail = poisson_tail(lam, chain.i_max - N + 1)
    if chain.tail_closure == "saturate":
        values = values + tail * rho_tilde[chain.i_max].values
        var = var + (tail * rho_tilde[chain.i_max].stderr) ** 2
    elif tail > TAIL_WARN:
        warnings.warn(
            f"Poisson tail mass {tail:.3g} dropped for N={N} at i_max={chain.i_max}", TruncationWarning, stacklevel=2
        )
    return Spectrum(
        grid,
        values + chain.rho_bg,
        np.sqrt(var),
        meta={"kind": "s_n", "N": N, "tail_mass": tail, "tail_closure": chain.tail_closure},
    )


def observed_signals(rho, chain: DetectionChain, Ns=None) -> dict[int, Spectrum]:
    """Full chain from ideal ρ_k (k = 2..i_max) to S_N for each N in ``Ns`` (default 1..i_max)."""
    rho = _as_indexed(rho, 2)
    rho_tilde = {i: fine_structure_mix(rho, i, chain.p32, chain.i_max) for i in range(2, chain.i_max + 1)}
    Ns = range(1, chain.i_max + 1) if Ns is None else Ns
    return {N: detection_mix(rho_tilde, chain, N) for N in Ns}


@dataclass(frozen=True)
class InteractionHistogram:
    """Distribution of the number k of actually interacting atoms behind S_N.

    ``weights`` has the key "none" (no resonant pair) plus integer keys
    2..i_max; together with ``tail_mass`` it sums to one.
    """

    N: int
    weights: dict
    tail_mass: float

    def resonant_share(self, k: int) -> float:
        resonant = sum(w for key, w in self.weights.items() if key != "none")
        return self.weights[k] / resonant if resonant > 0 else 0.0


def interaction_histogram(chain: DetectionChain, N: int) -> InteractionHistogram:
    if N < 1:
        raise ValueError(f"detected count N must be >= 1, got {N}")
    if N > chain.i_max:
        raise ValueError(f"detected count N={N} exceeds i_max={chain.i_max}")
    lam, p = chain.lam, chain.p32
    weights = {"none": 0.0, **{k: 0.0 for k in range(2, chain.i_max + 1)}}
    for i in range(N, chain.i_max + 1):
        w_i = poisson_weight(i - N, lam)
        for k in range(0, i + 1):
            w = w_i * binomial_weight(k, i, p)
            weights["none" if k < 2 else k] += w
    tail = poisson_tail(lam, chain.i_max - N + 1)
    if chain.tail_closure == "truncate" and tail > TAIL_WARN:
        warnings.warn(f"Poisson tail mass {tail:.3g} beyond i_max={chain.i_max} for N={N}", TruncationWarning, stacklevel=2)
    return InteractionHistogram(N, weights, tail)


def extract_params(alpha: float, n_bar_T: float) -> tuple[float, float]:
    """Recover (n̄, T) from the S₁/S₂ amplitude ratio and the mean detected count n̄T."""
    if not 0 <= alpha < 1:
        raise ValueError(f"amplitude ratio alpha must lie in [0, 1), got {alpha}")
    if not n_bar_T > 0:
        raise ValueError(f"mean detected count must be > 0, got {n_bar_T}")
    n_bar = alpha / (1.0 - alpha) + n_bar_T
    T = n_bar_T / n_bar
    if not 0 < T <= 1:
        raise ValueError(f"inconsistent inputs give detection efficiency T={T}")
    return n_bar, T
