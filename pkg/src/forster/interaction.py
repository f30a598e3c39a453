"""Random atom geometries and the dipole-dipole interaction Hamiltonian.

Energies are linear frequencies in MHz, distances in µm, so the coupling
constants carry units of MHz·µm³. The z axis is the dc electric field.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .basis import AtomLevel, CollectiveBasis, enumerate_states

R_MIN = 0.1  # µm; resample floor keeping the 1/R³ coupling finite
MAX_REJECTIONS = 1000

P, S, SP = AtomLevel.P, AtomLevel.S, AtomLevel.Sp

FORSTER, EXCHANGE_S, EXCHANGE_SP = 0, 1, 2

# (level_a, level_b) -> reachable pair levels and channel
_CHANNEL_RULES = {
    (P, P): (((S, SP), FORSTER), ((SP, S), FORSTER)),
    (S, SP): (((P, P), FORSTER),),
    (SP, S): (((P, P), FORSTER),),
    (S, P): (((P, S), EXCHANGE_S),),
    (P, S): (((S, P), EXCHANGE_S),),
    (SP, P): (((P, SP), EXCHANGE_SP),),
    (P, SP): (((SP, P), EXCHANGE_SP),),
}


class GeometryError(ValueError):
    """Raised for atom geometries that violate the pair-distance floor or size constraints."""


@dataclass(frozen=True)
class CouplingConstants:
    c3_forster: float = 300.0
    c3_exchange_s: float = 300.0
    c3_exchange_sp: float = 300.0

    def __post_init__(self):
        for name in ("c3_forster", "c3_exchange_s", "c3_exchange_sp"):
            value = getattr(self, name)
            if not np.isfinite(value) or value < 0:
                raise ValueError(f"{name} must be finite and >= 0, got {value!r}")

    def as_array(self) -> np.ndarray:
        return np.array([self.c3_forster, self.c3_exchange_s, self.c3_exchange_sp])


@dataclass(frozen=True)
class AtomConfiguration:
    positions: np.ndarray  # (i, 3), µm
    L: float

    @property
    def i(self) -> int:
        return len(self.positions)


@dataclass(frozen=True)
class InteractionHamiltonian:
    entries: np.ndarray  # (dim, dim) complex, MHz
    delta: float

    @property
    def dim(self) -> int:
        return self.entries.shape[0]


def _pair_distances(positions: np.ndarray) -> np.ndarray:
    a, b = np.triu_indices(len(positions), k=1)
    return np.linalg.norm(positions[b] - positions[a], axis=1)


def sample_positions(i: int, L: float, stream: np.random.Generator, r_min: float = R_MIN) -> AtomConfiguration:
    """Draw ``i`` positions uniformly in the cube [0, L]³.

    Whole configurations with any pair closer than ``r_min`` are rejected and
    redrawn; after MAX_REJECTIONS consecutive rejections a GeometryError is raised.
    """
    if i < 1:
        raise GeometryError(f"atom count must be >= 1, got {i}")
    if not L > 0:
        raise GeometryError(f"cube side L must be > 0, got {L}")
    for _ in range(MAX_REJECTIONS):
        positions = stream.uniform(0.0, L, size=(i, 3))
        if i == 1 or _pair_distances(positions).min() >= r_min:
            return AtomConfiguration(positions, float(L))
    raise GeometryError(
        f"{MAX_REJECTIONS} consecutive configurations of {i} atoms in a {L} µm cube "
        f"violated r_min={r_min} µm"
    )


def pair_coupling(pos_a, pos_b, c3: float, r_min: float = R_MIN) -> float:
    """Dipole-dipole coupling c3·(1 − 3 Z²/R²)/R³ between two atoms, in MHz."""
    d = np.asarray(pos_b, dtype=float) - np.asarray(pos_a, dtype=float)
    r = float(np.sqrt(d @ d))
    if r < r_min:
        raise GeometryError(f"pair distance {r:.3g} µm is below r_min={r_min} µm")
    return c3 * (1.0 - 3.0 * (d[2] / r) ** 2) / r**3


def _angular_couplings(positions: np.ndarray, r_min: float = R_MIN) -> np.ndarray:
    """(1 − 3 cos²θ)/R³ for every pair a < b, in triu order."""
    a, b = np.triu_indices(len(positions), k=1)
    d = positions[b] - positions[a]
    r = np.linalg.norm(d, axis=1)
    if len(r) and r.min() < r_min:
        raise GeometryError(f"pair distance {r.min():.3g} µm is below r_min={r_min} µm")
    return (1.0 - 3.0 * (d[:, 2] / r) ** 2) / r**3


@dataclass(frozen=True)
class CouplingStructure:
    """Upper-triangle sparsity pattern of the interaction Hamiltonian for one basis.

    ``rows < cols`` always; ``pair`` indexes atom pairs in ``np.triu_indices``
    order and ``channel`` selects which coupling constant applies.
    """

    rows: np.ndarray
    cols: np.ndarray
    pair: np.ndarray
    channel: np.ndarray
    flips: np.ndarray


@lru_cache(maxsize=None)
def coupling_structure(i: int) -> CouplingStructure:
    basis = enumerate_states(i)
    pair_ids = {(a, b): n for n, (a, b) in enumerate(zip(*np.triu_indices(i, k=1)))}
    rows, cols, pairs, channels = [], [], [], []
    for k, state in enumerate(basis.states):
        levels = state.levels
        for (a, b), n in pair_ids.items():
            for (la, lb), channel in _CHANNEL_RULES.get((levels[a], levels[b]), ()):
                target = list(levels)
                target[a], target[b] = la, lb
                col = basis.index[tuple(target)]
                if col > k:
                    rows.append(k)
                    cols.append(col)
                    pairs.append(n)
                    channels.append(channel)
    as_int = lambda x: np.array(x, dtype=np.intp)
    return CouplingStructure(as_int(rows), as_int(cols), as_int(pairs), as_int(channels), basis.flip_counts())


def coupling_matrix(i: int, config: AtomConfiguration, constants: CouplingConstants) -> np.ndarray:
    """Off-diagonal (Δ-independent) part of the Hamiltonian as a real symmetric matrix."""
    st = coupling_structure(i)
    dim = len(st.flips)
    values = _angular_couplings(np.asarray(config.positions, dtype=float))[st.pair] * constants.as_array()[st.channel]
    h0 = np.zeros((dim, dim))
    h0[st.rows, st.cols] = values
    h0[st.cols, st.rows] = values
    return h0


def build_hamiltonian(
    basis: CollectiveBasis,
    config: AtomConfiguration,
    delta: float,
    constants: CouplingConstants = CouplingConstants(),
) -> InteractionHamiltonian:
    if basis.i != config.i:
        raise ValueError(f"basis has {basis.i} atoms but configuration has {config.i}")
    h = coupling_matrix(basis.i, config, constants).astype(complex)
    h[np.diag_indices_from(h)] = basis.flip_counts() * float(delta)
    return InteractionHamiltonian(h, float(delta))
