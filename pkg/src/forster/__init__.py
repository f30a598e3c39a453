"""Monte-Carlo simulation of Stark-tuned Förster resonances between few Rydberg atoms.

The 37P3/2 + 37P3/2 -> 37S1/2 + 38S1/2 energy transfer is simulated for a fixed
number of randomly placed atoms, and the resulting ideal spectra are pushed
through a post-selecting detection model to obtain observable signals.
"""

__version__ = "0.1.0"

from .basis import AtomLevel, BasisError, CollectiveBasis, CollectiveState, enumerate_states, flip_count
from .interaction import (
    AtomConfiguration,
    CouplingConstants,
    GeometryError,
    InteractionHamiltonian,
    build_hamiltonian,
    pair_coupling,
    sample_positions,
)
from .evolution import PropagationError, initial_state, propagate, propagate_rk4, transfer_fraction
from .montecarlo import Spectrum, SpectrumRequest, realization_stream, simulate_spectrum
from .detection import (
    DetectionChain,
    detection_mix,
    extract_params,
    fine_structure_mix,
    interaction_histogram,
)
from .lineshape import (
    LorentzFit,
    StarkMap,
    detuning_to_field,
    field_to_detuning,
    fwhm,
    lorentz_fit,
    peak_amplitude,
)
