"""Minimal state-vector kernel for Bell pairs and BB84 decoy qubits.

Pair amplitudes are indexed ``2 * home + travel``, so ``|01>`` (home 0,
travel 1) sits at index 1.  Every state type carries an array whose last
axis holds the amplitudes; any leading axes index independent pairs or
qubits, which lets a whole travel sequence be processed in one call.
Global phase is dropped everywhere.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

ATOL = 1e-12
_SQRT_HALF = 1.0 / np.sqrt(2.0)

# Travel-qubit bit flip permutes |h,0> <-> |h,1>.
_TRAVEL_FLIP = np.array([1, 0, 3, 2])
# Sign pattern of Z on the travel qubit.
_TRAVEL_PHASE = np.array([1.0, -1.0, 1.0, -1.0])
_HADAMARD = np.array([[1.0, 1.0], [1.0, -1.0]]) * _SQRT_HALF


class PauliOp(enum.Enum):
    I = "I"
    X = "X"
    Z = "Z"
    XZ = "XZ"

    @property
    def flips(self) -> bool:
        """True for the operators that toggle the computational-basis bit."""
        return self in (PauliOp.X, PauliOp.XZ)


class Basis(enum.IntEnum):
    Z = 0
    X = 1


@dataclass(frozen=True)
class QubitState:
    amplitudes: np.ndarray

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=complex)
        if amps.shape[-1:] != (2,):
            raise ValueError(f"qubit amplitudes need a trailing axis of 2, got {amps.shape}")
        object.__setattr__(self, "amplitudes", amps)

    def __len__(self) -> int:
        return 1 if self.amplitudes.ndim == 1 else self.amplitudes.shape[0]

    def norms(self) -> np.ndarray:
        return np.sum(np.abs(self.amplitudes) ** 2, axis=-1)


@dataclass(frozen=True)
class PairState:
    amplitudes: np.ndarray

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=complex)
        if amps.shape[-1:] != (4,):
            raise ValueError(f"pair amplitudes need a trailing axis of 4, got {amps.shape}")
        object.__setattr__(self, "amplitudes", amps)

    def __len__(self) -> int:
        return 1 if self.amplitudes.ndim == 1 else self.amplitudes.shape[0]

    def norms(self) -> np.ndarray:
        return np.sum(np.abs(self.amplitudes) ** 2, axis=-1)


@dataclass(frozen=True)
class DecoyRecord:
    position: int
    basis: Basis
    bit: int


def prepare_pair(count: int | None = None) -> PairState:
    """Return ``(|00> + |11>)/sqrt(2)``, or ``count`` independent copies of it."""
    shape = (4,) if count is None else (count, 4)
    amps = np.zeros(shape, dtype=complex)
    amps[..., 0] = _SQRT_HALF
    amps[..., 3] = _SQRT_HALF
    return PairState(amps)


def apply_travel_pauli(p: PairState, op: PauliOp) -> PairState:
    amps = p.amplitudes
    if op in (PauliOp.Z, PauliOp.XZ):
        amps = amps * _TRAVEL_PHASE
    if op.flips:
        amps = amps[..., _TRAVEL_FLIP]
    return PairState(amps)


def encode_bits(p: PairState, bits: np.ndarray) -> PairState:
    """Apply ``X**bits[l]`` to the travel half of pair ``l``."""
    bits = np.asarray(bits, dtype=bool)
    if p.amplitudes.shape[:-1] != bits.shape:
        raise ValueError(f"{bits.shape[0] if bits.ndim else 1} bits for {len(p)} pairs")
    amps = np.where(bits[..., None], p.amplitudes[..., _TRAVEL_FLIP], p.amplitudes)
    return PairState(amps)


def _sample_index(probs: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    cdf = np.cumsum(probs, axis=-1)
    u = rng.random(probs.shape[:-1]) * cdf[..., -1]
    idx = np.sum(u[..., None] >= cdf, axis=-1)
    return np.minimum(idx, probs.shape[-1] - 1)


def measure_pair_z_collapse(p: PairState, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray, PairState]:
    """Measure both halves in the Z basis; return ``(r, s, collapsed)``."""
    idx = _sample_index(np.abs(p.amplitudes) ** 2, rng)
    collapsed = np.zeros_like(p.amplitudes)
    np.put_along_axis(collapsed, idx[..., None], 1.0, axis=-1)
    return idx >> 1, idx & 1, PairState(collapsed)


def measure_pair_z(p: PairState, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Z-basis outcome of the home bit ``r`` and travel bit ``s``.

    Scalars come back as 0-d arrays; batched pairs give one entry per pair.
    """
    r, s, _ = measure_pair_z_collapse(p, rng)
    return r, s


# rows indexed by 2 * basis + bit: |0>, |1>, |+>, |->
_DECOY_TABLE = np.array(
    [[1.0, 0.0], [0.0, 1.0], [_SQRT_HALF, _SQRT_HALF], [_SQRT_HALF, -_SQRT_HALF]],
    dtype=complex,
)


def prepare_decoy(basis: Basis | np.ndarray, bit: int | np.ndarray) -> QubitState:
    basis = np.asarray(basis, dtype=int)
    bit = np.asarray(bit, dtype=int)
    return QubitState(_DECOY_TABLE[2 * basis + bit])


def _rotate(amps: np.ndarray, basis: np.ndarray) -> np.ndarray:
    # Hadamard maps the X eigenbasis onto the Z eigenbasis and back.
    rotated = amps @ _HADAMARD.T
    return np.where((basis == 1)[..., None], rotated, amps)


def measure_qubit_collapse(q: QubitState, basis: Basis | np.ndarray, rng: np.random.Generator) -> tuple[np.ndarray, QubitState]:
    basis = np.broadcast_to(np.asarray(basis), q.amplitudes.shape[:-1])
    in_basis = _rotate(q.amplitudes, basis)
    bits = _sample_index(np.abs(in_basis) ** 2, rng)
    return bits, prepare_decoy(basis, bits)


def measure_qubit(q: QubitState, basis: Basis | np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Born-rule sample of ``q`` in ``basis``; the collapsed state is discarded."""
    bits, _ = measure_qubit_collapse(q, basis, rng)
    return bits


def intercept_resend(q: QubitState, guess_basis: Basis | np.ndarray, rng: np.random.Generator) -> tuple[np.ndarray, QubitState]:
    """Measure in the guessed basis and forward the eigenstate that was seen."""
    return measure_qubit_collapse(q, guess_basis, rng)


def intercept_resend_travel(p: PairState, guess_basis: Basis | np.ndarray, rng: np.random.Generator) -> tuple[np.ndarray, PairState]:
    """Intercept-resend on the travel halves of entangled pairs.

    The eavesdropper projects the travel qubit onto an eigenstate of the
    guessed basis; the home half collapses accordingly.
    """
    amps = p.amplitudes
    basis = np.broadcast_to(np.asarray(guess_basis), amps.shape[:-1])
    # reshape to (..., home, travel) and rotate the travel axis
    m = amps.reshape(amps.shape[:-1] + (2, 2))
    x = (basis == Basis.X)[..., None, None]
    m = np.where(x, m @ _HADAMARD.T, m)
    travel_probs = np.sum(np.abs(m) ** 2, axis=-2)
    bits = _sample_index(travel_probs, rng)
    keep = np.arange(2) == bits[..., None]
    m = np.where(keep[..., None, :], m, 0.0)
    m = m / np.sqrt(np.sum(np.abs(m) ** 2, axis=(-2, -1), keepdims=True))
    m = np.where(x, m @ _HADAMARD.T, m)
    return bits, PairState(m.reshape(amps.shape))


def random_decoys(d: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray, QubitState]:
    """Draw ``d`` uniformly random BB84 decoys; returns ``(bases, bits, states)``."""
    bases = rng.integers(0, 2, size=d)
    bits = rng.integers(0, 2, size=d)
    return bases, bits, prepare_decoy(bases, bits)


def intercept_detection_probability(d: int) -> float:
    """Chance that intercept-resend on ``d`` random decoys flips at least one."""
    return 1.0 - 0.75**d
