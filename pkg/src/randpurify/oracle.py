"""Truncated Fock-space model of the repeater network.

The single-mode basis is the photon-number basis, so eigenstates are built
directly from Fock kets.  Each mode is truncated at ``cutoff`` levels
(photon numbers ``0..cutoff-1``) and multi-mode arrays use row-major mode
order.  The network acts on two N-mode registers: the circulating signal
(modes ``1..N``) and the fresh copy (modes ``-1..-N``).

Auxiliary modes of the Kerr array are not carried in the state; their
contraction is the modular projector returned by
:func:`kerr_projector_block`, and :func:`explicit_kerr_block` rebuilds it from
the beam-splitter and Kerr matrices in the single-excitation sector.
"""

from __future__ import annotations

import itertools
from collections.abc import Mapping, Sequence
from dataclasses import dataclass

import numpy as np

from .core import MixtureState, mod_index

HERM_TOL = 1e-10


class CutoffError(ValueError):
    pass


def _fock_dims(num_modes: int, cutoff: int) -> tuple[int, ...]:
    return (cutoff,) * num_modes


@dataclass(frozen=True, eq=False)
class FockStateVector:
    num_modes: int
    cutoff: int
    amplitudes: np.ndarray

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=complex).reshape(-1)
        if amps.size != self.cutoff ** self.num_modes:
            raise ValueError(f"expected {self.cutoff ** self.num_modes} amplitudes, got {amps.size}")
        object.__setattr__(self, "amplitudes", amps)

    @property
    def tensor(self) -> np.ndarray:
        return self.amplitudes.reshape(_fock_dims(self.num_modes, self.cutoff))

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def inner(self, other: FockStateVector) -> complex:
        """``<self|other>``."""
        return complex(np.vdot(self.amplitudes, other.amplitudes))

    def projector(self) -> DensityOperator:
        return DensityOperator(self.num_modes, self.cutoff,
                               np.outer(self.amplitudes, self.amplitudes.conj()))

    @classmethod
    def basis(cls, occupations: Sequence[int], cutoff: int) -> FockStateVector:
        amps = np.zeros(_fock_dims(len(occupations), cutoff), dtype=complex)
        amps[tuple(occupations)] = 1.0
        return cls(len(occupations), cutoff, amps)


@dataclass(frozen=True, eq=False)
class DensityOperator:
    num_modes: int
    cutoff: int
    matrix: np.ndarray

    def __post_init__(self):
        mat = np.asarray(self.matrix, dtype=complex)
        dim = self.cutoff ** self.num_modes
        if mat.shape != (dim, dim):
            raise ValueError(f"expected a {dim}x{dim} matrix, got {mat.shape}")
        if not np.allclose(mat, mat.conj().T, rtol=0, atol=HERM_TOL):
            raise ValueError("density operator is not Hermitian")
        mat = 0.5 * (mat + mat.conj().T)
        if abs(np.trace(mat).real - 1.0) > HERM_TOL:
            raise ValueError(f"trace is {np.trace(mat).real!r}, not 1")
        object.__setattr__(self, "matrix", mat)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def check_positive(self, tol: float = HERM_TOL) -> None:
        lowest = np.linalg.eigvalsh(self.matrix)[0]
        if lowest < -tol:
            raise ValueError(f"negative eigenvalue {lowest:.3g}")

    def expect(self, psi: FockStateVector) -> float:
        return float(np.vdot(psi.amplitudes, self.matrix @ psi.amplitudes).real)


@dataclass(frozen=True)
class EigenstateSpec:
    """Expansion coefficients ``c_l(n)`` of the eigenstates.

    ``coeffs[n]`` maps block-index tuples ``l = (l_1..l_N)`` to complex
    amplitudes.  Keys ``n`` are integers for the modular eigenstates and
    N-tuples for the product eigenstates; a product eigenstate without its own
    entry reuses the coefficients of ``n = (sum of the tuple) mod (M+1)``.
    """

    M: int
    N: int
    coeffs: Mapping

    def __post_init__(self):
        for label, table in self.coeffs.items():
            norm = sum(abs(c) ** 2 for c in table.values())
            if abs(norm - 1.0) > 1e-12:
                raise ValueError(f"coefficients of n={label} have norm^2 {norm}")
            for l in table:
                if len(l) != self.N or min(l) < 0:
                    raise ValueError(f"bad block index {l} for N={self.N}")

    def table(self, label) -> Mapping:
        if label in self.coeffs:
            return self.coeffs[label]
        if isinstance(label, tuple):
            return self.coeffs[mod_index(sum(label), self.M)]
        raise KeyError(f"no coefficients for n={label}")

    def min_cutoff(self) -> int:
        top = max(max(l) for table in self.coeffs.values() for l in table)
        return (top + 1) * (self.M + 1)

    @classmethod
    def simple(cls, M: int, N: int) -> EigenstateSpec:
        """Only ``l = (0, ..., 0)`` populated."""
        return cls(M, N, {n: {(0,) * N: 1.0} for n in range(M + 1)})

    @classmethod
    def random(cls, M: int, N: int, rng: np.random.Generator, blocks: int = 2,
               product: bool = False) -> EigenstateSpec:
        """Random complex coefficients over ``l_j < blocks``."""
        ls = list(itertools.product(range(blocks), repeat=N))
        labels = (itertools.product(range(M + 1), repeat=N) if product else range(M + 1))
        coeffs = {}
        for label in labels:
            c = rng.normal(size=len(ls)) + 1j * rng.normal(size=len(ls))
            c /= np.linalg.norm(c)
            coeffs[label] = dict(zip(ls, c))
        return cls(M, N, coeffs)


@dataclass(frozen=True)
class RepeaterOutcome:
    k: tuple[int, ...]
    m: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "k", tuple(int(x) for x in self.k))
        object.__setattr__(self, "m", tuple(int(x) for x in self.m))
        if len(self.k) != len(self.m):
            raise ValueError("k and m must have one entry per repeater")

    def check(self, M: int) -> None:
        for x in self.k + self.m:
            if not 0 <= x <= M:
                raise ValueError(f"outcome index {x} outside [0, {M}]")

    def event_class(self, M: int) -> int:
        return mod_index(sum(self.k), M)


def _place(amps: np.ndarray, occ: tuple[int, ...], value: complex, cutoff: int) -> None:
    for j, o in enumerate(occ):
        if o >= cutoff:
            raise CutoffError(f"photon number {o} in mode {j + 1} exceeds cutoff {cutoff}")
    amps[occ] += value


def build_eigenstate(spec: EigenstateSpec, n: int, cutoff: int) -> FockStateVector:
    """Modular eigenstate: equal-weight sum over all residue tuples with ``sum = n (mod M+1)``."""
    M, N = spec.M, spec.N
    size = M + 1
    amps = np.zeros(_fock_dims(N, cutoff), dtype=complex)
    prefactor = size ** ((1 - N) / 2)
    tuples = [t for t in itertools.product(range(size), repeat=N) if sum(t) % size == n]
    for l, c in spec.table(n).items():
        for t in tuples:
            occ = tuple(lj * size + tj for lj, tj in zip(l, t))
            _place(amps, occ, prefactor * c, cutoff)
    return FockStateVector(N, cutoff, amps)


def build_product_eigenstate(spec: EigenstateSpec, n_tuple: Sequence[int], cutoff: int) -> FockStateVector:
    """Eigenstate labelled by an independent residue in every mode."""
    n_tuple = tuple(int(x) for x in n_tuple)
    if len(n_tuple) != spec.N:
        raise ValueError(f"need {spec.N} residues, got {n_tuple}")
    size = spec.M + 1
    amps = np.zeros(_fock_dims(spec.N, cutoff), dtype=complex)
    for l, c in spec.table(n_tuple).items():
        occ = tuple(lj * size + tj for lj, tj in zip(l, n_tuple))
        _place(amps, occ, c, cutoff)
    return FockStateVector(spec.N, cutoff, amps)


def mixture_operator(kets: Sequence[FockStateVector], weights) -> DensityOperator:
    """``sum_n w_n |psi_n><psi_n|``."""
    first = kets[0]
    mat = np.zeros((first.amplitudes.size,) * 2, dtype=complex)
    for ket, w in zip(kets, weights):
        if w:
            mat += w * np.outer(ket.amplitudes, ket.amplitudes.conj())
    return DensityOperator(first.num_modes, first.cutoff, mat)


def diagonal_mixture(spec: EigenstateSpec, state: MixtureState, cutoff: int) -> DensityOperator:
    if state.M != spec.M:
        raise ValueError("state and eigenstate spec disagree on M")
    kets = [build_eigenstate(spec, n, cutoff) for n in range(spec.M + 1)]
    return mixture_operator(kets, state.probs)


def dft_matrix(M: int) -> np.ndarray:
    """Unitary of the (M+1)-port beam-splitter array."""
    size = M + 1
    kl = np.outer(np.arange(size), np.arange(size))
    return np.exp(2j * np.pi * kl / size) / np.sqrt(size)


def kerr_projector_block(k_j: int, M: int, cutoff: int) -> np.ndarray:
    """Auxiliary-mode contraction on the signal pair ``(j, -j)``.

    Returned as the diagonal of a ``cutoff**2`` operator, index
    ``n_j * cutoff + n_{-j}``.  The value is the phase average over
    ``m = 0..M``, which is 1 when ``n_j - n_{-j} = k_j (mod M+1)`` and 0
    otherwise.
    """
    size = M + 1
    n = np.arange(cutoff)
    diff = n[:, None] - n[None, :]
    m = np.arange(size)
    phases = np.exp(2j * np.pi * (diff[..., None] - k_j) * m / size)
    return phases.mean(axis=-1).reshape(-1)


def explicit_kerr_block(k_j: int, M: int, cutoff: int) -> np.ndarray:
    """Same block from literal beam-splitter and Kerr matrices.

    Per pair Fock state the Kerr array acts on the single-excitation
    auxiliary sector as ``diag_m exp(i 2pi (n_j - n_-j) m / (M+1))``; the block
    is ``<phi_k| U^dag K U |phi_0>``.
    """
    size = M + 1
    U = dft_matrix(M)
    phi0 = np.zeros(size)
    phi0[0] = 1.0
    phik = np.zeros(size)
    phik[k_j] = 1.0
    out = np.empty(cutoff * cutoff, dtype=complex)
    for a in range(cutoff):
        for b in range(cutoff):
            K = np.diag(np.exp(2j * np.pi * (a - b) * np.arange(size) / size))
            out[a * cutoff + b] = phik @ U.conj().T @ K @ U @ phi0
    return out


def phase_correction(m_j: int, M: int, cutoff: int) -> np.ndarray:
    """Diagonal of ``exp(i 2pi m_j n / (M+1))`` on one mode."""
    return np.exp(2j * np.pi * m_j * np.arange(cutoff) / (M + 1))


def repeater_operator(k_j: int, m_j: int, M: int, cutoff: int) -> np.ndarray:
    """Pair operator ``Y = phase(m_j) x projector(k_j)`` as a dense matrix on ``(j, -j)``."""
    diag = kerr_projector_block(k_j, M, cutoff) * np.repeat(phase_correction(m_j, M, cutoff), cutoff)
    return np.diag(diag)


def _check_cutoff(M: int, cutoff: int) -> None:
    if cutoff % (M + 1):
        raise CutoffError(f"cutoff {cutoff} is not a multiple of M+1 = {M + 1}")


def povm_element(m_j: int, M: int, cutoff: int) -> np.ndarray:
    """Phase-measurement element for result ``m_j`` on a single mode."""
    _check_cutoff(M, cutoff)
    size = M + 1
    vec = np.exp(2j * np.pi * m_j * np.arange(size) / size) / np.sqrt(size)
    return np.kron(np.eye(cutoff // size), np.outer(vec, vec.conj()))


def _kron_all(mats: Sequence[np.ndarray]) -> np.ndarray:
    out = np.ones((1, 1), dtype=complex)
    for m in mats:
        out = np.kron(out, m)
    return out


def network_diagonal(outcome: RepeaterOutcome, M: int, cutoff: int) -> np.ndarray:
    """Diagonal of ``Y(k)`` over (modes I) x (modes II), shaped ``(D**N, D**N)``."""
    N = len(outcome.k)
    # axes: (a_1..a_N, b_1..b_N)
    y = np.ones(_fock_dims(2 * N, cutoff), dtype=complex)
    for j, (k_j, m_j) in enumerate(zip(outcome.k, outcome.m)):
        pair = (kerr_projector_block(k_j, M, cutoff).reshape(cutoff, cutoff)
                * phase_correction(m_j, M, cutoff)[:, None])
        shape = [1] * (2 * N)
        shape[j] = cutoff
        shape[N + j] = cutoff
        y = y * pair.reshape(shape)
    dim = cutoff ** N
    return y.reshape(dim, dim)


def network_output(R_I: DensityOperator, rho_II: DensityOperator, outcome: RepeaterOutcome,
                   M: int) -> tuple[DensityOperator | None, float]:
    """Reduced signal state and probability for one detection outcome.

    Returns ``(None, 0.0)`` for a zero-probability outcome.  The partial
    trace ``Tr_II[Y (R x rho) Y^dag Pi(m)]`` is evaluated as
    ``R * (Y A Y^dag)`` with ``A[b, b'] = rho[b, b'] Pi[b', b]``, which holds
    because ``Y`` is diagonal in the joint Fock basis.
    """
    cutoff = R_I.cutoff
    N = R_I.num_modes
    if rho_II.cutoff != cutoff or rho_II.num_modes != N or len(outcome.k) != N:
        raise ValueError("registers I and II and the outcome must agree on N and cutoff")
    _check_cutoff(M, cutoff)
    outcome.check(M)
    Y = network_diagonal(outcome, M, cutoff)
    Pi = _kron_all([povm_element(m_j, M, cutoff) for m_j in outcome.m])
    A = rho_II.matrix * Pi.T
    out = R_I.matrix * (Y @ A @ Y.conj().T)
    out = 0.5 * (out + out.conj().T)
    prob = float(np.trace(out).real)
    if prob <= 1e-300:
        return None, 0.0
    return DensityOperator(N, cutoff, out / prob), prob


def network_output_bruteforce(R_I: DensityOperator, rho_II: DensityOperator,
                              outcome: RepeaterOutcome, M: int) -> tuple[np.ndarray, float]:
    """Literal joint-space evaluation of the same partial trace, for small sizes only."""
    cutoff, N = R_I.cutoff, R_I.num_modes
    dim = cutoff ** N
    joint = np.kron(R_I.matrix, rho_II.matrix)
    Y = np.diag(network_diagonal(outcome, M, cutoff).reshape(-1))
    Pi = np.kron(np.eye(dim), _kron_all([povm_element(m, M, cutoff) for m in outcome.m]))
    full = Y @ joint @ Y.conj().T @ Pi
    reduced = np.trace(full.reshape(dim, dim, dim, dim), axis1=1, axis2=3)
    prob = float(np.trace(reduced).real)
    return reduced / prob if prob > 0 else reduced, prob


def outcomes(M: int, N: int):
    """All ``(k, m)`` detection outcomes in lexicographic order."""
    vals = range(M + 1)
    for k in itertools.product(vals, repeat=N):
        for m in itertools.product(vals, repeat=N):
            yield RepeaterOutcome(k, m)


def event_class_output(R_I: DensityOperator, rho_II: DensityOperator, k: int,
                       M: int) -> tuple[np.ndarray, float, list[float]]:
    """Unnormalized sum over all outcomes with ``sum(k_j) = k (mod M+1)``.

    Returns the normalized state matrix, the class probability and the list of
    individual outcome probabilities that contributed.
    """
    N = R_I.num_modes
    acc = np.zeros_like(R_I.matrix)
    probs = []
    for oc in outcomes(M, N):
        if oc.event_class(M) != k:
            continue
        state, p = network_output(R_I, rho_II, oc, M)
        probs.append(p)
        if state is not None:
            acc += p * state.matrix
    total = float(sum(probs))
    return (acc / total if total > 0 else acc), total, probs


def single_instant_output(rho_I: DensityOperator, k: Sequence[int], M: int) -> tuple[DensityOperator | None, float]:
    """Output for vacuum in the second inputs and no phase measurement."""
    cutoff, N = rho_I.cutoff, rho_I.num_modes
    k = tuple(int(x) for x in k)
    if len(k) != N:
        raise ValueError(f"need {N} detection results")
    Y = network_diagonal(RepeaterOutcome(k, (0,) * N), M, cutoff)
    # second register in vacuum: only its index 0 survives
    y = Y[:, 0]
    out = y[:, None] * rho_I.matrix * y.conj()[None, :]
    out = 0.5 * (out + out.conj().T)
    prob = float(np.trace(out).real)
    if prob <= 1e-300:
        return None, 0.0
    return DensityOperator(N, cutoff, out / prob), prob


def mode_transfer(state: FockStateVector, from_mode: int, to_mode: int) -> FockStateVector:
    """Move the content of mode ``from_mode`` to slot ``to_mode`` (zero-based axes)."""
    for idx in (from_mode, to_mode):
        if not 0 <= idx < state.num_modes:
            raise IndexError(f"mode {idx} out of range for {state.num_modes} modes")
    moved = np.moveaxis(state.tensor, from_mode, to_mode)
    return FockStateVector(state.num_modes, state.cutoff, np.ascontiguousarray(moved))


def _psd_sqrt(mat: np.ndarray) -> np.ndarray:
    vals, vecs = np.linalg.eigh(mat)
    vals = np.clip(vals, 0.0, None)
    return (vecs * np.sqrt(vals)) @ vecs.conj().T


def fidelity(a, b) -> float:
    """Uhlmann fidelity ``(Tr sqrt(sqrt(a) b sqrt(a)))**2``.

    Accepts :class:`DensityOperator` or plain matrices; a
    :class:`FockStateVector` argument is treated as a pure state.
    """
    if isinstance(a, FockStateVector):
        a, b = b, a
    if isinstance(b, FockStateVector):
        mat = a.matrix if isinstance(a, DensityOperator) else np.asarray(a)
        if mat.shape[0] != b.amplitudes.size:
            raise ValueError("dimension mismatch")
        return float(np.clip(np.vdot(b.amplitudes, mat @ b.amplitudes).real, 0.0, 1.0))
    ma = a.matrix if isinstance(a, DensityOperator) else np.asarray(a)
    mb = b.matrix if isinstance(b, DensityOperator) else np.asarray(b)
    if ma.shape != mb.shape:
        raise ValueError(f"dimension mismatch: {ma.shape} vs {mb.shape}")
    sa = _psd_sqrt(ma)
    inner = sa @ mb @ sa
    vals = np.clip(np.linalg.eigvalsh(0.5 * (inner + inner.conj().T)), 0.0, None)
    return float(min(np.sqrt(vals).sum() ** 2, 1.0))


def _engine_prediction(spec, kets, state_probs: np.ndarray) -> np.ndarray:
    mat = np.zeros((kets[0].amplitudes.size,) * 2, dtype=complex)
    for ket, w in zip(kets, state_probs):
        mat += w * np.outer(ket.amplitudes, ket.amplitudes.conj())
    return mat


def compare_with_engine(M: int, N: int, trials: int, rng: np.random.Generator,
                        cutoff: int | None = None, engine_step=None) -> dict:
    """Check network outputs against the index-level engine on random mixtures.

    ``engine_step(state, source, k)`` must return the predicted weights; it
    defaults to :func:`randpurify.core.step`.  The report holds the worst
    fidelity deficit and probability deviation over all trials and event
    classes, plus the measured ratio ``p(m, k) / p(k)``.
    """
    from . import core

    if engine_step is None:
        def engine_step(state, source, k):
            return core.step(state, source, k).probs
    cutoff = 2 * (M + 1) if cutoff is None else cutoff
    _check_cutoff(M, cutoff)
    blocks = cutoff // (M + 1)
    worst_fid = 0.0
    worst_prob = 0.0
    ratios = []
    for _ in range(trials):
        spec = EigenstateSpec.random(M, N, rng, blocks=blocks)
        kets = [build_eigenstate(spec, n, cutoff) for n in range(M + 1)]
        state = MixtureState.from_weights(rng.dirichlet(np.ones(M + 1)))
        source = MixtureState.from_weights(rng.dirichlet(np.ones(M + 1)))
        R_I = mixture_operator(kets, state.probs)
        rho_II = mixture_operator(kets, source.probs)
        p_engine = core.outcome_distribution(state, source)
        for k in range(M + 1):
            out, p_k, parts = event_class_output(R_I, rho_II, k, M)
            worst_prob = max(worst_prob, float(abs(p_k - p_engine[k])))
            if p_k > 0:
                ratios.extend(p / p_k for p in parts)
                predicted = _engine_prediction(spec, kets, engine_step(state, source, k))
                worst_fid = max(worst_fid, 1.0 - fidelity(out, predicted))
    return {
        "M": M,
        "N": N,
        "cutoff": cutoff,
        "trials": trials,
        "max_fidelity_deficit": worst_fid,
        "max_probability_deviation": worst_prob,
        "outcome_prefactor_min": min(ratios) if ratios else None,
        "outcome_prefactor_max": max(ratios) if ratios else None,
        "expected_prefactor": float((M + 1) ** (1 - 2 * N)),
    }


def check_single_instant(M: int, N: int, rng: np.random.Generator, cutoff: int | None = None) -> dict:
    """Single-copy purification of a random product-eigenstate mixture."""
    cutoff = 2 * (M + 1) if cutoff is None else cutoff
    _check_cutoff(M, cutoff)
    spec = EigenstateSpec.random(M, N, rng, blocks=cutoff // (M + 1), product=True)
    labels = list(itertools.product(range(M + 1), repeat=N))
    weights = rng.dirichlet(np.ones(len(labels)))
    kets = {t: build_product_eigenstate(spec, t, cutoff) for t in labels}
    rho = mixture_operator([kets[t] for t in labels], weights)
    worst_fid = 0.0
    worst_prob = 0.0
    for t, w in zip(labels, weights):
        out, p = single_instant_output(rho, t, M)
        worst_prob = max(worst_prob, float(abs(p - w)))
        if out is not None:
            worst_fid = max(worst_fid, 1.0 - fidelity(out, kets[t]))
    return {"M": M, "N": N, "cutoff": cutoff,
            "max_fidelity_deficit": worst_fid, "max_probability_deviation": worst_prob}
