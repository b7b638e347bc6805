"""Single-excitation spin dynamics: Hamiltonian assembly, propagation, fidelity.

The chain Hamiltonian is H = sum_j c_j S_j where c_j is the superexchange
coupling for bond j and S_j the fixed bond matrix below.  H is real
symmetric, so propagation and everything built on it goes through one
eigendecomposition per bias vector.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .lattice import HubbardParams, effective_coupling, as_bias_array


def structure_matrix(j: int, n_sites: int) -> np.ndarray:
    """Bond matrix S_j (1-based bond index j = 1 .. n_sites - 1).

    S_j = I/2 + (E_{j,j+1} + E_{j+1,j}) - (E_{j,j} + E_{j+1,j+1}),
    i.e. hopping across the bond plus a -1 shift of the two bond sites on
    top of a global +1/2.  trace(S_j) = n_sites/2 - 2.
    """
    if not 1 <= j <= n_sites - 1:
        raise ValueError(f"bond index {j} outside 1..{n_sites - 1}")
    s = 0.5 * np.eye(n_sites)
    a, b = j - 1, j
    s[a, b] = s[b, a] = 1.0
    s[a, a] -= 1.0
    s[b, b] -= 1.0
    return s


@dataclass(frozen=True)
class TransferProblem:
    """State transfer between two basis sites of an n_sites chain (1-based)."""

    n_sites: int = 5
    initial: int = 1
    target: int = 5

    def __post_init__(self):
        if self.n_sites < 2:
            raise ValueError("need at least two sites")
        for idx in (self.initial, self.target):
            if not 1 <= idx <= self.n_sites:
                raise ValueError(f"site index {idx} outside 1..{self.n_sites}")
        if self.initial == self.target:
            raise ValueError("initial and target sites must differ")

    def initial_state(self) -> np.ndarray:
        e = np.zeros(self.n_sites)
        e[self.initial - 1] = 1.0
        return e

    def target_state(self) -> np.ndarray:
        e = np.zeros(self.n_sites)
        e[self.target - 1] = 1.0
        return e


class EffectiveHamiltonian:
    """Assembled chain Hamiltonian with its eigendecomposition cached.

    Immutable after construction; safe to share across threads.
    """

    def __init__(self, couplings: np.ndarray, delta: np.ndarray, params: HubbardParams):
        self.couplings = np.array(couplings, dtype=float)
        self.delta = np.array(delta, dtype=float)
        self.params = params
        n = len(self.couplings) + 1
        m = np.zeros((n, n))
        for j, c in enumerate(self.couplings, start=1):
            m += c * structure_matrix(j, n)
        self.matrix = m
        self.eigenvalues, self.eigenvectors = np.linalg.eigh(m)

    @property
    def n_sites(self) -> int:
        return self.matrix.shape[0]


def hamiltonian(delta, params: HubbardParams) -> EffectiveHamiltonian:
    """Build the effective Hamiltonian for a bias vector (units of U)."""
    arr = as_bias_array(delta)
    couplings = np.array([effective_coupling(params, d) for d in arr])
    return EffectiveHamiltonian(couplings, arr, params)


def propagate(ham: EffectiveHamiltonian, t: float) -> np.ndarray:
    """Unitary exp(-i t H) via the cached eigenbasis."""
    if t < 0:
        raise ValueError("time must be non-negative")
    v = ham.eigenvectors
    phases = np.exp(-1j * ham.eigenvalues * t)
    return (v * phases) @ v.conj().T


def transfer_amplitude(ham: EffectiveHamiltonian, t, problem: TransferProblem):
    """<target| exp(-i t H) |initial>; `t` may be a scalar or an array."""
    v = ham.eigenvectors
    weights = v[problem.target - 1] * v[problem.initial - 1]
    t = np.asarray(t, dtype=float)
    return weights @ np.exp(-1j * np.multiply.outer(ham.eigenvalues, t))


def fidelity_error_from_ham(ham: EffectiveHamiltonian, t: float,
                            problem: TransferProblem) -> float:
    a = transfer_amplitude(ham, float(t), problem)
    return float(1.0 - abs(a) ** 2)


def fidelity_error(delta, t: float, problem: TransferProblem,
                   params: HubbardParams) -> float:
    """1 - |<target| exp(-i t H(delta)) |initial>|^2, in [0, 1]."""
    return fidelity_error_from_ham(hamiltonian(delta, params), t, problem)


@dataclass(frozen=True)
class FidelityTrace:
    """Fidelity error sampled on a uniform grid plus the refined minimum."""

    times: np.ndarray
    errors: np.ndarray
    t_min: float
    e_min: float


def _golden_minimize(f, a: float, b: float, tol: float):
    """Golden-section minimum of f on [a, b]; returns the best point seen."""
    invphi = (np.sqrt(5.0) - 1) / 2
    best_x, best_f = a, f(a)
    for x in (b,):
        fx = f(x)
        if fx < best_f:
            best_x, best_f = x, fx
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = f(d)
    for x, fx in ((c, fc), (d, fd)):
        if fx < best_f:
            best_x, best_f = x, fx
    return best_x, best_f


def fidelity_trace(delta, problem: TransferProblem, params: HubbardParams,
                   t_max: float, n_steps: int = 2000,
                   refine_tol: float = 1e-10) -> FidelityTrace:
    """Sample the fidelity error on [0, t_max] and refine the grid minimum.

    The grid argmin is polished by golden-section search inside its
    bracketing interval; the reported minimum is never worse than the best
    grid sample.
    """
    if n_steps < 2:
        raise ValueError("n_steps must be at least 2")
    if t_max <= 0:
        raise ValueError("t_max must be positive")
    ham = hamiltonian(delta, params)
    times = np.linspace(0.0, float(t_max), int(n_steps))
    errors = 1.0 - np.abs(transfer_amplitude(ham, times, problem)) ** 2
    errors = np.clip(errors, 0.0, 1.0)
    i = int(np.argmin(errors))
    lo = times[max(i - 1, 0)]
    hi = times[min(i + 1, len(times) - 1)]
    t_min, e_min = _golden_minimize(
        lambda t: fidelity_error_from_ham(ham, t, problem), lo, hi, refine_tol)
    if errors[i] < e_min:
        t_min, e_min = float(times[i]), float(errors[i])
    return FidelityTrace(times=times, errors=errors, t_min=float(t_min),
                         e_min=float(e_min))
