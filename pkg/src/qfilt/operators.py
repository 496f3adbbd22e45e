"""Dense complex operator kernel: spin operators, Pauli strings, superoperators
and spin-coherent states.

Everything here is a plain ``numpy.ndarray`` of complex128.  Operators are
square matrices in row-major layout; pure states are 1-d amplitude vectors and
density matrices are square, trace-one, Hermitian arrays.  All functions are
pure and never mutate their inputs, so values can be shared freely across
threads.

Conventions
-----------
* Pauli strings: leftmost label acts on qubit 1, which is the most significant
  tensor factor, so ``pauli_string("ZZI")`` is ``sigma_z (x) sigma_z (x) I``.
* ``Jz`` is diagonal with entries ``j, j-1, ..., -j`` (standard angular
  momentum ordering, highest weight first).
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "SIGMA_X",
    "SIGMA_Y",
    "SIGMA_Z",
    "SIGMA_PLUS",
    "SIGMA_MINUS",
    "dag",
    "commutator",
    "anticommutator",
    "expect",
    "is_hermitian",
    "expm_hermitian",
    "spin_operators",
    "pauli_string",
    "lindblad_D",
    "measurement_M",
    "spin_coherent",
    "pure_to_density",
    "normalize_state",
    "normalize_density",
]

SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)
SIGMA_PLUS = np.array([[0, 1], [0, 0]], dtype=complex)
SIGMA_MINUS = np.array([[0, 0], [1, 0]], dtype=complex)

_PAULI = {
    "I": np.eye(2, dtype=complex),
    "X": SIGMA_X,
    "Y": SIGMA_Y,
    "Z": SIGMA_Z,
}


def dag(a: np.ndarray) -> np.ndarray:
    """Hermitian adjoint."""
    return a.conj().T


def commutator(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return a @ b - b @ a


def anticommutator(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return a @ b + b @ a


def expect(op: np.ndarray, state: np.ndarray) -> complex:
    """Expectation value of ``op`` in a pure state (1-d) or density matrix."""
    if state.ndim == 1:
        return complex(state.conj() @ op @ state)
    return complex(np.trace(op @ state))


def is_hermitian(a: np.ndarray, tol: float = 1e-12) -> bool:
    return bool(np.max(np.abs(a - dag(a))) < tol)


def expm_hermitian(h: np.ndarray, scale: complex = 1.0) -> np.ndarray:
    """exp(scale * h) for Hermitian h, via eigendecomposition.

    With ``scale = -1j * t`` this gives the unitary generated by ``h``.
    """
    w, v = np.linalg.eigh(h)
    return (v * np.exp(scale * w)) @ dag(v)


def spin_operators(j: float) -> dict[str, np.ndarray]:
    """Spin-j operators {Jx, Jy, Jz, Jplus, Jminus} of dimension 2j+1.

    ``Jplus |j,m> = sqrt((j-m)(j+m+1)) |j,m+1>`` in the basis ordered
    m = j, j-1, ..., -j.

    Raises
    ------
    ValueError
        If 2j is not a non-negative integer.
    """
    two_j = 2.0 * j
    if two_j < 0 or abs(two_j - round(two_j)) > 1e-9:
        raise ValueError(f"total spin must be a non-negative half-integer, got {j}")
    dim = int(round(two_j)) + 1
    m = j - np.arange(dim)  # j, j-1, ..., -j
    jz = np.diag(m).astype(complex)
    # raising operator: <m+1| J+ |m>, one step above the diagonal
    ladder = np.sqrt((j - m[1:]) * (j + m[1:] + 1.0))
    jplus = np.zeros((dim, dim), dtype=complex)
    jplus[np.arange(dim - 1), np.arange(1, dim)] = ladder
    jminus = jplus.T.copy()
    jx = (jplus + jminus) / 2.0
    jy = (jplus - jminus) / 2.0j
    return {"Jx": jx, "Jy": jy, "Jz": jz, "Jplus": jplus, "Jminus": jminus}


def pauli_string(spec: str) -> np.ndarray:
    """Tensor product of single-qubit Paulis, e.g. ``"XZZXI"``.

    The leftmost label is qubit 1 (most significant factor).  Result is a
    2^n x 2^n Hermitian, unitary matrix.
    """
    if not spec:
        raise ValueError("Pauli string must contain at least one label")
    out = np.array([[1.0 + 0j]])
    for label in spec:
        try:
            factor = _PAULI[label]
        except KeyError:
            raise ValueError(f"unknown Pauli label {label!r} in {spec!r}") from None
        out = np.kron(out, factor)
    return out


def _check_conforming(L: np.ndarray, rho: np.ndarray) -> None:
    if L.shape != rho.shape or L.shape[0] != L.shape[1]:
        raise ValueError(f"dimension mismatch: L is {L.shape}, rho is {rho.shape}")


def lindblad_D(L: np.ndarray, rho: np.ndarray) -> np.ndarray:
    """Dissipator D[L]rho = L rho L^dag - (L^dag L rho + rho L^dag L)/2."""
    _check_conforming(L, rho)
    LdL = dag(L) @ L
    return L @ rho @ dag(L) - 0.5 * (LdL @ rho + rho @ LdL)


def measurement_M(L: np.ndarray, rho: np.ndarray) -> np.ndarray:
    """Conditioning superoperator M[L]rho = L rho + rho L^dag - <L+L^dag> rho."""
    _check_conforming(L, rho)
    signal = np.trace((L + dag(L)) @ rho)
    return L @ rho + rho @ dag(L) - signal * rho


def spin_coherent(j: float, theta: float, phi: float) -> np.ndarray:
    """Spin-coherent state |theta, phi>: the +j eigenstate of n.J with
    n = (sin t cos p, sin t sin p, cos t).

    Built as exp(-i phi Jz) exp(-i theta Jy) |j, +j>; returns a unit vector of
    dimension 2j+1 in the Jz basis.
    """
    if not (np.isfinite(theta) and np.isfinite(phi)):
        raise ValueError("angles must be finite")
    ops = spin_operators(j)
    dim = ops["Jz"].shape[0]
    top = np.zeros(dim, dtype=complex)
    top[0] = 1.0  # |j, +j> (basis ordered m = j ... -j)
    psi = expm_hermitian(ops["Jy"], scale=-1j * theta) @ top
    psi = np.exp(-1j * phi * np.real(np.diag(ops["Jz"]))) * psi
    return psi / np.linalg.norm(psi)


def pure_to_density(psi: np.ndarray) -> np.ndarray:
    return np.outer(psi, psi.conj())


def normalize_state(psi: np.ndarray) -> np.ndarray:
    return psi / np.linalg.norm(psi)


def normalize_density(rho: np.ndarray) -> np.ndarray:
    """Re-Hermitize and renormalize the trace; used after Euler steps."""
    rho = 0.5 * (rho + dag(rho))
    return rho / np.trace(rho).real
