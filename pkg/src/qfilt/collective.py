"""O(N^2) dynamics of collective states of N qubits under symmetric
single-qubit Lindblad channels.

A collective state carries no coherence between total-spin-J blocks and does
not distinguish degenerate irreps, so it is stored as one effective
(2J+1) x (2J+1) block per J with physical trace
sum_J d_J sum_M rho_{J,M,M} = 1, where d_J is the irrep multiplicity.

A symmetric channel sum_n L[s^(n)] with a single-qubit operator
s = s_I I + s_+ sigma_+ + s_- sigma_- + s_z sigma_z splits into a collective
anticommutator piece -{S_N, rho}/2, identity-involving collective terms, and
a residual non-collective bilinear evaluated with the three-term g-tensor
identity, which couples block J to J-1 and J+1 with coefficients built from
the A/B/D ladder tables and the multiplicity ratios alpha_J / d_J.  The
g-tensor's z-component is the angular-momentum convention (sigma_z / 2);
Pauli-z channel coefficients are rescaled internally.

Blocks are keyed by 2J (integers avoid half-integer keys).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import comb
from functools import lru_cache

import numpy as np

from .operators import spin_operators

__all__ = [
    "CollectiveDensity",
    "SpinChannel",
    "CollectiveChannel",
    "irrep_degeneracy",
    "alpha_cumulative",
    "collective_dim",
    "g_tensor_apply",
    "block_spin_ops",
    "collective_operator",
    "symmetric_lindblad_apply",
    "collective_lindblad_apply",
    "collective_master_step",
    "master_rhs",
    "coherent_top",
    "cat_state",
    "squeezing_xi2",
    "irrep_population",
    "expectation",
    "fidelity_with",
    "irrep_embeddings",
    "embed_collective",
    "project_collective",
]


def _two_j_values(N: int) -> list[int]:
    start = 0 if N % 2 == 0 else 1
    return list(range(start, N + 1, 2))


def irrep_degeneracy(J: float, N: int) -> int:
    """Multiplicity d_J of the total-spin-J irrep of N qubits; 0 out of range.

    d_J = C(N, N/2 - J) - C(N, N/2 - J - 1), equivalently
    N! (2J+1) / ((N/2 - J)! (N/2 + J + 1)!).
    """
    two_j = int(round(2 * J))
    if two_j < 0 or two_j > N or (N - two_j) % 2 != 0 or abs(2 * J - two_j) > 1e-9:
        return 0
    a = (N - two_j) // 2
    return comb(N, a) - (comb(N, a - 1) if a >= 1 else 0)


def alpha_cumulative(J: float, N: int) -> int:
    """alpha_J = sum_{J' >= J} d_J' = N! / ((N/2 - J)! (N/2 + J)!); 0 out of range."""
    two_j = int(round(2 * J))
    if two_j < 0 or two_j > N or (N - two_j) % 2 != 0 or abs(2 * J - two_j) > 1e-9:
        return 0
    return comb(N, (N - two_j) // 2)


def collective_dim(N: int) -> int:
    """sum_J (2J+1): (N+3)(N+1)/4 for odd N, (N+2)^2/4 for even N."""
    if N < 1:
        raise ValueError("N must be >= 1")
    if N % 2 == 0:
        return (N + 2) ** 2 // 4
    return (N + 3) * (N + 1) // 4


@dataclass
class CollectiveDensity:
    """Block-diagonal effective density matrix: blocks[2J] is (2J+1) x (2J+1)."""

    N: int
    blocks: dict = field(default_factory=dict)

    @classmethod
    def zeros(cls, N: int) -> "CollectiveDensity":
        return cls(N=N, blocks={tj: np.zeros((tj + 1, tj + 1), dtype=complex)
                                for tj in _two_j_values(N)})

    def copy(self) -> "CollectiveDensity":
        return CollectiveDensity(N=self.N, blocks={k: v.copy() for k, v in self.blocks.items()})

    def physical_trace(self) -> float:
        return float(sum(irrep_degeneracy(tj / 2.0, self.N) * np.trace(b).real
                         for tj, b in self.blocks.items()))

    def hermitize(self) -> None:
        for tj, b in self.blocks.items():
            self.blocks[tj] = 0.5 * (b + b.conj().T)


@dataclass(frozen=True)
class SpinChannel:
    """Symmetric-local channel: one copy of s = s_I I + s_+ sigma_+ +
    s_- sigma_- + s_z sigma_z acting on every qubit at rate ``rate``.
    sigma_z here is the full Pauli matrix diag(1, -1)."""

    s_I: complex = 0.0
    s_plus: complex = 0.0
    s_minus: complex = 0.0
    s_z: complex = 0.0
    rate: float = 1.0

    def __post_init__(self):
        if self.rate < 0:
            raise ValueError("rate must be non-negative")


@dataclass(frozen=True)
class CollectiveChannel:
    """Collective channel L[C] with C a polynomial in the block spin
    operators, e.g. word_coeffs=[(1.0, "-")] for L[J_-]."""

    word_coeffs: tuple
    rate: float = 1.0


# ladder coefficient tables of the three-term identity; q in {+, -, z} and
# the z entry is in the angular-momentum (sigma_z / 2) convention
def _A(q: str, J: float, M: float) -> float:
    if q == "+":
        return np.sqrt(max((J - M) * (J + M + 1.0), 0.0))
    if q == "-":
        return np.sqrt(max((J + M) * (J - M + 1.0), 0.0))
    return M


def _B(q: str, J: float, M: float) -> float:
    if q == "+":
        return np.sqrt(max((J - M) * (J - M - 1.0), 0.0))
    if q == "-":
        return -np.sqrt(max((J + M) * (J + M - 1.0), 0.0))
    return np.sqrt(max((J + M) * (J - M), 0.0))


def _D(q: str, J: float, M: float) -> float:
    if q == "+":
        return -np.sqrt(max((J + M + 1.0) * (J + M + 2.0), 0.0))
    if q == "-":
        return np.sqrt(max((J - M + 1.0) * (J - M + 2.0), 0.0))
    return np.sqrt(max((J + M + 1.0) * (J - M + 1.0), 0.0))


_M_SHIFT = {"+": 1.0, "-": -1.0, "z": 0.0}


def g_tensor_apply(q: str, r: str, J: float, M: float, Mp: float, N: int) -> list:
    """Three-term expansion of sum_n sigma_q^(n) |J,M><J,M'| sigma_r^(n)^dag
    on an effective density matrix element (the 1/d_J-normalized grouping of
    the degenerate irreps; the z channel is the angular-momentum component,
    half the Pauli matrix).

    Returns at most three tuples (J_out, M_out, M'_out, coefficient) for the
    J, J-1 and J+1 output blocks; the output projections are M_q = M + 1, -1,
    or 0 for q = +, -, z (and likewise M'_r).  Out-of-range multiplicities
    are zero, which silently drops invalid blocks.
    """
    if q not in _M_SHIFT or r not in _M_SHIFT:
        raise ValueError(f"channel indices must be in {{+, -, z}}, got {q!r}, {r!r}")
    if abs(M) > J or abs(Mp) > J or irrep_degeneracy(J, N) == 0:
        raise ValueError(f"invalid element (J={J}, M={M}, M'={Mp}) for N={N}")
    Mq = M + _M_SHIFT[q]
    Mpr = Mp + _M_SHIFT[r]
    dJ = irrep_degeneracy(J, N)
    aJ = alpha_cumulative(J, N)
    aJ1 = alpha_cumulative(J + 1, N)
    out = []
    if J > 0:
        pref = (1.0 + (aJ1 / dJ) * (2.0 * J + 1.0) / (J + 1.0)) / (2.0 * J)
        coeff = pref * _A(q, J, M) * _A(r, J, Mp)
        if coeff != 0.0 and abs(Mq) <= J and abs(Mpr) <= J:
            out.append((J, Mq, Mpr, coeff))
        if irrep_degeneracy(J - 1, N) > 0:
            coeff = (aJ / (dJ * 2.0 * J)) * _B(q, J, M) * _B(r, J, Mp)
            if coeff != 0.0 and abs(Mq) <= J - 1 and abs(Mpr) <= J - 1:
                out.append((J - 1, Mq, Mpr, coeff))
    if irrep_degeneracy(J + 1, N) > 0:
        coeff = (aJ1 / (dJ * 2.0 * (J + 1.0))) * _D(q, J, M) * _D(r, J, Mp)
        if coeff != 0.0:
            out.append((J + 1, Mq, Mpr, coeff))
    return out


@lru_cache(maxsize=64)
def block_spin_ops(two_j: int) -> dict:
    """Read-only spin matrices of the 2J+1 block, keyed '+', '-', 'z', 'x', 'y'."""
    ops = spin_operators(two_j / 2.0)
    out = {"+": ops["Jplus"], "-": ops["Jminus"], "z": ops["Jz"],
           "x": ops["Jx"], "y": ops["Jy"]}
    for a in out.values():
        a.setflags(write=False)
    return out


def collective_operator(word_coeffs, two_j: int) -> np.ndarray:
    """Polynomial in the block spin operators from (coeff, word) pairs, where
    a word is a string over {+, -, z, x, y} applied left to right, e.g.
    (1.0, "++") is J_+^2 and (0.5, "") is half the identity."""
    ops = block_spin_ops(two_j)
    dim = two_j + 1
    out = np.zeros((dim, dim), dtype=complex)
    for coeff, word in word_coeffs:
        term = np.eye(dim, dtype=complex)
        for ch in word:
            term = term @ ops[ch]
        out += coeff * term
    return out


# ---------------------------------------------------------------------------
# g-tensor application, vectorized per block


@lru_cache(maxsize=512)
def _pair_tables(q: str, r: str, two_j: int, N: int):
    """Coefficient matrices of the (q, r) bilinear for the input block 2J:
    three (dim_in, dim_in) tables whose (M, M') entry multiplies the shifted
    element in the J, J-1, J+1 output blocks."""
    J = two_j / 2.0
    dim = two_j + 1
    m = J - np.arange(dim)
    dJ = irrep_degeneracy(J, N)
    aJ = alpha_cumulative(J, N)
    aJ1 = alpha_cumulative(J + 1, N)
    Aq = np.array([_A(q, J, mm) for mm in m])
    Ar = np.array([_A(r, J, mm) for mm in m])
    Bq = np.array([_B(q, J, mm) for mm in m])
    Br = np.array([_B(r, J, mm) for mm in m])
    Dq = np.array([_D(q, J, mm) for mm in m])
    Dr = np.array([_D(r, J, mm) for mm in m])
    same = np.outer(Aq, Ar) * ((1.0 + (aJ1 / dJ) * (2 * J + 1) / (J + 1)) / (2 * J)) \
        if J > 0 else np.zeros((dim, dim))
    # the identity's coefficients act on the 1/d_J-normalized effective
    # elements; blocks here carry the d_J-weighted trace convention, so the
    # block-changing terms pick up a multiplicity ratio d_in / d_out
    d_down = irrep_degeneracy(J - 1.0, N)
    d_up = irrep_degeneracy(J + 1.0, N)
    down = np.outer(Bq, Br) * (aJ / (dJ * 2.0 * J)) * (dJ / d_down) \
        if (J > 0 and d_down > 0) else np.zeros((dim, dim))
    up = np.outer(Dq, Dr) * (aJ1 / (dJ * 2.0 * (J + 1.0))) * (dJ / d_up) \
        if d_up > 0 else np.zeros((dim, dim))
    for t in (same, down, up):
        t.setflags(write=False)
    return same, down, up


def _place_shifted(dst: np.ndarray, src: np.ndarray, q: str, r: str, two_j_in: int,
                   two_j_out: int) -> None:
    """dst[J_out, M + shift_q, M' + shift_r] += src[J_in, M, M'] elementwise.

    Rows of a block are ordered M = J, J-1, ..., -J, so raising the
    projection by one moves an entry up one row in a block of the same J and
    the row offset between blocks comes from the J difference.
    """
    dim_in = two_j_in + 1
    dim_out = two_j_out + 1
    # row index of projection M in a block: J - M
    # target row: J_out - (M + shift_q) = (J_out - J_in) - shift_q + row_in
    off_r = (two_j_out - two_j_in) // 2 - int(_M_SHIFT[q])
    off_c = (two_j_out - two_j_in) // 2 - int(_M_SHIFT[r])
    r0, r1 = max(0, off_r), min(dim_out, dim_in + off_r)
    c0, c1 = max(0, off_c), min(dim_out, dim_in + off_c)
    if r0 >= r1 or c0 >= c1:
        return
    dst[r0:r1, c0:c1] += src[r0 - off_r:r1 - off_r, c0 - off_c:c1 - off_c]


def _bilinear_apply(svec: dict, rho: CollectiveDensity, out: CollectiveDensity) -> None:
    """Accumulate sum_qr s_q s_r^* sum_n sigma_q rho sigma_r^dag into out."""
    N = rho.N
    pairs = [(q, r, svec[q] * np.conj(svec[r]))
             for q in ("+", "-", "z") for r in ("+", "-", "z")
             if svec[q] != 0 and svec[r] != 0]
    for two_j, block in rho.blocks.items():
        for q, r, weight in pairs:
            same, down, up = _pair_tables(q, r, two_j, N)
            for tables, two_j_out in ((same, two_j), (down, two_j - 2), (up, two_j + 2)):
                if two_j_out < 0 or two_j_out not in out.blocks:
                    continue
                src = weight * tables * block
                _place_shifted(out.blocks[two_j_out], src, q, r, two_j, two_j_out)


def symmetric_lindblad_apply(channel: SpinChannel, rho: CollectiveDensity) -> CollectiveDensity:
    """Derivative of rho under the symmetric channel sum_n L[s^(n)] at unit
    rate (multiply by channel.rate for the physical rate).

    Uses S_N = sum_n s^dag s expanded in collective operators for the
    anticommutator part, collective terms for everything involving s_I, and
    the g-tensor identity for the non-collective bilinear.
    """
    N = rho.N
    sI, sp, sm, sz = channel.s_I, channel.s_plus, channel.s_minus, channel.s_z
    out = CollectiveDensity.zeros(N)
    # S_N = c_id N I + c_p J_+ + c_m J_- + c_z Jz_pauli,  Jz_pauli = 2 Jz
    c_id = 0.5 * abs(sm) ** 2 + 0.5 * abs(sp) ** 2 + abs(sI) ** 2 + abs(sz) ** 2
    c_p = np.conj(sm) * sI - np.conj(sm) * sz + np.conj(sI) * sp + np.conj(sz) * sp
    c_m = np.conj(sI) * sm + np.conj(sp) * sI + np.conj(sp) * sz - np.conj(sz) * sm
    c_z = 0.5 * abs(sm) ** 2 - 0.5 * abs(sp) ** 2 + np.conj(sI) * sz + np.conj(sz) * sI
    for two_j, block in rho.blocks.items():
        ops = block_spin_ops(two_j)
        S = c_id * N * np.eye(two_j + 1) + c_p * ops["+"] + c_m * ops["-"] \
            + 2.0 * c_z * ops["z"]
        out.blocks[two_j] += -0.5 * (S @ block + block @ S)
        # identity-involving part of sum_n s rho s^dag: |s_I|^2 N rho
        # + sum_q (s_q s_I^* J_q rho + s_I s_q^* rho J_q^dag)
        out.blocks[two_j] += abs(sI) ** 2 * N * block
        for q, sq in (("+", sp), ("-", sm), ("z", sz)):
            Jq = 2.0 * ops["z"] if q == "z" else ops[q]
            if sq != 0 and sI != 0:
                out.blocks[two_j] += sq * np.conj(sI) * (Jq @ block)
                out.blocks[two_j] += sI * np.conj(sq) * (block @ Jq.conj().T)
    # non-collective bilinear; sigma_z = 2 * (angular-momentum z)
    svec = {"+": sp, "-": sm, "z": 2.0 * sz}
    _bilinear_apply(svec, rho, out)
    return out


def collective_lindblad_apply(channel: CollectiveChannel, rho: CollectiveDensity) -> CollectiveDensity:
    """Block-diagonal dissipator L[C] rho for a collective operator C."""
    out = CollectiveDensity.zeros(rho.N)
    for two_j, block in rho.blocks.items():
        C = collective_operator(channel.word_coeffs, two_j)
        CdC = C.conj().T @ C
        out.blocks[two_j] = C @ block @ C.conj().T \
            - 0.5 * (CdC @ block + block @ CdC)
    return out


def master_rhs(H_coeffs, channels, rho: CollectiveDensity) -> CollectiveDensity:
    """d rho / dt = -i [H, rho] + sum_k Gamma_k L_k rho with H given as
    (coeff, word) pairs applied per block."""
    out = CollectiveDensity.zeros(rho.N)
    if H_coeffs:
        for two_j, block in rho.blocks.items():
            H = collective_operator(H_coeffs, two_j)
            out.blocks[two_j] += -1j * (H @ block - block @ H)
    for ch in channels:
        if isinstance(ch, SpinChannel):
            deriv = symmetric_lindblad_apply(ch, rho)
        else:
            deriv = collective_lindblad_apply(ch, rho)
        for two_j in out.blocks:
            out.blocks[two_j] += ch.rate * deriv.blocks[two_j]
    return out


def collective_master_step(H_coeffs, channels, rho: CollectiveDensity, dt: float) -> CollectiveDensity:
    """One fixed-step RK4 step of the master equation."""

    def add(a: CollectiveDensity, b: CollectiveDensity, w: float) -> CollectiveDensity:
        return CollectiveDensity(N=a.N, blocks={k: a.blocks[k] + w * b.blocks[k]
                                                for k in a.blocks})

    k1 = master_rhs(H_coeffs, channels, rho)
    k2 = master_rhs(H_coeffs, channels, add(rho, k1, dt / 2.0))
    k3 = master_rhs(H_coeffs, channels, add(rho, k2, dt / 2.0))
    k4 = master_rhs(H_coeffs, channels, add(rho, k3, dt))
    out = rho.copy()
    for k in out.blocks:
        out.blocks[k] = rho.blocks[k] + (dt / 6.0) * (
            k1.blocks[k] + 2.0 * k2.blocks[k] + 2.0 * k3.blocks[k] + k4.blocks[k])
        if not np.all(np.isfinite(out.blocks[k])):
            raise FloatingPointError("non-finite block in collective_master_step")
    out.hermitize()
    return out


# ---------------------------------------------------------------------------
# states, observables


def coherent_top(N: int) -> CollectiveDensity:
    """|N/2, +N/2> in the top block."""
    rho = CollectiveDensity.zeros(N)
    rho.blocks[N][0, 0] = 1.0
    return rho


def cat_state(N: int) -> CollectiveDensity:
    """(|N/2, +N/2> + |N/2, -N/2>)/sqrt(2), entirely in the top block."""
    rho = CollectiveDensity.zeros(N)
    psi = np.zeros(N + 1, dtype=complex)
    psi[0] = psi[-1] = 1.0 / np.sqrt(2.0)
    rho.blocks[N] = np.outer(psi, psi.conj())
    return rho


def expectation(rho: CollectiveDensity, word_coeffs) -> complex:
    """<C> = sum_J d_J tr(C_J rho_J) for a collective operator polynomial."""
    total = 0.0 + 0.0j
    for two_j, block in rho.blocks.items():
        d = irrep_degeneracy(two_j / 2.0, rho.N)
        if d == 0:
            continue
        C = collective_operator(word_coeffs, two_j)
        total += d * np.trace(C @ block)
    return total


def squeezing_xi2(rho: CollectiveDensity) -> float:
    """xi^2 = N <Delta Jy^2> / <Jz>^2; raises if <Jz> = 0."""
    jz = expectation(rho, [(1.0, "z")]).real
    if abs(jz) < 1e-12:
        raise ZeroDivisionError("squeezing parameter undefined: <Jz> = 0")
    jy2 = expectation(rho, [(1.0, "yy")]).real
    jy = expectation(rho, [(1.0, "y")]).real
    return rho.N * (jy2 - jy * jy) / jz ** 2


def irrep_population(rho: CollectiveDensity, J: float) -> float:
    """N_J = tr[P_J rho] = d_J sum_M rho_{J,M,M}."""
    two_j = int(round(2 * J))
    if two_j not in rho.blocks:
        raise ValueError(f"no block with J={J} for N={rho.N}")
    return irrep_degeneracy(J, rho.N) * float(np.trace(rho.blocks[two_j]).real)


def fidelity_with(rho: CollectiveDensity, ref: CollectiveDensity) -> float:
    """tr[rho_ref rho] in the physical trace."""
    total = 0.0
    for two_j, block in rho.blocks.items():
        d = irrep_degeneracy(two_j / 2.0, rho.N)
        total += d * np.trace(ref.blocks[two_j] @ block).real
    return float(total)


# ---------------------------------------------------------------------------
# full Hilbert-space embedding via Clebsch-Gordan recursion (the oracle used
# by tests and for N <= ~12 cross-checks)


def irrep_embeddings(N: int) -> dict:
    """Isometries V of shape (2^N, 2J+1) for every irrep copy, keyed by 2J.

    Built by recursively coupling one spin-1/2 at a time with the closed-form
    Clebsch-Gordan coefficients for j (x) 1/2; each new qubit is appended as
    the least significant tensor factor.
    """
    sectors = {1: [np.eye(2, dtype=complex)]}  # two_j -> list of isometries
    dim = 2
    for _ in range(N - 1):
        dim *= 2
        new: dict[int, list[np.ndarray]] = {}
        up = np.array([1.0, 0.0], dtype=complex)
        dn = np.array([0.0, 1.0], dtype=complex)
        for two_j, vlist in sectors.items():
            j = two_j / 2.0
            for V in vlist:
                # couple to J = j + 1/2
                two_J = two_j + 1
                Jn = two_J / 2.0
                cols = []
                for Mn in (Jn - k for k in range(two_J + 1)):
                    col = np.zeros(dim, dtype=complex)
                    cup = np.sqrt((j + Mn + 0.5) / (2 * j + 1.0))
                    cdn = np.sqrt((j - Mn + 0.5) / (2 * j + 1.0))
                    if abs(Mn - 0.5) <= j and cup > 0:
                        col += cup * np.kron(V[:, int(round(j - (Mn - 0.5)))], up)
                    if abs(Mn + 0.5) <= j and cdn > 0:
                        col += cdn * np.kron(V[:, int(round(j - (Mn + 0.5)))], dn)
                    cols.append(col)
                new.setdefault(two_J, []).append(np.stack(cols, axis=1))
                # couple to J = j - 1/2
                if two_j >= 1:
                    two_J = two_j - 1
                    Jn = two_J / 2.0
                    cols = []
                    for Mn in (Jn - k for k in range(two_J + 1)):
                        col = np.zeros(dim, dtype=complex)
                        cup = -np.sqrt((j - Mn + 0.5) / (2 * j + 1.0))
                        cdn = np.sqrt((j + Mn + 0.5) / (2 * j + 1.0))
                        if abs(Mn - 0.5) <= j:
                            col += cup * np.kron(V[:, int(round(j - (Mn - 0.5)))], up)
                        if abs(Mn + 0.5) <= j:
                            col += cdn * np.kron(V[:, int(round(j - (Mn + 0.5)))], dn)
                        cols.append(col)
                    new.setdefault(two_J, []).append(np.stack(cols, axis=1))
        sectors = new
    return sectors


def embed_collective(rho: CollectiveDensity) -> np.ndarray:
    """Full 2^N density matrix with every degenerate irrep populated
    identically by the effective block."""
    sectors = irrep_embeddings(rho.N)
    dim = 2 ** rho.N
    out = np.zeros((dim, dim), dtype=complex)
    for two_j, vlist in sectors.items():
        block = rho.blocks[two_j]
        for V in vlist:
            out += V @ block @ V.conj().T
    return out


def project_collective(full: np.ndarray, N: int) -> CollectiveDensity:
    """Effective blocks of a full-space state: the degenerate-irrep average
    rho_J = (1/d_J) sum_i V_i^dag rho V_i."""
    sectors = irrep_embeddings(N)
    rho = CollectiveDensity.zeros(N)
    for two_j, vlist in sectors.items():
        acc = np.zeros((two_j + 1, two_j + 1), dtype=complex)
        for V in vlist:
            acc += V.conj().T @ full @ V
        rho.blocks[two_j] = acc / len(vlist)
    return rho
