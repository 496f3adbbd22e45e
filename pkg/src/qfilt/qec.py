"""Continuous-time quantum error correction with feedback.

Stabilizer generators are measured continuously at strength kappa while a
symmetric depolarizing channel acts at rate gamma and a feedback Hamiltonian
H_t = sum lambda_c sigma_c (single-qubit Paulis, bang-bang strengths) steers
the state back toward the codespace.  The conditional state follows

    d rho = gamma sum_c D[sigma_c] rho dt + kappa sum_l D[g_l] rho dt
          + sqrt(kappa) sum_l H[g_l] rho (dQ_l - 2 sqrt(kappa) Tr[g_l rho] dt)
          - i [H_t, rho] dt

with D[P] rho = P rho P - rho and H[g] rho = g rho + rho g - 2 Tr[g rho] rho.
The feedback policy maximizes codespace fidelity:
lambda_c = lambda_max * sgn(Tr[-i [Pi_0, sigma_c] rho]), with sgn(0) = 0.

Tracking only syndrome-space probabilities gives the Wonham filter; closing
the syndrome projectors under the feedback commutators to first level and
merging the pairs that act identically yields the truncated filter, whose
basis elements are Pauli-sandwiched syndrome projectors.  Construction is
automated and every generator matrix is verified against the exact
superoperator action in the full 2^n space.
"""

from __future__ import annotations

import hashlib
import io
from dataclasses import dataclass

import numpy as np

from .operators import commutator, dag, pauli_string
from .sde import rng_stream

__all__ = [
    "StabilizerCode",
    "TruncatedBasis",
    "build_code",
    "logical_zero",
    "full_filter_step",
    "feedback_policy",
    "wonham_transition_matrix",
    "wonham_step",
    "build_truncated_basis",
    "restrict_to_codespace_coupled",
    "untruncated_closure_dim",
    "truncated_basis_size",
    "truncated_filter_step",
    "truncated_policy",
    "codeword_fidelity_discrete",
    "fidelity_metrics",
    "run_feedback_trajectory",
    "save_basis",
    "load_basis",
]

_CODES = {
    "bitflip3": {
        "generators": ["ZZI", "IZZ"],
        "logical_z": "ZZZ",
    },
    "fivequbit": {
        "generators": ["XZZXI", "IXZZX", "XIXZZ", "ZXIXZ"],
        "logical_z": "ZZZZZ",
    },
}

_PAULI_AXES = "XYZ"


def _strings_commute(a: str, b: str) -> bool:
    clashes = sum(1 for x, y in zip(a, b) if x != "I" and y != "I" and x != y)
    return clashes % 2 == 0


def _single_label(n: int, qubit: int, axis: str) -> str:
    return "I" * qubit + axis + "I" * (n - qubit - 1)


@dataclass(frozen=True)
class StabilizerCode:
    """Code data: generators, syndrome projectors and recovery table.

    ``projectors[0]`` is the codespace projector; ``error_class[c]`` maps
    feedback/noise channel c (ordered qubit-major, axes X,Y,Z) to the index
    of the syndrome space a sigma_c error maps the codespace into.
    """

    name: str
    n: int
    generators: list
    gen_ops: np.ndarray  # (l, d, d)
    single_paulis: np.ndarray  # (3n, d, d)
    channel_labels: list  # strings like "IXIII"
    projectors: np.ndarray  # (S, d, d)
    syndrome_keys: list  # tuples of +-1, one per projector
    error_class: np.ndarray  # (3n,) -> projector index
    recovery: dict  # syndrome tuple -> Pauli-string label
    logical_z: str

    @property
    def dim(self) -> int:
        return 2 ** self.n

    @property
    def n_generators(self) -> int:
        return len(self.generators)

    @property
    def n_syndromes(self) -> int:
        return len(self.syndrome_keys)

    def syndrome_outcomes(self) -> np.ndarray:
        """h[l, s] = outcome of measuring g_l on syndrome space s (+-1)."""
        return np.array([[key[l] for key in self.syndrome_keys]
                         for l in range(self.n_generators)], dtype=float)


def build_code(name: str) -> StabilizerCode:
    """Construct one of the named codes: "bitflip3" or "fivequbit"."""
    try:
        spec = _CODES[name]
    except KeyError:
        raise ValueError(f"unknown code {name!r}; choose from {sorted(_CODES)}") from None
    generators = spec["generators"]
    n = len(generators[0])
    d = 2 ** n
    gen_ops = np.stack([pauli_string(g) for g in generators])
    # codespace projector: product of (I + g)/2
    pi0 = np.eye(d, dtype=complex)
    for g in gen_ops:
        pi0 = pi0 @ (np.eye(d, dtype=complex) + g) / 2.0

    labels = [_single_label(n, q, ax) for q in range(n) for ax in _PAULI_AXES]
    single_paulis = np.stack([pauli_string(lab) for lab in labels])
    syndromes = [tuple(1 if _strings_commute(lab, g) else -1 for g in generators)
                 for lab in labels]

    plus = tuple(1 for _ in generators)
    keys = [plus]
    projectors = [pi0]
    recovery = {plus: "I" * n}
    error_class = np.zeros(len(labels), dtype=int)
    for c, (lab, key) in enumerate(zip(labels, syndromes)):
        if key not in keys:
            keys.append(key)
            sig = single_paulis[c]
            projectors.append(sig @ pi0 @ sig)
            recovery[key] = lab
        error_class[c] = keys.index(key)
    return StabilizerCode(
        name=name, n=n, generators=list(generators), gen_ops=gen_ops,
        single_paulis=single_paulis, channel_labels=labels,
        projectors=np.stack(projectors), syndrome_keys=keys,
        error_class=error_class, recovery=recovery, logical_z=spec["logical_z"])


def logical_zero(code: StabilizerCode) -> np.ndarray:
    """Encoded |0>: the +1 eigenvector of the logical Z inside the codespace."""
    zbar = pauli_string(code.logical_z)
    d = code.dim
    proj = code.projectors[0] @ (np.eye(d) + zbar) / 2.0
    w, v = np.linalg.eigh(proj)
    psi = v[:, -1]
    return psi / np.linalg.norm(psi)


def _depolarize_batch(n: int, rho: np.ndarray) -> np.ndarray:
    """sum_c sigma_c rho sigma_c over all 3n single-qubit Paulis, using the
    per-qubit identity sum_{x,y,z} sigma rho sigma = 2 Tr_m[rho] (x) I_m - rho."""
    b = rho.shape[0]
    out = -n * rho
    for m in range(n):
        left = 2 ** m
        right = 2 ** (n - m - 1)
        view = rho.reshape(b, left, 2, right, left, 2, right)
        traced = view[:, :, 0, :, :, 0, :] + view[:, :, 1, :, :, 1, :]
        emb = np.zeros((b, left, 2, right, left, 2, right), dtype=rho.dtype)
        emb[:, :, 0, :, :, 0, :] = traced
        emb[:, :, 1, :, :, 1, :] = traced
        out += 2.0 * emb.reshape(rho.shape)
    return out


def full_filter_step(code: StabilizerCode, rho: np.ndarray, dQ: np.ndarray,
                     gamma: float, kappa: float, lambdas: np.ndarray, dt: float) -> np.ndarray:
    """One Euler step of the full 2^n-dimensional filter (docstring above)."""
    out = _full_step_batch(code, rho[None], np.asarray(dQ, dtype=float)[None],
                           gamma, kappa, np.asarray(lambdas, dtype=float)[None], dt)
    return out[0]


def feedback_policy(code: StabilizerCode, rho: np.ndarray, lambda_max: float,
                    dead_zone: float = 1e-14) -> np.ndarray:
    """lambda_c = lambda_max * sgn(Tr[-i [Pi_0, sigma_c] rho]), with
    sgn(0) := 0: signals inside the numerical dead zone give no feedback, so
    exactly block-diagonal states (codespace, maximally mixed) get lambda = 0.

    Closed-loop runs instead use the raw float sign of the signal, which
    keeps the feedback effectively always on; see run_feedback_batch.
    """
    pi0 = code.projectors[0]
    P = code.single_paulis
    comm = pi0 @ P - P @ pi0  # (3n, d, d), [Pi_0, sigma_c]
    vals = (-1j * np.einsum("kij,ji->k", comm, rho)).real
    return lambda_max * np.sign(np.where(np.abs(vals) <= dead_zone, 0.0, vals))


def wonham_transition_matrix(code: StabilizerCode, gamma: float) -> np.ndarray:
    """Markov generator of syndrome hopping under the depolarizing channel,
    Lambda = gamma sum_errors (T_e - I) over the single-qubit Pauli errors."""
    S = code.n_syndromes
    lam = np.zeros((S, S))
    for c in range(len(code.channel_labels)):
        key_e = tuple(1 if _strings_commute(code.channel_labels[c], g) else -1
                      for g in code.generators)
        for s, key in enumerate(code.syndrome_keys):
            target = tuple(a * b for a, b in zip(key, key_e))
            lam[code.syndrome_keys.index(target), s] += gamma
            lam[s, s] -= gamma
    return lam


def wonham_step(code: StabilizerCode, p: np.ndarray, dQ: np.ndarray,
                gamma: float, kappa: float, dt: float) -> np.ndarray:
    """Syndrome-probability filter:

        dp = Lambda p dt + 2 sqrt(kappa) sum_l (H_l - h_l^T p I) p dW_l,
        dW_l = dQ_l - 2 sqrt(kappa) (h_l^T p) dt

    with h_l the +-1 outcomes of generator l per syndrome space.  Output is
    clipped at zero and renormalized.
    """
    h = code.syndrome_outcomes()
    lam = wonham_transition_matrix(code, gamma)
    p = np.asarray(p, dtype=float)
    means = h @ p
    dW = np.asarray(dQ, dtype=float) - 2.0 * np.sqrt(kappa) * means * dt
    dp = lam @ p * dt
    dp += 2.0 * np.sqrt(kappa) * ((h - means[:, None]) * p[None, :]).T @ dW
    out = np.clip(p + dp, 0.0, None)
    total = out.sum()
    if total <= 0 or not np.isfinite(total):
        raise FloatingPointError("Wonham filter state degenerated")
    return out / total


# ---------------------------------------------------------------------------
# truncated filter


def truncated_basis_size(n: int) -> int:
    """(2 + 9 n (n+1)) / 2: element count of the fully truncated filter for a
    perfect non-degenerate code on n qubits (136 at n = 5)."""
    return (2 + 9 * n * (n + 1)) // 2


@dataclass
class TruncatedBasis:
    """Basis elements and precomputed generators of the truncated filter.

    Elements 0..S-1 are the syndrome projectors; the rest are the merged
    first-level feedback coefficients i[sigma_c, Pi_s].  ``policy_index`` and
    ``policy_sign`` locate, per feedback channel, the element whose
    coefficient is Tr[-i [Pi_0, sigma_c] rho] (index -1 when the commutator
    vanishes identically).  Generator matrices act on the coefficient vector:
    drift_noise (unit gamma), drift_meas (unit kappa), meas_H (per
    generator), feedback (per channel, unit lambda).
    """

    code: StabilizerCode
    element_mats: np.ndarray  # (E, d, d)
    element_descr: list  # human-readable descriptors
    n_syndromes: int
    drift_noise: np.ndarray
    drift_meas: np.ndarray
    meas_H: np.ndarray  # (l, E, E)
    feedback: np.ndarray  # (3n, E, E)
    policy_index: np.ndarray
    policy_sign: np.ndarray
    h_outcomes: np.ndarray  # (l, S)
    verification_residual: float

    @property
    def size(self) -> int:
        return self.element_mats.shape[0]

    def initial_state(self, rho: np.ndarray) -> np.ndarray:
        """Coefficient vector Tr[Pi_a rho] of a full-space density matrix."""
        return np.einsum("aij,ji->a", self.element_mats, rho).real


def _vec_r(X: np.ndarray) -> np.ndarray:
    v = X.ravel()
    return np.concatenate([v.real, v.imag])


def build_truncated_basis(code: StabilizerCode, verify_tol: float = 1e-10) -> TruncatedBasis:
    """Automated first-level truncation.

    1. Start from the syndrome projectors.
    2. Feedback commutators i[sigma_c, Pi_s] introduce first-level terms;
       second-level terms (feedback acting on first-level elements) are
       discarded by Hilbert-Schmidt projection onto the retained span.
    3. Pairs acting identically are merged: a sigma_c error maps syndrome s
       to s', and i[sigma_c, Pi_s] = -i[sigma_c, Pi_s'], so only one of each
       pair is kept.

    All generator matrices are verified against the exact superoperator
    action in the full space; closure is exact (residual <= verify_tol) for
    the noise and measurement channels and for feedback acting on the
    syndrome projectors.
    """
    d = code.dim
    S = code.n_syndromes
    n_chan = len(code.channel_labels)
    mats = [code.projectors[s].astype(complex) for s in range(S)]
    descr = [f"P[{s}]" for s in range(S)]
    pair_index = {}
    pair_sign = {}
    for c in range(n_chan):
        sig = code.single_paulis[c]
        key_e = tuple(1 if _strings_commute(code.channel_labels[c], g) else -1
                      for g in code.generators)
        for s in range(S):
            if (s, c) in pair_index:
                continue
            C = 1j * commutator(sig, code.projectors[s])
            if np.max(np.abs(C)) < 1e-12:
                pair_index[(s, c)] = -1
                pair_sign[(s, c)] = 0.0
                continue
            target_key = tuple(a * b for a, b in zip(code.syndrome_keys[s], key_e))
            s2 = code.syndrome_keys.index(target_key)
            idx = len(mats)
            mats.append(C)
            descr.append(f"i[{code.channel_labels[c]}, P[{s}]]")
            pair_index[(s, c)] = idx
            pair_sign[(s, c)] = 1.0
            if s2 != s:
                pair_index[(s2, c)] = idx
                pair_sign[(s2, c)] = -1.0
                # merged-pair relation: i[sigma, Pi_s] = -i[sigma, Pi_s']
                C2 = 1j * commutator(sig, code.projectors[s2])
                if np.max(np.abs(C2 + C)) > 1e-10:
                    raise RuntimeError(
                        f"pair-merge relation violated for channel {code.channel_labels[c]},"
                        f" syndromes {s},{s2}")

    E = len(mats)
    element_mats = np.stack(mats)
    basis_vecs = np.stack([_vec_r(X) for X in mats])  # (E, 2 d^2)
    gram = basis_vecs @ basis_vecs.T
    gram_inv = np.linalg.inv(gram)

    def expand(X: np.ndarray) -> tuple[np.ndarray, float]:
        coeff = gram_inv @ (basis_vecs @ _vec_r(X))
        recon = np.tensordot(coeff, element_mats, axes=1)
        resid = np.max(np.abs(X - recon))
        return coeff, resid

    worst_exact = 0.0
    drift_noise = np.zeros((E, E))
    drift_meas = np.zeros((E, E))
    meas_H = np.zeros((code.n_generators, E, E))
    feedback = np.zeros((n_chan, E, E))
    P = code.single_paulis
    G = code.gen_ops
    for a in range(E):
        X = element_mats[a]
        act = np.einsum("kij,kjl->il", P, np.matmul(X[None], P)) - n_chan * X
        coeff, r = expand(act)
        worst_exact = max(worst_exact, r)
        drift_noise[a] = coeff
        act = np.einsum("kij,kjl->il", G, np.matmul(X[None], G)) - len(G) * X
        coeff, r = expand(act)
        worst_exact = max(worst_exact, r)
        drift_meas[a] = coeff
        for l in range(code.n_generators):
            coeff, r = expand(G[l] @ X + X @ G[l])
            worst_exact = max(worst_exact, r)
            meas_H[l, a] = coeff
        for c in range(n_chan):
            act = 1j * commutator(P[c], X)
            coeff, r = expand(act)
            if a < S:
                worst_exact = max(worst_exact, r)
            else:
                # second-level truncation: keep the projection, but it must
                # be idempotent
                recon = np.tensordot(coeff, element_mats, axes=1)
                coeff2, _ = expand(recon)
                if np.max(np.abs(coeff - coeff2)) > verify_tol:
                    raise RuntimeError("projection not idempotent in basis construction")
            feedback[c, a] = coeff
    if worst_exact > verify_tol:
        raise RuntimeError(
            f"truncated-basis closure verification failed: residual {worst_exact:.3e}")

    policy_index = np.array([pair_index[(0, c)] for c in range(n_chan)])
    policy_sign = np.array([pair_sign[(0, c)] for c in range(n_chan)])
    return TruncatedBasis(
        code=code, element_mats=element_mats, element_descr=descr, n_syndromes=S,
        drift_noise=drift_noise, drift_meas=drift_meas, meas_H=meas_H,
        feedback=feedback, policy_index=policy_index, policy_sign=policy_sign,
        h_outcomes=code.syndrome_outcomes(), verification_residual=worst_exact)


def restrict_to_codespace_coupled(basis: TruncatedBasis) -> TruncatedBasis:
    """Further truncation keeping only the syndrome projectors and the
    feedback coefficients coupled to the codespace (31 elements for the
    five-qubit code).  Degrades fidelity measurably; kept for comparison."""
    code = basis.code
    S = basis.n_syndromes
    keep = list(range(S)) + sorted({int(i) for i in basis.policy_index if i >= 0})
    keep_arr = np.array(keep)
    sub = TruncatedBasis(
        code=code,
        element_mats=basis.element_mats[keep_arr],
        element_descr=[basis.element_descr[i] for i in keep],
        n_syndromes=S,
        drift_noise=basis.drift_noise[np.ix_(keep_arr, keep_arr)],
        drift_meas=basis.drift_meas[np.ix_(keep_arr, keep_arr)],
        meas_H=basis.meas_H[:, keep_arr[:, None], keep_arr[None, :]],
        feedback=basis.feedback[:, keep_arr[:, None], keep_arr[None, :]],
        policy_index=np.array([keep.index(int(i)) if i >= 0 else -1
                               for i in basis.policy_index]),
        policy_sign=basis.policy_sign.copy(),
        h_outcomes=basis.h_outcomes,
        verification_residual=basis.verification_residual)
    return sub


_PAULI_PRODUCT = {
    ("I", "I"): "I", ("I", "X"): "X", ("I", "Y"): "Y", ("I", "Z"): "Z",
    ("X", "I"): "X", ("X", "X"): "I", ("X", "Y"): "Z", ("X", "Z"): "Y",
    ("Y", "I"): "Y", ("Y", "X"): "Z", ("Y", "Y"): "I", ("Y", "Z"): "X",
    ("Z", "I"): "Z", ("Z", "X"): "Y", ("Z", "Y"): "X", ("Z", "Z"): "I",
}


def _string_product(a: str, b: str) -> str:
    """Pauli-string product with the overall phase dropped."""
    return "".join(_PAULI_PRODUCT[pair] for pair in zip(a, b))


def untruncated_closure_dim(code: StabilizerCode) -> int:
    """Number of distinct feedback-coefficient terms needed to close the
    filter dynamics without truncation.

    Every term is a Pauli-sandwiched syndrome projector, which normalizes to
    Pi_s * w for a Pauli string w defined modulo the stabilizer group, so
    terms are counted as (syndrome, coset) pairs reached by iterating the
    feedback commutators.  For the five-qubit code this reaches
    16 + 1008 = 1024 terms, no smaller than the full density matrix.
    """
    n = code.n
    identity = "I" * n
    stab_strings = [identity]
    for g in code.generators:
        stab_strings += [_string_product(s, g) for s in stab_strings]
    stab_strings = sorted(set(stab_strings))

    def coset_key(w: str) -> str:
        return min(_string_product(s, w) for s in stab_strings)

    def syndrome_index(key: tuple) -> int:
        return code.syndrome_keys.index(key)

    seen = {(s, identity) for s in range(code.n_syndromes)}
    frontier = list(seen)
    while frontier:
        new_frontier = []
        for s, w in frontier:
            for c, lab in enumerate(code.channel_labels):
                key_e = tuple(1 if _strings_commute(lab, g) else -1
                              for g in code.generators)
                trivial = all(v == 1 for v in key_e)
                if trivial and _strings_commute(lab, w):
                    continue  # commutator vanishes identically
                w2 = coset_key(_string_product(lab, w))
                targets = [(s, w2)]
                if not trivial:
                    moved = tuple(a * b for a, b in zip(code.syndrome_keys[s], key_e))
                    targets.append((syndrome_index(moved), w2))
                for t in targets:
                    if t not in seen:
                        seen.add(t)
                        new_frontier.append(t)
        frontier = new_frontier
    return len(seen)


def truncated_policy(basis: TruncatedBasis, p: np.ndarray, lambda_max: float,
                     dead_zone: float = 1e-14) -> np.ndarray:
    """Feedback strengths from the truncated state: the coefficient of the
    merged first-level element for (codespace, channel) is exactly
    Tr[-i [Pi_0, sigma_c] rho].  Dead-zone semantics as in feedback_policy."""
    vals = np.where(basis.policy_index >= 0,
                    basis.policy_sign * p[basis.policy_index], 0.0)
    return lambda_max * np.sign(np.where(np.abs(vals) <= dead_zone, 0.0, vals))


def truncated_filter_step(basis: TruncatedBasis, p: np.ndarray, dQ: np.ndarray,
                          gamma: float, kappa: float, lambda_max: float,
                          dt: float) -> tuple[np.ndarray, np.ndarray]:
    """One Euler step of the truncated filter; returns (p', lambdas) with the
    feedback strengths computed from the incoming state (zero-order hold)."""
    S = basis.n_syndromes
    lambdas = truncated_policy(basis, p, lambda_max)
    drift = gamma * basis.drift_noise @ p + kappa * basis.drift_meas @ p
    drift += np.einsum("c,cab,b->a", lambdas, basis.feedback, p)
    means = basis.h_outcomes @ p[:S]
    dW = np.asarray(dQ, dtype=float) - 2.0 * np.sqrt(kappa) * means * dt
    stoch = np.sqrt(kappa) * ((np.einsum("lab,b->la", basis.meas_H, p)
                               - 2.0 * means[:, None] * p[None, :]).T @ dW)
    out = p + drift * dt + stoch
    out[:S] = np.clip(out[:S], 0.0, None)
    total = out[:S].sum()
    if total <= 0 or not np.isfinite(total):
        raise FloatingPointError("truncated filter state degenerated")
    return out / total, lambdas


def codeword_fidelity_discrete(t, gamma: float):
    """Codeword fidelity of discrete-time correction after depolarizing for a
    time t: (1/256) e^{-20 t g} (3 + e^{4 t g})^4 (-3 + 4 e^{4 t g});
    equals 1 at t = 0 and decays monotonically to 1/64."""
    x = np.asarray(t, dtype=float) * gamma
    return np.exp(-20.0 * x) * (3.0 + np.exp(4.0 * x)) ** 4 * (4.0 * np.exp(4.0 * x) - 3.0) / 256.0


def fidelity_metrics(rho: np.ndarray, code: StabilizerCode, psi0: np.ndarray) -> dict:
    """Codespace fidelity Tr[Pi_0 rho] and codeword fidelity Tr[rho_0 rho]."""
    rho0 = np.outer(psi0, psi0.conj())
    return {
        "codespace": float(np.trace(code.projectors[0] @ rho).real),
        "codeword": float(np.trace(rho0 @ rho).real),
    }


def _full_step_batch(code: StabilizerCode, rho: np.ndarray, dQ: np.ndarray,
                     gamma: float, kappa: float, lambdas: np.ndarray,
                     dt: float) -> np.ndarray:
    """Vectorized full-filter Euler step over a batch of trajectories."""
    P = code.single_paulis
    G = code.gen_ops
    n_chan = P.shape[0]
    drho = gamma * (_depolarize_batch(code.n, rho) - n_chan * rho) * dt
    Grho = np.matmul(G[None], rho[:, None])  # (B, l, d, d)
    t = np.matmul(Grho, G[None])
    drho += kappa * (t.sum(axis=1) - G.shape[0] * rho) * dt
    signals = np.einsum("blii->bl", Grho).real
    dW = dQ - 2.0 * np.sqrt(kappa) * signals * dt
    cond = Grho + np.swapaxes(Grho, -1, -2).conj() \
        - 2.0 * signals[:, :, None, None] * rho[:, None]
    drho += np.sqrt(kappa) * np.einsum("bl,blij->bij", dW, cond)
    H = np.einsum("bc,cij->bij", lambdas, P)
    drho += -1j * (np.matmul(H, rho) - np.matmul(rho, H)) * dt
    out = rho + drho
    out = 0.5 * (out + np.swapaxes(out, -1, -2).conj())
    tr = np.einsum("bii->b", out).real
    if not np.all(np.isfinite(tr)):
        raise FloatingPointError("non-finite density matrix in full filter batch")
    return out / tr[:, None, None]


def _truncated_step_batch(basis: TruncatedBasis, p: np.ndarray, dQ: np.ndarray,
                          gamma: float, kappa: float, lambdas: np.ndarray,
                          dt: float) -> np.ndarray:
    S = basis.n_syndromes
    drift = p @ (gamma * basis.drift_noise + kappa * basis.drift_meas).T
    fb = np.tensordot(p, basis.feedback, axes=([1], [2]))  # (B, channels, E)
    drift += np.einsum("bc,bca->ba", lambdas, fb)
    means = p[:, :S] @ basis.h_outcomes.T
    dW = dQ - 2.0 * np.sqrt(kappa) * means * dt
    hp = np.tensordot(p, basis.meas_H, axes=([1], [2]))  # (B, l, E)
    stoch = np.einsum("bl,bla->ba", dW, hp - 2.0 * means[:, :, None] * p[:, None, :])
    out = p + drift * dt + np.sqrt(kappa) * stoch
    out[:, :S] = np.clip(out[:, :S], 0.0, None)
    total = out[:, :S].sum(axis=1)
    if np.any(total <= 0) or not np.all(np.isfinite(total)):
        raise FloatingPointError("truncated filter state degenerated")
    return out / total[:, None]


def _bang_bang(vals: np.ndarray, lambda_max: float) -> np.ndarray:
    """Raw-sign bang-bang strengths; an exact float zero gets +lambda_max so
    the loop never stalls on an exactly block-diagonal state."""
    signs = np.sign(vals)
    signs[vals == 0.0] = 1.0
    return lambda_max * signs


def _policy_batch_full(comm0: np.ndarray, rho: np.ndarray, lambda_max: float) -> np.ndarray:
    vals = np.einsum("cij,bji->bc", comm0, rho).real
    return _bang_bang(vals, lambda_max)


def run_feedback_batch(code: StabilizerCode, gamma: float, kappa: float,
                       lambda_max: float, T: float, dt: float, seed, n_traj: int,
                       controller: str = "truncated",
                       basis: TruncatedBasis | None = None,
                       record_every: int = 10) -> dict:
    """Closed-loop trajectories in lockstep: the full filter is the physical
    system, the chosen controller computes the feedback strengths from the
    measurement current, and those strengths drive the system.

    controller is one of "full" (feedback from the system state itself),
    "truncated" (co-integrate the given truncated basis) or "none".
    Trajectory k draws its measurement noise from the stream (seed, k)
    regardless of the controller, so paired comparisons share their noise
    realizations.  With a truncated controller the per-step policy signs of
    the full state are also recorded for agreement statistics.

    Returns time grid, per-trajectory codespace/codeword fidelity traces of
    shape (n_traj, n_records), and per-trajectory policy agreement.
    """
    if controller == "truncated" and basis is None:
        raise ValueError("truncated controller requires a basis")
    psi0 = logical_zero(code)
    rho0 = np.outer(psi0, psi0.conj())
    rho = np.broadcast_to(rho0, (n_traj,) + rho0.shape).copy()
    steps = int(round(T / dt))
    l_gen = code.n_generators
    n_chan = len(code.channel_labels)
    sqdt = np.sqrt(dt)
    rngs = [rng_stream(seed, k) for k in range(n_traj)]
    p = np.broadcast_to(basis.initial_state(rho0), (n_traj, basis.size)).copy() \
        if basis is not None else None
    comm0 = -1j * (code.projectors[0] @ code.single_paulis
                   - code.single_paulis @ code.projectors[0])
    times, cs_fid, cw_fid = [], [], []
    agree = np.zeros(n_traj)
    agree_steps = 0
    chunk = 20_000
    done = 0
    while done < steps:
        m = min(chunk, steps - done)
        noise = np.stack([r.standard_normal((m, l_gen)) for r in rngs]) * sqdt
        for i in range(m):
            if controller == "none":
                lambdas = np.zeros((n_traj, n_chan))
            elif controller == "full":
                lambdas = _policy_batch_full(comm0, rho, lambda_max)
            else:
                vals = np.where(basis.policy_index[None, :] >= 0,
                                basis.policy_sign[None, :] * p[:, basis.policy_index],
                                0.0)
                lambdas = np.where(basis.policy_index[None, :] >= 0,
                                   _bang_bang(vals, lambda_max), 0.0)
                full_l = _policy_batch_full(comm0, rho, lambda_max)
                agree += np.mean(full_l == lambdas, axis=1)
                agree_steps += 1
            signals = np.einsum("lij,bji->bl", code.gen_ops, rho).real
            dQ = 2.0 * np.sqrt(kappa) * signals * dt + noise[:, i]
            rho = _full_step_batch(code, rho, dQ, gamma, kappa, lambdas, dt)
            if p is not None and controller != "full":
                p = _truncated_step_batch(basis, p, dQ, gamma, kappa, lambdas, dt)
            if (done + i + 1) % record_every == 0:
                times.append((done + i + 1) * dt)
                cs_fid.append(np.einsum("ij,bji->b", code.projectors[0], rho).real)
                cw_fid.append(np.einsum("ij,bji->b", rho0, rho).real)
        done += m
    out = {
        "times": np.array(times),
        "codespace": np.array(cs_fid).T,
        "codeword": np.array(cw_fid).T,
        "final_rho": rho,
    }
    if agree_steps:
        out["policy_agreement"] = agree / agree_steps
    return out


def run_feedback_trajectory(code: StabilizerCode, gamma: float, kappa: float,
                            lambda_max: float, T: float, dt: float, seed,
                            controller: str = "truncated",
                            basis: TruncatedBasis | None = None,
                            record_every: int = 10) -> dict:
    """Single closed-loop trajectory; see run_feedback_batch."""
    out = run_feedback_batch(code, gamma, kappa, lambda_max, T, dt, seed, 1,
                             controller=controller, basis=basis,
                             record_every=record_every)
    res = {
        "times": out["times"],
        "codespace": out["codespace"][0],
        "codeword": out["codeword"][0],
        "final_rho": out["final_rho"][0],
    }
    if "policy_agreement" in out:
        res["policy_agreement"] = float(out["policy_agreement"][0])
    return res


# ---------------------------------------------------------------------------
# basis cache


def save_basis(basis: TruncatedBasis, path: str) -> None:
    """Write the basis to an .npz with a content checksum."""
    arrays = {
        "element_mats": basis.element_mats,
        "drift_noise": basis.drift_noise,
        "drift_meas": basis.drift_meas,
        "meas_H": basis.meas_H,
        "feedback": basis.feedback,
        "policy_index": basis.policy_index,
        "policy_sign": basis.policy_sign,
        "h_outcomes": basis.h_outcomes,
    }
    digest = hashlib.sha256()
    for k in sorted(arrays):
        digest.update(np.ascontiguousarray(arrays[k]).tobytes())
    np.savez_compressed(
        path, version=1, code_name=basis.code.name,
        n_syndromes=basis.n_syndromes, descr=np.array(basis.element_descr),
        residual=basis.verification_residual, checksum=digest.hexdigest(), **arrays)


def load_basis(path: str) -> TruncatedBasis:
    with np.load(path, allow_pickle=False) as z:
        arrays = {k: z[k] for k in
                  ("element_mats", "drift_noise", "drift_meas", "meas_H",
                   "feedback", "policy_index", "policy_sign", "h_outcomes")}
        digest = hashlib.sha256()
        for k in sorted(arrays):
            digest.update(np.ascontiguousarray(arrays[k]).tobytes())
        if digest.hexdigest() != str(z["checksum"]):
            raise ValueError(f"basis cache {path} failed its checksum")
        code = build_code(str(z["code_name"]))
        return TruncatedBasis(
            code=code, element_mats=arrays["element_mats"],
            element_descr=[str(s) for s in z["descr"]],
            n_syndromes=int(z["n_syndromes"]),
            drift_noise=arrays["drift_noise"], drift_meas=arrays["drift_meas"],
            meas_H=arrays["meas_H"], feedback=arrays["feedback"],
            policy_index=arrays["policy_index"], policy_sign=arrays["policy_sign"],
            h_outcomes=arrays["h_outcomes"],
            verification_residual=float(z["residual"]))
