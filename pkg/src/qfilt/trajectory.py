"""Continuous-measurement quantum trajectories: the diffusive quantum filter
in density-matrix (SME) and pure-state (SSE) form, truth simulation, and the
scalar Bloch-angle filter for a monitored qubit.

The filter for a system with Hamiltonian H and coupling operator L is

    d rho = -i[H, rho] dt + D[L] rho dt + M[L] rho dW,
    dW = dY - Tr[(L + L^dag) rho] dt,

and its pure-state unraveling is d|psi> = A |psi> dt + B |psi> dW with
B = L - <L> and A = -iH - (L^dag L - 2 <L^dag> L + <L><L^dag>) / 2.

Steps renormalize trace/norm and re-Hermitize every step; Euler-Maruyama is
the default scheme with dt = 1e-5 in the problem's inverse-rate units.
The batched variants evolve a stack of states in lockstep and are the compute
kernel for ensembles and trajectory batches; each batch slot is an
independent trajectory and must use its own noise stream.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np

from .operators import SIGMA_Y, SIGMA_Z, dag
from .sde import rng_stream

__all__ = [
    "DEFAULT_DT",
    "DiffusiveModel",
    "TrajectoryRecord",
    "qubit_model",
    "sme_step",
    "sme_step_batch",
    "sse_step",
    "sse_step_batch",
    "simulate_truth",
    "simulate_truth_batch",
    "bloch_angle_step",
]

DEFAULT_DT = 1e-5


@dataclass(frozen=True)
class DiffusiveModel:
    """Hamiltonian/coupling pair of one diffusive measurement channel."""

    H: np.ndarray
    L: np.ndarray

    def __post_init__(self):
        if self.H.shape != self.L.shape or self.H.ndim != 2:
            raise ValueError("H and L must be square matrices of equal dimension")
        if np.max(np.abs(self.H - dag(self.H))) > 1e-12 * max(1.0, np.max(np.abs(self.H))):
            raise ValueError("Hamiltonian must be Hermitian")

    @property
    def dim(self) -> int:
        return self.H.shape[0]


def qubit_model(kappa: float, B: float) -> DiffusiveModel:
    """Qubit in a magnetic field: H = B sigma_y, L = sqrt(kappa) sigma_z."""
    return DiffusiveModel(H=B * SIGMA_Y, L=np.sqrt(kappa) * SIGMA_Z)


@dataclass
class TrajectoryRecord:
    """Measurement record of a simulated trajectory.

    ``dY[i] - signal[i] * dt == dW[i]`` holds exactly by construction,
    where signal is the filtered expectation of L + L^dag.
    """

    times: np.ndarray
    dY: np.ndarray
    dW: np.ndarray
    expectations: dict[str, np.ndarray] = field(default_factory=dict)
    seed: object = None

    def to_csv(self) -> str:
        names = list(self.expectations)
        buf = io.StringIO()
        buf.write(",".join(["time", "dY", "dW"] + names) + "\n")
        n = len(self.dY)
        cols = [self.times[:n], self.dY, self.dW] + [self.expectations[k][:n] for k in names]
        for row in zip(*cols):
            buf.write(",".join(f"{v:.17g}" for v in row) + "\n")
        return buf.getvalue()


def _batched(rho: np.ndarray) -> tuple[np.ndarray, bool]:
    if rho.ndim == 2:
        return rho[None, :, :], True
    return rho, False


def sme_step_batch(H: np.ndarray, L: np.ndarray, rho: np.ndarray,
                   dY: np.ndarray | float, dt: float) -> tuple[np.ndarray, np.ndarray]:
    """One Euler step of the quantum filter on a stack of density matrices.

    H may be a single matrix or one per batch slot (leading axis); L is
    shared.  Returns (rho', dW) where dW is per slot.  Trace is renormalized
    and Hermiticity enforced after the step.
    """
    rho, squeeze = _batched(rho)
    Ld = dag(L)
    LdL = Ld @ L
    Lsig = L + Ld
    signal = np.einsum("ij,bji->b", Lsig, rho).real
    dW = np.asarray(dY) - signal * dt
    Lrho = L @ rho
    drho = (-1j) * (H @ rho - rho @ H) * dt
    drho += (Lrho @ Ld - 0.5 * (LdL @ rho + rho @ LdL)) * dt
    cond = Lrho + np.swapaxes(Lrho, -1, -2).conj() - signal[:, None, None] * rho
    drho += cond * dW[:, None, None]
    out = rho + drho
    out = 0.5 * (out + np.swapaxes(out, -1, -2).conj())
    tr = np.einsum("bii->b", out).real
    if not np.all(np.isfinite(tr)):
        raise FloatingPointError("non-finite density matrix in sme_step")
    out = out / tr[:, None, None]
    if squeeze:
        return out[0], dW[0]
    return out, dW


def sme_step(model: DiffusiveModel, rho: np.ndarray, dY: float, dt: float) -> np.ndarray:
    """Advance the conditional density matrix by one measurement increment dY."""
    out, _ = sme_step_batch(model.H, model.L, rho, dY, dt)
    return out


def sse_step_batch(H: np.ndarray, L: np.ndarray, psi: np.ndarray,
                   dW: np.ndarray | float, dt: float) -> np.ndarray:
    """One Euler step of the stochastic Schrodinger equation on a stack of
    state vectors, driven directly by the innovation increment dW."""
    squeeze = psi.ndim == 1
    if squeeze:
        psi = psi[None, :]
    Ld = dag(L)
    LdL = Ld @ L
    Lpsi = psi @ L.T
    expL = np.einsum("bi,bi->b", psi.conj(), Lpsi)
    expLd = expL.conj()
    dW = np.broadcast_to(np.asarray(dW, dtype=float), (psi.shape[0],))
    Hpsi = psi @ H.T if H.ndim == 2 else np.einsum("bij,bj->bi", H, psi)
    dpsi = (-1j) * Hpsi * dt
    dpsi -= 0.5 * (psi @ LdL.T - 2.0 * expLd[:, None] * Lpsi
                   + (expL * expLd)[:, None] * psi) * dt
    dpsi += (Lpsi - expL[:, None] * psi) * dW[:, None]
    out = psi + dpsi
    norm = np.linalg.norm(out, axis=1)
    if not np.all(np.isfinite(norm)):
        raise FloatingPointError("non-finite state vector in sse_step")
    out = out / norm[:, None]
    return out[0] if squeeze else out


def sse_step(model: DiffusiveModel, psi: np.ndarray, dW: float, dt: float) -> np.ndarray:
    """Advance the pure conditional state by one innovation increment dW."""
    return sse_step_batch(model.H, model.L, psi, dW, dt)


def simulate_truth(model: DiffusiveModel, rho0: np.ndarray, T: float, dt: float,
                   seed, observables: dict[str, np.ndarray] | None = None) -> TrajectoryRecord:
    """Simulate a measurement record by driving the filter with fresh noise.

    The record is dY = Tr[(L + L^dag) rho] dt + dW_sim with dW_sim drawn iid
    normal(0, dt); this is how measurement records are generated for filters
    under test.  Stored expectations are evaluated on the trajectory states
    (including the initial state).
    """
    observables = observables or {}
    steps = int(round(T / dt))
    rng = rng_stream(seed)
    rho = np.array(rho0, dtype=complex)
    Lsig = model.L + dag(model.L)
    dY = np.zeros(steps)
    dWs = rng.standard_normal(steps) * np.sqrt(dt)
    exps = {k: np.zeros(steps + 1) for k in observables}
    for k, op in observables.items():
        exps[k][0] = np.trace(op @ rho).real
    for i in range(steps):
        signal = np.trace(Lsig @ rho).real
        dY[i] = signal * dt + dWs[i]
        rho, _ = sme_step_batch(model.H, model.L, rho, dY[i], dt)
        for k, op in observables.items():
            exps[k][i + 1] = np.trace(op @ rho).real
    return TrajectoryRecord(
        times=np.arange(steps + 1) * dt, dY=dY, dW=dWs, expectations=exps, seed=seed)


def simulate_truth_batch(model: DiffusiveModel, rho0: np.ndarray, T: float, dt: float,
                         seed, n_traj: int,
                         observables: dict[str, np.ndarray] | None = None,
                         store_every: int = 0) -> dict[str, np.ndarray]:
    """Evolve n_traj independent truth trajectories in lockstep.

    Trajectory k uses the noise stream (seed, k).  Returns final expectation
    values per observable (and optionally snapshots every ``store_every``
    steps) without storing the per-step records.
    """
    observables = observables or {}
    steps = int(round(T / dt))
    rho = np.broadcast_to(np.asarray(rho0, dtype=complex), (n_traj,) + rho0.shape).copy()
    Lsig = model.L + dag(model.L)
    rngs = [rng_stream(seed, k) for k in range(n_traj)]
    sqdt = np.sqrt(dt)
    snaps = {k: [] for k in observables} if store_every else None
    chunk = 50_000
    done = 0
    while done < steps:
        m = min(chunk, steps - done)
        noise = np.stack([r.standard_normal(m) for r in rngs]) * sqdt
        for i in range(m):
            signal = np.einsum("ij,bji->b", Lsig, rho).real
            dY = signal * dt + noise[:, i]
            rho, _ = sme_step_batch(model.H, model.L, rho, dY, dt)
            if store_every and (done + i + 1) % store_every == 0:
                for k, op in observables.items():
                    snaps[k].append(np.einsum("ij,bji->b", op, rho).real)
        done += m
    out = {}
    for k, op in observables.items():
        out[k] = np.einsum("ij,bji->b", op, rho).real
        if store_every:
            out[k + "_snapshots"] = np.array(snaps[k])
    return out


def bloch_angle_step(theta, dM, B: float, kappa: float, dt: float):
    """Scalar filter for a monitored qubit restricted to the x-z Bloch circle,
    with theta measured from +x so that <sigma_z> = sin(theta):

        d theta = -2B dt + kappa sin(2 theta) dt + 2 sqrt(kappa) cos(theta) dW,
        dW = dM - 2 sqrt(kappa) sin(theta) dt.

    Accepts scalars or equally-shaped arrays.
    """
    if kappa <= 0:
        raise ValueError("kappa must be positive")
    dW = dM - 2.0 * np.sqrt(kappa) * np.sin(theta) * dt
    return (theta - 2.0 * B * dt + kappa * np.sin(2.0 * theta) * dt
            + 2.0 * np.sqrt(kappa) * np.cos(theta) * dW)
