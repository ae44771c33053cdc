"""Stochastic integrators for the N-particle systems.

Schemes, per dynamics kind:

* overdamped   -- Euler-Maruyama,
* underdamped  -- palindromic splitting (kick / drift / exact friction-noise
  relaxation of p / drift / kick),
* generalized  -- palindromic splitting where the auxiliary block uses the
  exact relaxation transition z -> e^{-A dt} z + N(0, (I - e^{-2 A dt})/beta)
  and the Hamiltonian/coupling parts are explicit updates (the p-z coupling
  is a precomputed linear rotation, so stiff A never constrains dt).

The Curie-Weiss force is computed in O(N) from the empirical mean: each step
first reduces m1 = mean(q), then updates all particles -- the one reduction
barrier that makes the mean-field coupling order-independent.  Randomness
comes from a counter-based Philox generator seeded per run, so identical
(model, N, seed, dt, T) reproduce observable series bitwise regardless of
how outer parameter scans are parallelized.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np

from . import matrixkit as mk
from .errors import InsufficientParticles, NonFiniteState, ShapeMismatch
from .model import Kind, ValidatedModel

DEFAULT_BASE_DT = 1e-3


# ---------------------------------------------------------------------------
# initial laws
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class InitPoint:
    """All particles at the same full-state point [q, p, z]."""

    x0: Sequence[float]


@dataclass(frozen=True)
class InitGaussian:
    """Full-state Gaussian with given mean vector and covariance matrix."""

    mean: Sequence[float]
    cov: Sequence[Sequence[float]] | np.ndarray


@dataclass(frozen=True)
class BlockLaw:
    """Per-block law: point mass at ``point`` or Gaussian(mean, var) i.i.d. per coord."""

    point: Optional[float] = None
    mean: float = 0.0
    var: float = 1.0


@dataclass(frozen=True)
class InitProduct:
    """Independent q / p / z blocks, each a :class:`BlockLaw`."""

    q: BlockLaw
    p: Optional[BlockLaw] = None
    z: Optional[BlockLaw] = None


InitialLaw = Union[InitPoint, InitGaussian, InitProduct]


# ---------------------------------------------------------------------------
# ensemble
# ---------------------------------------------------------------------------


@dataclass
class ParticleEnsemble:
    """N particle states in extended phase space with its own RNG and clock."""

    N: int
    q: np.ndarray
    p: Optional[np.ndarray]
    z: Optional[np.ndarray]
    time: float
    rng: np.random.Generator

    def state_matrix(self) -> np.ndarray:
        """(N, state_dim) array in [q, p, z] layout."""
        blocks = [self.q]
        if self.p is not None:
            blocks.append(self.p)
        if self.z is not None:
            blocks.append(self.z)
        return np.hstack(blocks)


def _make_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.SeedSequence):
        return np.random.Generator(np.random.Philox(seed))
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed))))


def init_ensemble(model: ValidatedModel, N: int, seed, init: InitialLaw) -> ParticleEnsemble:
    """Sample an i.i.d. initial ensemble, deterministically in ``seed``."""
    if N < 1:
        raise ShapeMismatch(f"N must be >= 1, got {N}")
    d = model.d
    dim = model.state_dim()
    has_p = model.kind is not Kind.OVERDAMPED
    dm = d * model.m if model.kind is Kind.GENERALIZED else 0
    rng = _make_rng(seed)

    if isinstance(init, InitPoint):
        x0 = np.atleast_1d(np.asarray(init.x0, dtype=float))
        if x0.shape != (dim,):
            raise ShapeMismatch(f"x0 must have length {dim}, got {x0.shape}")
        X = np.tile(x0, (N, 1))
    elif isinstance(init, InitGaussian):
        mean = np.atleast_1d(np.asarray(init.mean, dtype=float))
        cov = np.atleast_2d(np.asarray(init.cov, dtype=float))
        if mean.shape != (dim,) or cov.shape != (dim, dim):
            raise ShapeMismatch(f"Gaussian init must have dimension {dim}")
        L = mk.psd_sqrt(cov)
        X = mean + rng.standard_normal((N, dim)) @ L.T
    elif isinstance(init, InitProduct):
        cols = [_sample_block(init.q, N, d, rng)]
        if has_p:
            if init.p is None:
                raise ShapeMismatch("product init needs a p block for kinetic kinds")
            cols.append(_sample_block(init.p, N, d, rng))
        if dm:
            if init.z is None:
                raise ShapeMismatch("product init needs a z block for the generalized kind")
            cols.append(_sample_block(init.z, N, dm, rng))
        X = np.hstack(cols)
    else:
        raise ShapeMismatch(f"unknown initial law {type(init).__name__}")

    q = X[:, :d].copy()
    p = X[:, d : 2 * d].copy() if has_p else None
    z = X[:, 2 * d :].copy() if dm else None
    return ParticleEnsemble(N=N, q=q, p=p, z=z, time=0.0, rng=rng)


def _sample_block(law: BlockLaw, N: int, width: int, rng: np.random.Generator) -> np.ndarray:
    if law.point is not None:
        return np.full((N, width), float(law.point))
    return law.mean + math.sqrt(law.var) * rng.standard_normal((N, width))


# ---------------------------------------------------------------------------
# steppers
# ---------------------------------------------------------------------------


class _Stepper:
    """Precomputed transition maps for one (model, dt) pair."""

    def __init__(self, model: ValidatedModel, dt: float):
        if not dt > 0:
            raise ShapeMismatch(f"dt must be positive, got {dt}")
        self.model = model
        self.dt = dt
        self.kind = model.kind
        self.eta2 = model.eta2
        bi = model.beta_inv
        d = model.d
        if self.kind is Kind.OVERDAMPED:
            self.noise_std = math.sqrt(2.0 * bi * dt)
        elif self.kind is Kind.UNDERDAMPED:
            g = model.gamma
            self.ou_decay = math.exp(-g * dt)
            self.noise_std = math.sqrt(bi * (1.0 - self.ou_decay**2))
        else:
            mem = model.memory
            dm = d * mem.m
            lam = np.asarray(mem.lam, dtype=float)
            A = np.asarray(mem.A, dtype=float)
            S = np.zeros((d + dm, d + dm))
            S[:d, d:] = lam.T
            S[d:, :d] = -lam
            self.rot_half = mk.expm(0.5 * dt * S)
            self.z_decay = mk.expm(-dt * A)
            cov = bi * (np.eye(dm) - mk.expm(-2.0 * dt * A))
            self.z_noise_chol = mk.psd_sqrt(0.5 * (cov + cov.T))
            self.d = d
            self.dm = dm

    def force(self, q: np.ndarray, m1: np.ndarray) -> np.ndarray:
        # confining force plus O(N) Curie-Weiss mean-field force
        return -self.model.grad_potential(q) - self.eta2 * (q - m1)

    def step(self, ens: ParticleEnsemble) -> ParticleEnsemble:
        dt = self.dt
        if self.kind is Kind.OVERDAMPED:
            m1 = ens.q.mean(axis=0)
            xi = ens.rng.standard_normal(ens.q.shape)
            ens.q += self.force(ens.q, m1) * dt + self.noise_std * xi
        elif self.kind is Kind.UNDERDAMPED:
            m1 = ens.q.mean(axis=0)
            ens.p += 0.5 * dt * self.force(ens.q, m1)
            ens.q += 0.5 * dt * ens.p
            xi = ens.rng.standard_normal(ens.p.shape)
            ens.p *= self.ou_decay
            ens.p += self.noise_std * xi
            ens.q += 0.5 * dt * ens.p
            m1 = ens.q.mean(axis=0)
            ens.p += 0.5 * dt * self.force(ens.q, m1)
        else:
            m1 = ens.q.mean(axis=0)
            ens.p += 0.5 * dt * self.force(ens.q, m1)
            ens.q += 0.5 * dt * ens.p
            pz = np.hstack([ens.p, ens.z]) @ self.rot_half.T
            z = pz[:, self.d :] @ self.z_decay.T
            z += ens.rng.standard_normal((ens.N, self.dm)) @ self.z_noise_chol.T
            pz[:, self.d :] = z
            pz = pz @ self.rot_half.T
            ens.p = pz[:, : self.d]
            ens.z = pz[:, self.d :]
            ens.q += 0.5 * dt * ens.p
            m1 = ens.q.mean(axis=0)
            ens.p += 0.5 * dt * self.force(ens.q, m1)
        ens.time += dt
        if not np.isfinite(np.sum(ens.q)):
            raise NonFiniteState(f"state became non-finite at t={ens.time}")
        return ens


_stepper_cache: dict[tuple[int, float], _Stepper] = {}


def make_stepper(model: ValidatedModel, dt: float) -> _Stepper:
    key = (model.serial, float(dt))
    st = _stepper_cache.get(key)
    if st is None:
        st = _Stepper(model, dt)
        _stepper_cache[key] = st
    return st


def step(ens: ParticleEnsemble, model: ValidatedModel, dt: float) -> ParticleEnsemble:
    """Advance the ensemble by one integrator step of size dt (in place)."""
    return make_stepper(model, dt).step(ens)


def default_dt(model: ValidatedModel, base: float = DEFAULT_BASE_DT) -> float:
    """Step-size policy: base scaled down when the memory relaxation is fast."""
    if model.kind is Kind.GENERALIZED:
        a_norm = float(np.max(model.A_eigvals))
        return base * min(1.0, 1.0 / a_norm)
    return base


# ---------------------------------------------------------------------------
# observables
# ---------------------------------------------------------------------------


@dataclass
class ObservableSeries:
    """Low-order empirical moments recorded along a run.

    All per-coordinate quantities are arrays over record times; standard
    errors are sample standard deviations over sqrt(N).
    """

    times: np.ndarray
    mean_q: np.ndarray
    var_q: np.ndarray
    se_mean_q: np.ndarray
    magnetization: np.ndarray
    mean_p: Optional[np.ndarray] = None
    var_p: Optional[np.ndarray] = None
    cov_qp: Optional[np.ndarray] = None
    se_mean_p: Optional[np.ndarray] = None
    mean_z: Optional[np.ndarray] = None
    var_z: Optional[np.ndarray] = None
    se_mean_z: Optional[np.ndarray] = None

    def n_records(self) -> int:
        return len(self.times)


def _record(ens: ParticleEnsemble) -> dict:
    N = ens.N
    ddof = 1 if N > 1 else 0
    rec = {
        "t": ens.time,
        "mean_q": ens.q.mean(axis=0),
        "var_q": ens.q.var(axis=0, ddof=ddof),
        "magnetization": ens.q.mean(axis=0),
    }
    rec["se_mean_q"] = np.sqrt(rec["var_q"] / N)
    if ens.p is not None:
        rec["mean_p"] = ens.p.mean(axis=0)
        rec["var_p"] = ens.p.var(axis=0, ddof=ddof)
        rec["se_mean_p"] = np.sqrt(rec["var_p"] / N)
        qc = ens.q - rec["mean_q"]
        pc = ens.p - rec["mean_p"]
        rec["cov_qp"] = (qc * pc).sum(axis=0) / max(N - 1, 1)
    if ens.z is not None:
        rec["mean_z"] = ens.z.mean(axis=0)
        rec["var_z"] = ens.z.var(axis=0, ddof=ddof)
        rec["se_mean_z"] = np.sqrt(rec["var_z"] / N)
    return rec


def simulate(
    model: ValidatedModel,
    N: int,
    T: float,
    dt: float,
    seed,
    init: InitialLaw,
    record_every: int = 1,
) -> ObservableSeries:
    """Run the integrator to time T, recording observables every ``record_every`` steps.

    The number of steps is round(T/dt), so the final time is within dt of T;
    the final state is always recorded.  Raises :class:`NonFiniteState` with
    the failing time on blow-up.
    """
    if not T > 0:
        raise ShapeMismatch(f"T must be positive, got {T}")
    if dt > T:
        raise ShapeMismatch(f"dt={dt} exceeds T={T}")
    record_every = max(1, int(record_every))
    ens = init_ensemble(model, N, seed, init)
    stepper = make_stepper(model, dt)
    n_steps = int(round(T / dt))
    records = [_record(ens)]
    for k in range(1, n_steps + 1):
        stepper.step(ens)
        if k % record_every == 0 or k == n_steps:
            records.append(_record(ens))
    return _series_from_records(records)


def _series_from_records(records: list[dict]) -> ObservableSeries:
    def col(key):
        if key not in records[0]:
            return None
        return np.asarray([r[key] for r in records])

    return ObservableSeries(
        times=np.asarray([r["t"] for r in records]),
        mean_q=col("mean_q"),
        var_q=col("var_q"),
        se_mean_q=col("se_mean_q"),
        magnetization=col("magnetization"),
        mean_p=col("mean_p"),
        var_p=col("var_p"),
        cov_qp=col("cov_qp"),
        se_mean_p=col("se_mean_p"),
        mean_z=col("mean_z"),
        var_z=col("var_z"),
        se_mean_z=col("se_mean_z"),
    )


def empirical_moments(ens: ParticleEnsemble):
    """Full-state sample mean, covariance (N-1 normalization), and mean SEs."""
    if ens.N < 2:
        raise InsufficientParticles(f"need N >= 2 for sample covariance, got N={ens.N}")
    X = ens.state_matrix()
    mean = X.mean(axis=0)
    cov = np.cov(X.T, ddof=1).reshape(X.shape[1], X.shape[1])
    se = np.sqrt(np.diag(cov) / ens.N)
    return mean, cov, se


def covariance_se(cov: np.ndarray, N: int) -> np.ndarray:
    """Asymptotic standard error of each sample-covariance entry (Gaussian data)."""
    dia = np.diag(cov)
    return np.sqrt((np.outer(dia, dia) + cov**2) / max(N - 1, 1))
