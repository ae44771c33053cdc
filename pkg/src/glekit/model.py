"""Model specification shared by every other module.

A model is a confining potential, an optional Curie-Weiss interaction, an
inverse temperature, and one of three dynamics kinds:

* ``overdamped``   -- dq = -grad V dt - grad U * rho dt + sqrt(2/beta) dW
* ``underdamped``  -- kinetic (q, p) dynamics with friction gamma
* ``generalized``  -- kinetic dynamics with dm auxiliary variables z carrying
  the memory, coupled through a matrix ``lam`` (shape dm x d) and relaxed by a
  symmetric positive definite matrix ``A`` (shape dm x dm):

      dq = p dt
      dp = -grad V dt - grad U * rho dt + lam^T z dt
      dz = -lam p dt - A z dt + sqrt(2 A / beta) dW

State layout everywhere in the package is ``[q (d), p (d), z (dm)]``.

``validate`` turns a :class:`ModelSpec` into an immutable
:class:`ValidatedModel` with derived quantities cached; validated models are
safe to share across worker threads.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import MissingField, NonSPDMatrix, ShapeMismatch, UnsupportedPotential

SYMMETRY_TOL = 1e-12

_serial_counter = itertools.count(1)


class Kind(str, Enum):
    """Dynamics kind."""

    OVERDAMPED = "overdamped"
    UNDERDAMPED = "underdamped"
    GENERALIZED = "generalized"


# ---------------------------------------------------------------------------
# potentials
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Quadratic:
    """Harmonic confinement V(q) = omega2 |q|^2 / 2, omega2 > 0."""

    omega2: float

    def energy(self, q):
        q = np.asarray(q, dtype=float)
        return 0.5 * self.omega2 * np.sum(q * q, axis=-1)

    def gradient(self, q):
        q = np.asarray(q, dtype=float)
        return self.omega2 * q


@dataclass(frozen=True)
class DoubleWell:
    """Nonconvex confinement V(q) = a |q|^4 / 4 - b |q|^2 / 2, a > 0.

    Grows like |q|^4 at infinity, so the toolkit's stationary analysis
    (which needs at-least-quartic growth minus a quadratic) applies.
    """

    a: float
    b: float

    def energy(self, q):
        q = np.asarray(q, dtype=float)
        r2 = np.sum(q * q, axis=-1)
        return 0.25 * self.a * r2 * r2 - 0.5 * self.b * r2

    def gradient(self, q):
        q = np.asarray(q, dtype=float)
        r2 = np.sum(q * q, axis=-1, keepdims=True)
        return (self.a * r2 - self.b) * q


@dataclass(frozen=True)
class CustomPotential:
    """User-supplied confinement; ``energy`` and ``gradient`` are callables.

    Both must be vectorized over points: ``energy`` maps (..., d) arrays to
    (...) values and ``gradient`` maps (..., d) to (..., d).  ``gradient``
    must agree with central finite differences of ``energy``; ``validate``
    spot-checks this on random probes.  Custom potentials enter the particle
    integrators and the quadrature-based stationary solver; the closed-form
    spectral/Gaussian analytics stay quadratic-only.
    """

    energy: Callable
    gradient: Callable


Potential = Quadratic | DoubleWell | CustomPotential


# ---------------------------------------------------------------------------
# interaction
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CurieWeiss:
    """Quadratic pair interaction U(xi) = eta2 |xi|^2 / 2, eta2 >= 0.

    Its mean-field force on a particle depends only on the empirical mean,
    which is what makes the stationary problem scalar.
    """

    eta2: float


@dataclass(frozen=True)
class NoInteraction:
    """Free particles.  Behaves identically to CurieWeiss(0)."""

    @property
    def eta2(self) -> float:
        return 0.0


Interaction = CurieWeiss | NoInteraction


# ---------------------------------------------------------------------------
# memory
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MemorySpec:
    """Auxiliary-variable memory: coupling ``lam`` (dm x d) and SPD ``A`` (dm x dm).

    ``diagonal`` builds the common block form with scalar couplings
    lambda_j and relaxation rates alpha_j, j = 1..m, for which the spectrum
    of the full drift reduces to scalar polynomial equations.
    """

    m: int
    lam: np.ndarray
    A: np.ndarray
    diag: Optional[tuple[tuple[float, ...], tuple[float, ...]]] = None

    @staticmethod
    def diagonal(lambdas: Sequence[float], alphas: Sequence[float], d: int = 1) -> "MemorySpec":
        lambdas = tuple(float(x) for x in lambdas)
        alphas = tuple(float(x) for x in alphas)
        if len(lambdas) != len(alphas):
            raise ShapeMismatch(
                f"need one alpha per lambda, got {len(lambdas)} lambdas, {len(alphas)} alphas"
            )
        m = len(lambdas)
        eye = np.eye(d)
        lam = np.vstack([lj * eye for lj in lambdas])
        A = np.kron(np.diag(alphas), eye)
        return MemorySpec(m=m, lam=lam, A=A, diag=(lambdas, alphas))

    def diagonal_rates(self) -> tuple[tuple[float, ...], tuple[float, ...]]:
        """Scalar (lambda_j, alpha_j) if the memory has block-diagonal form."""
        if self.diag is not None:
            return self.diag
        raise UnsupportedPotential(
            "memory is not in diagonal (lambda_j, alpha_j) form; "
            "closed-form spectra need the diagonal constructor"
        )


# ---------------------------------------------------------------------------
# model spec and validation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ModelSpec:
    """Single source of truth for the dynamics.

    ``beta`` is the inverse temperature (``math.inf`` switches the noise
    off, which some deterministic tests use).  ``gamma`` is only read by the
    underdamped kind, ``memory`` only by the generalized kind.
    """

    d: int
    beta: float
    potential: Potential
    interaction: Interaction = field(default_factory=NoInteraction)
    memory: Optional[MemorySpec] = None
    gamma: Optional[float] = None
    kind: Kind = Kind.GENERALIZED


@dataclass(frozen=True)
class ValidatedModel:
    """A checked :class:`ModelSpec` with derived quantities cached.

    Immutable after construction; safe to share across threads.
    """

    spec: ModelSpec
    serial: int
    A_eigvals: Optional[np.ndarray]
    A_eigvecs: Optional[np.ndarray]

    # -- pass-through accessors ------------------------------------------------

    @property
    def d(self) -> int:
        return self.spec.d

    @property
    def beta(self) -> float:
        return self.spec.beta

    @property
    def beta_inv(self) -> float:
        return 0.0 if math.isinf(self.spec.beta) else 1.0 / self.spec.beta

    @property
    def kind(self) -> Kind:
        return self.spec.kind

    @property
    def potential(self) -> Potential:
        return self.spec.potential

    @property
    def interaction(self) -> Interaction:
        return self.spec.interaction

    @property
    def eta2(self) -> float:
        return self.spec.interaction.eta2

    @property
    def gamma(self) -> float:
        if self.spec.gamma is None:
            raise MissingField("gamma not set")
        return self.spec.gamma

    @property
    def memory(self) -> MemorySpec:
        if self.spec.memory is None:
            raise MissingField("memory not set")
        return self.spec.memory

    @property
    def m(self) -> int:
        return self.memory.m

    @property
    def omega2(self) -> float:
        if not isinstance(self.spec.potential, Quadratic):
            raise UnsupportedPotential("closed-form analytics need a quadratic potential")
        return self.spec.potential.omega2

    def state_dim(self) -> int:
        """Total phase-space dimension per particle for this kind."""
        d = self.spec.d
        if self.spec.kind is Kind.OVERDAMPED:
            return d
        if self.spec.kind is Kind.UNDERDAMPED:
            return 2 * d
        return 2 * d + d * self.memory.m

    def grad_potential(self, q):
        return self.spec.potential.gradient(q)

    def potential_energy(self, q):
        return self.spec.potential.energy(q)


def _check_potential(potential: Potential) -> None:
    if isinstance(potential, Quadratic):
        if not potential.omega2 > 0:
            raise NonSPDMatrix(f"quadratic potential needs omega2 > 0, got {potential.omega2}")
    elif isinstance(potential, DoubleWell):
        if not potential.a > 0:
            raise NonSPDMatrix(f"double well needs a > 0, got a={potential.a}")
    elif isinstance(potential, CustomPotential):
        _probe_gradient(potential)
    else:
        raise ShapeMismatch(f"unknown potential type {type(potential).__name__}")


def _probe_gradient(potential: CustomPotential, n_probe: int = 8, step: float = 1e-5) -> None:
    # spot-check that the supplied gradient matches finite differences of the energy
    rng = np.random.default_rng(0)
    for _ in range(n_probe):
        q = float(rng.uniform(-2.0, 2.0))
        g = float(np.asarray(potential.gradient(np.array([q]))).reshape(-1)[0])
        fd = (potential.energy(np.array([q + step])) - potential.energy(np.array([q - step]))) / (
            2 * step
        )
        scale = max(1.0, abs(g), abs(float(fd)))
        if abs(g - float(fd)) > 1e-4 * scale:
            raise ShapeMismatch(
                f"custom potential gradient disagrees with finite differences at q={q}: "
                f"{g} vs {float(fd)}"
            )


def validate(spec: ModelSpec) -> ValidatedModel:
    """Check a :class:`ModelSpec` and cache derived quantities.

    Raises
    ------
    NonSPDMatrix
        ``A`` is not symmetric positive definite (or a potential coefficient
        has the wrong sign).
    ShapeMismatch
        ``lam`` / ``A`` shapes inconsistent with (d, m).
    MissingField
        Generalized kind without memory, underdamped without gamma.
    """
    if not spec.beta > 0:
        raise MissingField(f"beta must be positive, got {spec.beta}")
    if spec.d < 1:
        raise ShapeMismatch(f"spatial dimension must be >= 1, got {spec.d}")
    _check_potential(spec.potential)
    if spec.interaction.eta2 < 0:
        raise NonSPDMatrix(f"interaction needs eta2 >= 0, got {spec.interaction.eta2}")

    if spec.kind is Kind.UNDERDAMPED:
        if spec.gamma is None:
            raise MissingField("underdamped kind requires gamma")
        if not spec.gamma > 0:
            raise NonSPDMatrix(f"friction gamma must be positive, got {spec.gamma}")

    A_eigvals = A_eigvecs = None
    if spec.kind is Kind.GENERALIZED:
        if spec.memory is None:
            raise MissingField("generalized kind requires a memory spec")
        mem = spec.memory
        dm = spec.d * mem.m
        lam = np.asarray(mem.lam, dtype=float)
        A = np.asarray(mem.A, dtype=float)
        if lam.shape != (dm, spec.d):
            raise ShapeMismatch(f"lam must have shape {(dm, spec.d)}, got {lam.shape}")
        if A.shape != (dm, dm):
            raise ShapeMismatch(f"A must have shape {(dm, dm)}, got {A.shape}")
        if not np.all(np.isfinite(lam)) or not np.all(np.isfinite(A)):
            raise ShapeMismatch("memory matrices contain non-finite entries")
        if np.max(np.abs(A - A.T)) > SYMMETRY_TOL * max(1.0, np.max(np.abs(A))):
            raise NonSPDMatrix("A is not symmetric")
        A_eigvals, A_eigvecs = np.linalg.eigh(A)
        if A_eigvals[0] <= 0:
            raise NonSPDMatrix(f"A must be positive definite, min eigenvalue {A_eigvals[0]}")

    return ValidatedModel(
        spec=spec,
        serial=next(_serial_counter),
        A_eigvals=A_eigvals,
        A_eigvecs=A_eigvecs,
    )


def eval_potential(model: ValidatedModel | ModelSpec, q) -> tuple[float, np.ndarray]:
    """Evaluate (V(q), grad V(q)) for the configured confining potential."""
    potential = model.potential if isinstance(model, ValidatedModel) else model.potential
    q = np.atleast_1d(np.asarray(q, dtype=float))
    return float(potential.energy(q)), np.asarray(potential.gradient(q), dtype=float)
