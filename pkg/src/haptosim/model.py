"""Model constants, initial data, the exact parameter rescaling, and the
exponentially weighted diagnostic field.

The simulated system couples three fields on a box domain with zero-flux
boundaries: cell density u (diffusion 1/alpha, haptotactic drift of strength
chi up the gradient of the matrix density, logistic growth mu), matrix
density c (degraded at rate p, no transport of its own), and protease p
(produced where cells meet matrix and decaying, both on time scale epsilon).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from .mesh import FeField, StructuredMesh, interpolate


class ParameterError(ValueError):
    """A model or scheme constant violates its admissible range."""


class MeshMismatchError(ValueError):
    """Fields that must share a mesh do not."""


class NonnegativityWarning(UserWarning):
    """Initial data is negative somewhere; the run proceeds regardless."""


@dataclass(frozen=True)
class Parameters:
    """All model and scheme constants for one run."""

    alpha: float = 10.0          # inverse diffusion: 1/alpha multiplies the Laplacian
    chi: float = 0.01            # haptotactic coefficient, >= 0
    mu: float = 0.5              # logistic proliferation rate, > 0
    epsilon: float = 0.2         # protease reaction time scale, > 0
    theta: float = 0.5           # time-scheme blend, 0 explicit .. 1 implicit
    dt: float = 1.0
    t_final: float = 50.0
    beta: float = 0.5            # fixed-point relaxation, in (0, 1]
    tol_fp: float = 1e-8         # fixed-point stopping tolerance (l2 increments)
    max_fp_iters: int = 100
    tol_lin: float = 1e-12       # linear-solve relative residual tolerance
    blowup_threshold: float = 1e6  # breakdown cutoff on any field's max magnitude

    def __post_init__(self):
        positive = (
            ("alpha", self.alpha),
            ("mu", self.mu),
            ("epsilon", self.epsilon),
            ("dt", self.dt),
            ("tol_fp", self.tol_fp),
            ("tol_lin", self.tol_lin),
            ("blowup_threshold", self.blowup_threshold),
        )
        for name, value in positive:
            if not (value > 0.0) or not math.isfinite(value):
                raise ParameterError(f"{name} must be positive and finite, got {value}")
        # t_final = 0 is allowed: a zero-step run emits the initial data
        if not (self.t_final >= 0.0) or not math.isfinite(self.t_final):
            raise ParameterError(
                f"t_final must be >= 0 and finite, got {self.t_final}"
            )
        if not (self.chi >= 0.0) or not math.isfinite(self.chi):
            raise ParameterError(f"chi must be >= 0, got {self.chi}")
        if not 0.0 <= self.theta <= 1.0:
            raise ParameterError(f"theta must lie in [0, 1], got {self.theta}")
        if not 0.0 < self.beta <= 1.0:
            raise ParameterError(f"beta must lie in (0, 1], got {self.beta}")
        if int(self.max_fp_iters) < 1:
            raise ParameterError(
                f"max_fp_iters must be a positive integer, got {self.max_fp_iters}"
            )


@dataclass(frozen=True)
class InitialData:
    """Pointwise initial profiles for the three fields."""

    name: str
    u0: Callable
    c0: Callable
    p0: Callable


def corner_gaussian_initial_data() -> InitialData:
    """Gaussian cluster of cells seeded at the corner origin.

    u0 = exp(-|x|^2),  c0 = 1 - 0.5 exp(-|x|^2),  p0 = 0.5 exp(-|x|^2):
    the matrix is intact away from the seed and half degraded underneath it,
    with protease proportional to the cell density.
    """
    def u0(x):
        return math.exp(-float(np.dot(x, x)))

    def c0(x):
        return 1.0 - 0.5 * math.exp(-float(np.dot(x, x)))

    def p0(x):
        return 0.5 * math.exp(-float(np.dot(x, x)))

    return InitialData("corner-gaussian", u0, c0, p0)


INITIAL_FAMILIES = {
    "corner-gaussian": corner_gaussian_initial_data,
    "paper-gaussian": corner_gaussian_initial_data,
}


def initial_data_family(name: str) -> InitialData:
    if name not in INITIAL_FAMILIES:
        known = ", ".join(sorted(INITIAL_FAMILIES))
        raise ParameterError(f"unknown initial-data family {name!r} (known: {known})")
    return INITIAL_FAMILIES[name]()


@dataclass
class SimState:
    """The (u, c, p) triple at one time level, on a shared mesh."""

    t: float
    u: FeField
    c: FeField
    p: FeField

    def __post_init__(self):
        if self.u.mesh is not self.c.mesh or self.u.mesh is not self.p.mesh:
            raise MeshMismatchError("u, c, p must live on one mesh")
        if self.t < 0.0:
            raise ValueError(f"time must be >= 0, got {self.t}")

    @property
    def mesh(self) -> StructuredMesh:
        return self.u.mesh

    def copy(self) -> "SimState":
        return SimState(self.t, self.u.copy(), self.c.copy(), self.p.copy())


def interpolate_initial_state(initial: InitialData, mesh: StructuredMesh) -> SimState:
    """Nodal interpolation of the initial profiles, with a nonnegativity check.

    Negative nodal values only raise :class:`NonnegativityWarning`: runs with
    out-of-theory data stay permitted.
    """
    fields = {}
    for name, f in (("u", initial.u0), ("c", initial.c0), ("p", initial.p0)):
        fields[name] = interpolate(f, mesh)
        worst = float(fields[name].coeffs.min())
        if worst < 0.0:
            warnings.warn(
                f"initial {name} is negative (min {worst:.3e}); "
                "nonnegative data is assumed by the underlying theory",
                NonnegativityWarning,
                stacklevel=2,
            )
    return SimState(0.0, fields["u"], fields["c"], fields["p"])


@dataclass(frozen=True)
class RescaledProblem:
    """An equivalent problem with unit haptotactic rate and unit time scale.

    Positions map as  x_new = x / sqrt(chi),  times as  t_new = t / epsilon,
    and the matrix/protease amplitudes carry a factor epsilon.  The original
    (chi, epsilon) pair is retained so the map can be inverted exactly.
    """

    params: Parameters
    extents: tuple[tuple[float, float], ...]
    initial: InitialData
    source_chi: float
    source_epsilon: float

    @property
    def space_factor(self) -> float:
        """Multiply original coordinates by this to get rescaled coordinates."""
        return 1.0 / math.sqrt(self.source_chi)

    @property
    def time_factor(self) -> float:
        """Multiply original times by this to get rescaled times."""
        return 1.0 / self.source_epsilon

    @property
    def amplitude_factor(self) -> float:
        """c and p pick up this factor in the rescaled problem."""
        return self.source_epsilon

    def invert(self):
        """Recover the original (params, extents, initial data)."""
        chi, eps = self.source_chi, self.source_epsilon
        params = replace(
            self.params,
            alpha=self.params.alpha * eps / chi,
            chi=chi,
            mu=self.params.mu / eps,
            epsilon=eps,
            dt=self.params.dt * eps,
            t_final=self.params.t_final * eps,
        )
        root = math.sqrt(chi)
        extents = tuple((lo * root, hi * root) for lo, hi in self.extents)
        tu, tc, tp = self.initial.u0, self.initial.c0, self.initial.p0
        initial = InitialData(
            self.initial.name,
            lambda x: tu(np.asarray(x, dtype=float) / root),
            lambda x: tc(np.asarray(x, dtype=float) / root) / eps,
            lambda x: tp(np.asarray(x, dtype=float) / root) / eps,
        )
        return params, extents, initial


def rescale_to_unit_chi_eps(params: Parameters, extents, initial: InitialData):
    """Map a problem with arbitrary chi > 0, epsilon > 0 to an exactly
    equivalent one with chi = epsilon = 1.

    The transformed diffusion and growth rates are alpha*chi/epsilon and
    epsilon*mu; the domain shrinks by 1/sqrt(chi); the time step and final
    time divide by epsilon; and the initial matrix/protease profiles are
    scaled by epsilon and read at the stretched coordinates.
    """
    if params.chi <= 0.0:
        raise ParameterError("rescaling is undefined for chi = 0")
    chi, eps = params.chi, params.epsilon
    new_params = replace(
        params,
        alpha=params.alpha * chi / eps,
        chi=1.0,
        mu=eps * params.mu,
        epsilon=1.0,
        dt=params.dt / eps,
        t_final=params.t_final / eps,
    )
    root = math.sqrt(chi)
    new_extents = tuple((lo / root, hi / root) for lo, hi in extents)
    u0, c0, p0 = initial.u0, initial.c0, initial.p0
    new_initial = InitialData(
        initial.name,
        lambda x: u0(root * np.asarray(x, dtype=float)),
        lambda x: eps * c0(root * np.asarray(x, dtype=float)),
        lambda x: eps * p0(root * np.asarray(x, dtype=float)),
    )
    return RescaledProblem(new_params, new_extents, new_initial, chi, eps)


def w_diagnostic(u: FeField, c: FeField, alpha: float) -> FeField:
    """Nodal diagnostic field  w_i = u_i * exp(-alpha * c_i).

    Damps the cell density by the local matrix level; monotone decreasing in
    c wherever u > 0.
    """
    if u.mesh is not c.mesh:
        raise MeshMismatchError("u and c must share a mesh")
    return FeField(u.mesh, u.coeffs * np.exp(-alpha * c.coeffs))
