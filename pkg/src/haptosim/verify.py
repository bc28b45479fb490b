"""Independent oracles and study harnesses.

Four checks certify the solver from the outside:

* a classical fourth-order one-step integrator for the spatially constant
  reduction of the system (the reaction ODEs), used as the reference for
  temporal-order measurements;
* a temporal-order study fitting the error-vs-step-size slope;
* an exact-equivalence check of the parameter rescaling on the fully
  discrete level;
* an element-integral cross-check against an independently coded high-order
  quadrature.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from . import fem
from .iocfg import RunConfig
from .mesh import build_structured_mesh
from .model import (
    InitialData,
    Parameters,
    interpolate_initial_state,
    rescale_to_unit_chi_eps,
)
from .stepper import simulate


class OracleError(RuntimeError):
    """The reference integrator produced a non-finite state."""


class StudyError(RuntimeError):
    """A study harness received degenerate input or a run failed."""


@dataclass(frozen=True)
class OdeTrajectory:
    """Reference trajectory of the spatially constant reduction."""

    times: np.ndarray
    states: np.ndarray  # (n_times, 3) columns u, c, p
    substeps: int

    @property
    def endpoint(self) -> np.ndarray:
        return self.states[-1]


def _reaction_rhs(y, params: Parameters) -> np.ndarray:
    u, c, p = y
    return np.array(
        [
            params.mu * u * (1.0 - u),
            -p * c,
            (u * c - p) / params.epsilon,
        ]
    )


def ode_oracle(params: Parameters, y0, t_end, substeps) -> OdeTrajectory:
    """Integrate the constant-in-space reduction with classical RK4.

    For spatially constant states the diffusion and drift terms vanish and
    the system reduces to three coupled scalar ODEs.
    """
    substeps = int(substeps)
    if substeps < 1:
        raise StudyError(f"substeps must be >= 1, got {substeps}")
    h = t_end / substeps
    y = np.asarray(y0, dtype=float)
    if y.shape != (3,):
        raise StudyError(f"initial state must be (u, c, p), got shape {y.shape}")
    times = np.empty(substeps + 1)
    states = np.empty((substeps + 1, 3))
    times[0] = 0.0
    states[0] = y
    with np.errstate(over="ignore", invalid="ignore"):
        for n in range(substeps):
            k1 = _reaction_rhs(y, params)
            k2 = _reaction_rhs(y + 0.5 * h * k1, params)
            k3 = _reaction_rhs(y + 0.5 * h * k2, params)
            k4 = _reaction_rhs(y + h * k3, params)
            y = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            if not np.isfinite(y).all():
                raise OracleError(f"non-finite reference state at t = {(n + 1) * h}")
            times[n + 1] = (n + 1) * h
            states[n + 1] = y
    return OdeTrajectory(times, states, substeps)


def constant_initial_data(u0: float, c0: float, p0: float) -> InitialData:
    return InitialData(
        "constant", lambda x: u0, lambda x: c0, lambda x: p0
    )


@dataclass(frozen=True)
class OrderStudy:
    """Endpoint errors against the reference integrator per step size."""

    theta: float
    dts: tuple[float, ...]
    errors: tuple[float, ...]
    estimated_order: float


def temporal_order_study(
    theta, dts, y0=(0.5, 1.0, 0.25), t_end=1.0,
    mu=0.5, epsilon=0.2, oracle_substeps=4000,
) -> OrderStudy:
    """Measure the temporal order on spatially constant data.

    Runs the full scheme on a single-element mesh (where it reduces to the
    nodal reaction ODEs), compares endpoints against the reference
    integrator, and fits the log-log slope by least squares.
    """
    dts = tuple(float(dt) for dt in dts)
    if len(dts) < 2 or len(set(dts)) != len(dts):
        raise StudyError(f"need at least two distinct step sizes, got {dts}")
    for dt in dts:
        ratio = t_end / dt
        if abs(ratio - round(ratio)) > 1e-9 * max(1.0, abs(ratio)):
            raise StudyError(f"t_end = {t_end} is not a whole number of steps of {dt}")

    mesh = build_structured_mesh(2, ((0.0, 1.0), (0.0, 1.0)), (1, 1), 0)
    initial = constant_initial_data(*y0)
    reference = ode_oracle(
        Parameters(mu=mu, epsilon=epsilon, chi=0.0), y0, t_end, oracle_substeps
    ).endpoint

    errors = []
    for dt in dts:
        # beta = 1: the committed limit is relaxation-independent and the
        # unrelaxed sweep converges fastest on constant data
        params = Parameters(
            chi=0.0, mu=mu, epsilon=epsilon, theta=theta, dt=dt, t_final=t_end,
            tol_fp=1e-12, max_fp_iters=500, beta=1.0,
        )
        state0 = interpolate_initial_state(initial, mesh)
        try:
            result = simulate(state0, params)
        except Exception as exc:
            raise StudyError(f"run with dt = {dt} failed: {exc}") from exc
        endpoint = np.array(
            [
                result.state.u.coeffs[0],
                result.state.c.coeffs[0],
                result.state.p.coeffs[0],
            ]
        )
        errors.append(float(np.max(np.abs(endpoint - reference))))

    log_dt = np.log(np.asarray(dts))
    log_err = np.log(np.asarray(errors))
    slope = float(np.polyfit(log_dt, log_err, 1)[0])
    return OrderStudy(theta, dts, tuple(errors), slope)


def write_order_study_csv(study: OrderStudy, path) -> None:
    """Emit an order study as CSV with columns dt, error, estimated_order.

    The order column holds the pairwise estimate between consecutive step
    sizes (blank for the first row).
    """
    with open(path, "w", encoding="ascii") as fh:
        fh.write("dt,error,estimated_order\n")
        for k, (dt, err) in enumerate(zip(study.dts, study.errors)):
            if k == 0:
                order = ""
            else:
                order = repr(
                    float(
                        np.log(study.errors[k - 1] / err)
                        / np.log(study.dts[k - 1] / dt)
                    )
                )
            fh.write(f"{dt!r},{err!r},{order}\n")


@dataclass(frozen=True)
class ScalingCheck:
    """Largest nodal discrepancy between a run and its rescaled twin."""

    max_difference: float
    per_time: tuple[tuple[float, float], ...]  # (snapshot time, max diff)


def scaling_equivalence(config: RunConfig) -> ScalingCheck:
    """Run a problem and its unit-chi/unit-epsilon transform; compare nodally.

    The two grids are index-aligned (same topology, coordinates shrunk by
    1/sqrt(chi)), the transformed run uses time step dt/epsilon, and the
    matrix/protease fields are mapped back by the factor 1/epsilon.  The
    fully discrete equations transform exactly, so the committed solutions
    agree up to fixed-point tolerances.
    """
    params = config.params
    initial = config.initial_data()

    mesh = config.build_mesh()
    result = simulate(
        interpolate_initial_state(initial, mesh), params,
        snapshot_times=config.snapshots,
    )
    if result.breakdown is not None:
        raise StudyError(f"original run broke down: {result.breakdown}")

    scaled = rescale_to_unit_chi_eps(params, config.extents, initial)
    mesh2 = build_structured_mesh(
        config.dim, scaled.extents, config.base_cells, config.refinements
    )
    if mesh2.n_nodes != mesh.n_nodes:
        raise StudyError("transformed grid topology does not match the original")
    snapshots2 = tuple(t * scaled.time_factor for t in config.snapshots)
    result2 = simulate(
        interpolate_initial_state(scaled.initial, mesh2), scaled.params,
        snapshot_times=snapshots2,
    )
    if result2.breakdown is not None:
        raise StudyError(f"transformed run broke down: {result2.breakdown}")

    if len(result.snapshots) != len(result2.snapshots):
        raise StudyError("snapshot counts differ between the two runs")
    back = 1.0 / scaled.amplitude_factor
    per_time = []
    for (t1, s1), (_, s2) in zip(result.snapshots, result2.snapshots):
        diff = max(
            float(np.max(np.abs(s1.u.coeffs - s2.u.coeffs))),
            float(np.max(np.abs(s1.c.coeffs - back * s2.c.coeffs))),
            float(np.max(np.abs(s1.p.coeffs - back * s2.p.coeffs))),
        )
        per_time.append((t1, diff))
    overall = max((d for _, d in per_time), default=0.0)
    return ScalingCheck(overall, tuple(per_time))


# --- element-integral cross-check ------------------------------------------

def _oracle_gauss_1d(n):
    return np.polynomial.legendre.leggauss(n)


def _oracle_basis(dim, point):
    """Independently coded Q1 basis values and gradients at one point."""
    corners = fem.reference_corners(dim)
    nl = corners.shape[0]
    vals = np.ones(nl)
    grads = np.ones((nl, dim))
    for l in range(nl):
        for d in range(dim):
            xi = point[d]
            f = xi if corners[l, d] == 1.0 else 1.0 - xi
            df = 1.0 if corners[l, d] == 1.0 else -1.0
            vals[l] *= f
            for g in range(dim):
                grads[l, g] *= df if g == d else f
    return vals, grads


def _oracle_integrate(dim, sizes, kernel, n_gauss=5):
    """Tensor Gauss integration of ``kernel(values, physical_grads)`` over an
    axis-aligned element, written as plain loops independent of the assembly
    path."""
    x1, w1 = _oracle_gauss_1d(n_gauss)
    x1 = 0.5 * (x1 + 1.0)
    w1 = 0.5 * w1
    total = None
    ranges = [range(n_gauss)] * dim
    for multi in itertools.product(*ranges):
        point = np.array([x1[i] for i in multi])
        weight = float(np.prod([w1[i] for i in multi])) * float(np.prod(sizes))
        vals, ref_grads = _oracle_basis(dim, point)
        phys_grads = ref_grads / np.asarray(sizes)[None, :]
        contribution = weight * kernel(vals, phys_grads)
        total = contribution if total is None else total + contribution
    return total


@dataclass(frozen=True)
class CrosscheckReport:
    """Largest deviations between element integrals and the oracle."""

    mass: float
    stiffness: float
    weighted_mass: float
    haptotaxis: float
    load: float

    @property
    def worst(self) -> float:
        return max(self.mass, self.stiffness, self.weighted_mass,
                   self.haptotaxis, self.load)


def element_matrix_crosscheck(n_random=50, seed=20260809) -> CrosscheckReport:
    """Compare every element integral against the independent 5-point rule
    on random axis-aligned elements with random coefficients, in 2D and 3D."""
    rng = np.random.default_rng(seed)
    dev = {"mass": 0.0, "stiffness": 0.0, "weighted_mass": 0.0,
           "haptotaxis": 0.0, "load": 0.0}

    for dim in (2, 3):
        nl = 2**dim
        cases = [np.ones(dim)] + [
            rng.uniform(0.1, 3.0, size=dim) for _ in range(n_random)
        ]
        for sizes in cases:
            w = rng.uniform(-2.0, 2.0, size=nl)
            c = rng.uniform(-2.0, 2.0, size=nl)
            a = rng.uniform(-2.0, 2.0, size=nl)
            b = rng.uniform(-2.0, 2.0, size=nl)

            ref = _oracle_integrate(dim, sizes, lambda v, g: np.outer(v, v))
            dev["mass"] = max(dev["mass"],
                              float(np.max(np.abs(fem.element_mass(sizes) - ref))))

            ref = _oracle_integrate(dim, sizes, lambda v, g: g @ g.T)
            dev["stiffness"] = max(
                dev["stiffness"],
                float(np.max(np.abs(fem.element_stiffness(sizes) - ref))),
            )

            ref = _oracle_integrate(
                dim, sizes, lambda v, g: float(v @ w) * np.outer(v, v)
            )
            dev["weighted_mass"] = max(
                dev["weighted_mass"],
                float(np.max(np.abs(fem.element_weighted_mass(sizes, w) - ref))),
            )

            def hap_kernel(v, g):
                grad_c = g.T @ c  # physical gradient of the interpolant
                return np.outer(g @ grad_c, v)  # row = test index

            ref = _oracle_integrate(dim, sizes, hap_kernel)
            dev["haptotaxis"] = max(
                dev["haptotaxis"],
                float(np.max(np.abs(fem.element_haptotaxis(sizes, c) - ref))),
            )

            ref = _oracle_integrate(
                dim, sizes, lambda v, g: float(v @ a) * float(v @ b) * v
            )
            dev["load"] = max(
                dev["load"],
                float(np.max(np.abs(fem.element_load_product(sizes, a, b) - ref))),
            )

    return CrosscheckReport(**dev)


def oracle_self_consistency(params: Parameters, y0, t_end, substeps) -> float:
    """Relative endpoint change when halving the reference step count."""
    coarse = ode_oracle(params, y0, t_end, substeps).endpoint
    fine = ode_oracle(params, y0, t_end, 2 * substeps).endpoint
    scale = max(float(np.max(np.abs(fine))), 1e-30)
    return float(np.max(np.abs(fine - coarse))) / scale
