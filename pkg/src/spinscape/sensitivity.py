"""Differential sensitivity of the transfer error to bias and drift perturbations.

The error derivative with respect to each bias combines the closed-form
coupling derivative with the Frechet derivative of the propagator, computed
spectrally in the cached eigenbasis.  Physical drifts (lattice alignment
along the chain, projection power) are mapped to bias derivatives
numerically from the projected potential and folded in by the chain rule.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .lattice import HubbardParams, effective_coupling_derivative, as_bias_array
from .dynamics import (EffectiveHamiltonian, TransferProblem, hamiltonian,
                       structure_matrix, propagate)
from .interpolate import MonotoneCubicInterpolator
from .dmdopt import DMDSolution, ProjectionContext, realized_bias
from .optics import project_intensity, ExtractionError

#: Eigenvalue gaps below this fraction of the spectral radius use the
#: confluent (equal-eigenvalue) limit of the divided difference.
DEGENERACY_THRESHOLD = 1e-12


def frechet_derivative(ham: EffectiveHamiltonian, direction: np.ndarray,
                       t: float) -> np.ndarray:
    """K(S) = int_0^1 exp(-i t H (1-s)) S exp(-i t H s) ds, spectrally.

    In the eigenbasis the integral reduces to the divided difference
    (exp(-i l_m t) - exp(-i l_n t)) / (-i t (l_m - l_n)) applied entrywise,
    with the limit exp(-i l t) on (near-)degenerate pairs.  The propagator
    derivative along S is -i t K(S).
    """
    w = ham.eigenvalues
    v = ham.eigenvectors
    s_eig = v.conj().T @ np.asarray(direction, dtype=float) @ v
    diff = w[:, None] - w[None, :]
    scale = max(np.max(np.abs(w)), 1.0)
    degenerate = np.abs(diff) < DEGENERACY_THRESHOLD * scale
    safe = np.where(degenerate, 1.0, diff)
    phases = np.exp(-1j * w * t)
    if t == 0:
        phi = np.ones_like(diff, dtype=complex)
    else:
        phi = (phases[:, None] - phases[None, :]) / (-1j * t * safe)
        confluent = np.broadcast_to(phases[:, None], diff.shape)
        phi = np.where(degenerate, confluent, phi)
    return v @ (s_eig * phi) @ v.conj().T


def bias_sensitivities(delta, t: float, problem: TransferProblem,
                       params: HubbardParams) -> np.ndarray:
    """d(error)/d(delta_j) for every bond, at the nominal operating point.

    xi_j = -2 t (dJ_j) Im{ <target|K(S_j)|initial> <initial|U(t)^+|target> }
    with dJ_j the closed-form coupling derivative at delta_j.
    """
    arr = as_bias_array(delta)
    ham = hamiltonian(arr, params)
    n = ham.n_sites
    psi0 = problem.initial_state()
    psif = problem.target_state()
    u = propagate(ham, t)
    overlap = np.vdot(psif, u @ psi0)          # <target|U|initial>
    xi = np.empty(len(arr))
    for j in range(1, n):
        k = frechet_derivative(ham, structure_matrix(j, n), t)
        dj = effective_coupling_derivative(params, arr[j - 1])
        xi[j - 1] = -2 * t * dj * np.imag(
            np.vdot(psif, k @ psi0) * np.conj(overlap))
    return xi


def bias_sensitivity(delta, t: float, problem: TransferProblem,
                     params: HubbardParams, j: int) -> float:
    """Single-bond sensitivity xi_j (1-based bond index)."""
    arr = as_bias_array(delta)
    if not 1 <= j <= len(arr):
        raise ValueError(f"bond index {j} outside 1..{len(arr)}")
    return float(bias_sensitivities(arr, t, problem, params)[j - 1])


def bias_drift_x(solution: DMDSolution, ctx: ProjectionContext) -> np.ndarray:
    """d(delta_j)/dx for rigid lattice drift along the chain, per lattice spacing.

    The projected (projection-only) potential is fit with a monotone cubic
    Hermite interpolant; its slope at each atom site is evaluated by
    Richardson-refined centered differencing at the grid step.  The bias
    derivative is the difference of slopes across each bond over U, scaled
    to units of one lattice spacing.
    """
    optics = ctx.optics.with_power(solution.power)
    extent = (ctx.chain_sites[0], ctx.chain_sites[-1])
    projection = project_intensity(solution.pattern, optics, ctx.grid,
                                   chain_extent=extent)
    sites = realized_bias(solution.pattern, solution.power, ctx).positions
    fit = MonotoneCubicInterpolator(projection.x, projection.values)
    slopes = fit.richardson_derivative(sites, step=float(projection.step))
    return np.diff(slopes) / ctx.params.U * ctx.lattice.spacing


def bias_drift_power(solution: DMDSolution, ctx: ProjectionContext,
                     span: float = 0.1, n_samples: int = 21) -> np.ndarray:
    """d(delta_j)/dp at the solution's nominal power, in 1/E_R.

    Samples the realized biases at `n_samples` powers across
    [p0 - span, p0 + span] clipped to [0, 1], fits each component with the
    monotone cubic interpolant and differentiates at p0.  If any sample
    fails extraction the span is halved once before giving up.
    """
    p0 = solution.power
    for attempt_span in (span, span / 2):
        lo = max(0.0, p0 - attempt_span)
        hi = min(1.0, p0 + attempt_span)
        powers = np.linspace(lo, hi, n_samples)
        try:
            samples = np.array([
                realized_bias(solution.pattern, p, ctx).bias.array
                for p in powers
            ])
        except ExtractionError:
            continue
        out = np.empty(samples.shape[1])
        for j in range(samples.shape[1]):
            fit = MonotoneCubicInterpolator(powers, samples[:, j])
            out[j] = fit.derivative(p0)
        return out
    raise ExtractionError("bias extraction failed across the whole power span")


def physical_sensitivity(xi: np.ndarray, ddelta: np.ndarray) -> float:
    """Chain rule d(error)/d(drift) = sum_j xi_j d(delta_j)/d(drift)."""
    xi = np.asarray(xi, dtype=float)
    ddelta = np.asarray(ddelta, dtype=float)
    if xi.shape != ddelta.shape:
        raise ValueError(f"length mismatch: {xi.shape} vs {ddelta.shape}")
    return float(xi @ ddelta)


def _average_ranks(values: np.ndarray) -> np.ndarray:
    order = np.argsort(values, kind="stable")
    ranks = np.empty(len(values))
    i = 0
    while i < len(values):
        j = i
        while j + 1 < len(values) and values[order[j + 1]] == values[order[i]]:
            j += 1
        ranks[order[i:j + 1]] = (i + j) / 2 + 1        # ties share the average rank
        i = j + 1
    return ranks


def pearson_correlation(xs, ys) -> float:
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if xs.shape != ys.shape or xs.ndim != 1:
        raise ValueError("inputs must be 1-D arrays of equal length")
    if len(xs) < 3:
        raise ValueError("need at least three points")
    dx = xs - xs.mean()
    dy = ys - ys.mean()
    sx = np.sqrt(np.sum(dx * dx))
    sy = np.sqrt(np.sum(dy * dy))
    if sx == 0 or sy == 0:
        raise ValueError("correlation undefined for zero-variance data")
    return float(np.sum(dx * dy) / (sx * sy))


def correlations(xs, ys) -> tuple:
    """(Pearson r, Spearman rho); Spearman is Pearson on average-tied ranks."""
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    r = pearson_correlation(xs, ys)
    rho = pearson_correlation(_average_ranks(xs), _average_ranks(ys))
    return r, rho


@dataclass(frozen=True)
class SensitivityRecord:
    """Per-controller robustness summary.

    xi is dimensionless per unit normalized bias; ddelta_dx is per lattice
    spacing, ddelta_dp per E_R.  s_x and s_p are the chain-rule error
    derivatives for alignment and power drift; min_gap the distance of the
    biases to the coupling singularity.  All sensitivities use normalized
    time, matching the dynamics.
    """

    xi: tuple
    ddelta_dx: tuple
    ddelta_dp: tuple
    s_x: float
    s_p: float
    min_gap: float
    error: float
    transfer_time: float

    def to_dict(self) -> dict:
        return {"xi": list(self.xi), "ddelta_dx": list(self.ddelta_dx),
                "ddelta_dp": list(self.ddelta_dp), "s_x": self.s_x,
                "s_p": self.s_p, "min_gap": self.min_gap, "e": self.error,
                "T": self.transfer_time}

    @classmethod
    def from_dict(cls, data: dict) -> "SensitivityRecord":
        return cls(xi=tuple(data["xi"]), ddelta_dx=tuple(data["ddelta_dx"]),
                   ddelta_dp=tuple(data["ddelta_dp"]), s_x=data["s_x"],
                   s_p=data["s_p"], min_gap=data["min_gap"], error=data["e"],
                   transfer_time=data["T"])


def sensitivity_record(solution: DMDSolution, ctx: ProjectionContext,
                       problem: TransferProblem,
                       params: HubbardParams) -> SensitivityRecord:
    """Full robustness record for a validated solution (normalized dynamics params)."""
    if solution.error is None or solution.t_min is None:
        raise ValueError("solution must be validated before sensitivity analysis")
    xi = bias_sensitivities(solution.achieved, solution.t_min, problem, params)
    ddx = bias_drift_x(solution, ctx)
    ddp = bias_drift_power(solution, ctx)
    return SensitivityRecord(
        xi=tuple(float(v) for v in xi),
        ddelta_dx=tuple(float(v) for v in ddx),
        ddelta_dp=tuple(float(v) for v in ddp),
        s_x=physical_sensitivity(xi, ddx),
        s_p=physical_sensitivity(xi, ddp),
        min_gap=solution.achieved.min_singularity_gap(),
        error=float(solution.error),
        transfer_time=float(solution.t_min))
