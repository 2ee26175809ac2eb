"""Numerical certification of the controller's dissipativity guarantees.

Three layers of checks, from algebraic to empirical:

* matrix certificate: the largest eigenvalue of
  epsilon*G G^T - alpha*I - Lambda must be non-positive; this is the
  pointwise condition behind the gain bound and holds for every admissible
  parameter value when alpha = epsilon * lambda_max(G G^T).
* trajectory dissipation: along any logged rollout the energy increase
  H(xi_k) - H(xi_0) may not exceed the integrated supply rate by more than
  an O(dt) discretization allowance (trapezoidal quadrature on the logged
  samples).
* empirical L2 gain: open-loop probe responses are fitted with an affine
  model ||u||_2 = gamma*||y||_2 + b; the slope must stay below 1/epsilon
  (plus a 5 percent margin for discretization).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Union

import numpy as np

from .controller import PhController, grad_hamiltonian, hamiltonian
from .errors import DimensionError, NumericError
from .numerics import SeededRng
from .plant import KuramotoParams
from .simulate import RolloutConfig, Trajectory, rollout

__all__ = [
    "CertificateReport",
    "L2Gain",
    "OutputStrictPassive",
    "Passive",
    "SupplyRate",
    "closed_loop_check",
    "dissipation_tolerance",
    "empirical_l2_gain",
    "matrix_certificate",
    "open_loop_response",
    "plant_dissipation",
    "probe_corpus",
    "report_to_json",
    "trajectory_dissipation",
]

MATRIX_TOL = 1e-9
GAIN_MARGIN = 0.05
CONSENSUS_R_FINAL = 0.99
CONSENSUS_R_POST = 0.95


@dataclass(frozen=True)
class Passive:
    """Supply rate u^T y."""


@dataclass(frozen=True)
class OutputStrictPassive:
    """Supply rate u^T y - epsilon ||u||^2 (controller roles: input y, output u)."""

    epsilon: float


@dataclass(frozen=True)
class L2Gain:
    """Supply rate gamma^2 ||y||^2 - ||u||^2, squared-norm form."""

    gamma: float


SupplyRate = Union[Passive, OutputStrictPassive, L2Gain]


def matrix_certificate(c: PhController) -> float:
    """Largest eigenvalue of epsilon*G G^T - alpha*I - Lambda.

    Non-positive (within 1e-9) certifies the gain bound; a tampered or stale
    alpha shows up as a positive value. The certificate matrix is indefinite
    in general (that is exactly what the verifier must detect), so the top
    eigenvalue comes from a dense symmetric eigensolver rather than the PSD
    power iteration used on the assembly side; the two routes stay
    independent that way.
    """
    g = c.g_c
    nc = g.shape[0]
    mc = c.epsilon * (g @ g.T)
    mc[np.diag_indices(nc)] -= c.alpha + c.lam_diag
    return float(np.linalg.eigvalsh(mc)[-1])


def _supply_series(supply: SupplyRate, u: np.ndarray, y: np.ndarray) -> np.ndarray:
    uy = np.einsum("ki,ki->k", u, y)
    if isinstance(supply, Passive):
        return uy
    if isinstance(supply, OutputStrictPassive):
        return uy - supply.epsilon * np.einsum("ki,ki->k", u, u)
    if isinstance(supply, L2Gain):
        return supply.gamma**2 * np.einsum("ki,ki->k", y, y) - np.einsum("ki,ki->k", u, u)
    raise TypeError(f"unknown supply rate {supply!r}")


def _max_storage_violation(storage: np.ndarray, supply: np.ndarray, dt: float) -> float:
    # Trapezoidal cumulative supply; max over k of the storage increase that
    # the supply fails to cover. Index 0 contributes zero, so the residual is
    # never negative and exactly zero on a fully dissipative log.
    cum = np.zeros_like(storage)
    cum[1:] = np.cumsum(0.5 * dt * (supply[:-1] + supply[1:]))
    return float(np.max(storage - storage[0] - cum))


def dissipation_tolerance(dt: float, energy_scale: float) -> float:
    """O(dt) allowance used by the dissipation verdicts: dt * (1 + energy scale)."""
    return dt * (1.0 + energy_scale)


def _energy_scale(storage: np.ndarray, supply: np.ndarray, dt: float) -> float:
    return float(np.max(np.abs(storage))) + float(np.sum(np.abs(supply)) * dt)


def trajectory_dissipation(traj: Trajectory, c: PhController, supply: SupplyRate) -> float:
    """Worst violation of the controller's dissipation inequality along a rollout.

    Returns max_k [H(xi_k) - H(xi_0) - integrated supply up to k]; the
    controller's input is the logged y and its output the logged u.
    """
    if traj.xi.shape[1] != c.state_dim:
        raise DimensionError("trajectory controller state width does not match controller")
    storage = np.array([hamiltonian(c, traj.xi[k]) for k in range(len(traj))])
    supply_series = _supply_series(supply, traj.u, traj.y)
    return _max_storage_violation(storage, supply_series, traj.dt)


def plant_dissipation(traj: Trajectory) -> float:
    """Worst violation of the plant passivity inequality (storage 0.5||x||^2,
    supply u^T y) along a closed-loop rollout."""
    storage = 0.5 * np.einsum("ki,ki->k", traj.x, traj.x)
    supply_series = _supply_series(Passive(), traj.u, traj.y)
    return _max_storage_violation(storage, supply_series, traj.dt)


# -- empirical gain ---------------------------------------------------------------

def open_loop_response(c: PhController, y_seq: np.ndarray, dt: float):
    """Drive the controller from xi = 0 with an input sequence; Euler steps.

    Returns (u sequence, xi path), both with one row per input sample.
    """
    y_seq = np.asarray(y_seq, dtype=float)
    steps = y_seq.shape[0]
    if y_seq.shape[1] != c.input_dim:
        raise DimensionError("probe width does not match controller input dimension")
    xi = np.zeros(c.state_dim)
    u_seq = np.empty((steps, c.input_dim))
    xi_path = np.empty((steps, c.state_dim))
    for k in range(steps):
        g = grad_hamiltonian(c, xi)
        u_seq[k] = c.g_c.T @ g
        xi_path[k] = xi
        if k + 1 < steps:
            xi = xi + dt * (c.j_c @ g - c.alpha * g - c.lam_diag * g + c.g_c @ y_seq[k])
    return u_seq, xi_path


def probe_corpus(n_channels: int, cfg: RolloutConfig, rng: SeededRng):
    """Probe inputs for gain estimation: a unit step, sinusoids at five
    frequencies spanning 0.1..10 rad/s, and a seeded white-noise sequence,
    each at amplitudes 0.1, 1, 10.

    Probes are (name, fn) pairs with fn(t_array) -> (steps, n) so the same
    signal can be sampled on refined grids. Noise is zero-order-hold on the
    base grid.
    """
    amplitudes = (0.1, 1.0, 10.0)
    freqs = np.logspace(np.log10(0.1), np.log10(10.0), 5)
    phases = 2.0 * np.pi * np.arange(n_channels) / max(n_channels, 1)
    base_noise = rng.normal(size=(cfg.steps + 1, n_channels))

    probes = []
    for amp in amplitudes:
        probes.append(
            (f"step_amp{amp:g}", lambda t, a=amp: np.full((len(t), n_channels), a))
        )
        for w in freqs:
            probes.append(
                (
                    f"sin_w{w:.3g}_amp{amp:g}",
                    lambda t, a=amp, w_=w: a * np.sin(w_ * t[:, None] + phases[None, :]),
                )
            )

        def _noise(t, a=amp):
            idx = np.minimum((t / cfg.dt + 0.5).astype(int), base_noise.shape[0] - 1)
            return a * base_noise[idx]

        probes.append((f"noise_amp{amp:g}", _noise))
    return probes


def empirical_l2_gain(c: PhController, probes, cfg: RolloutConfig):
    """Affine fit of output energy against input energy over the probe set.

    Each probe is simulated open-loop from xi = 0; the L2 norms over the
    horizon give one (||y||_2, ||u||_2) point. Zero-energy probes are
    excluded; if nothing remains the fit is degenerate. Returns
    (gamma_hat, bias_b).
    """
    t = np.arange(cfg.steps + 1) * cfg.dt
    in_norms = []
    out_norms = []
    for _, fn in probes:
        y_seq = np.asarray(fn(t), dtype=float)
        energy_in = float(np.sqrt(np.trapezoid(np.einsum("ki,ki->k", y_seq, y_seq), dx=cfg.dt)))
        if energy_in == 0.0:
            continue
        u_seq, _ = open_loop_response(c, y_seq, cfg.dt)
        energy_out = float(np.sqrt(np.trapezoid(np.einsum("ki,ki->k", u_seq, u_seq), dx=cfg.dt)))
        in_norms.append(energy_in)
        out_norms.append(energy_out)
    if len(in_norms) < 2:
        raise NumericError("gain fit is degenerate: need at least two nonzero probes")
    a = np.vstack([in_norms, np.ones(len(in_norms))]).T
    slope, intercept = np.linalg.lstsq(a, np.asarray(out_norms), rcond=None)[0]
    return float(slope), float(intercept)


# -- aggregated closed-loop report ---------------------------------------------

@dataclass(eq=False)
class CertificateReport:
    """Residuals, fitted gain, and per-check verdicts of a verification run.

    Certificate verdicts (matrix, controller/plant dissipation, gain) gate
    the verifier's exit status; the consensus verdict reports closed-loop
    performance and is informational for untrained controllers.
    """

    matrix_residual: float
    controller_residual: float
    plant_residual: float
    empirical_gain: float
    bias_b: float
    r_final: float
    r_post_min: float
    dt: float
    tolerances: dict
    verdicts: dict
    sample_counts: dict
    seeds: dict = field(default_factory=dict)
    probe_names: tuple = ()
    in_domain_fraction: float = 1.0

    @property
    def certificates_pass(self) -> bool:
        return all(v for k, v in self.verdicts.items() if k != "consensus")

    @property
    def all_pass(self) -> bool:
        return all(self.verdicts.values())


def closed_loop_check(
    plant: KuramotoParams,
    c: PhController,
    inits,
    cfg: RolloutConfig,
    probe_rng: SeededRng,
    post_horizon_factor: float = 2.0,
) -> CertificateReport:
    """Run the full battery: matrix certificate, dissipation inequalities on
    closed-loop rollouts extended past the training horizon, empirical gain,
    and the consensus outcome r(T) / min r over [T, factor*T]."""
    matrix_res = matrix_certificate(c)

    ext_cfg = cfg.extended(post_horizon_factor)
    horizon_idx = cfg.steps
    ctrl_res = 0.0
    plant_res = 0.0
    ctrl_tol = 0.0
    plant_tol = 0.0
    r_final = np.inf
    r_post = np.inf
    in_domain = []
    supply = OutputStrictPassive(c.epsilon)
    for init in inits:
        traj = rollout(plant, c, init, ext_cfg)
        storage = np.array([hamiltonian(c, traj.xi[k]) for k in range(len(traj))])
        s_series = _supply_series(supply, traj.u, traj.y)
        ctrl_res = max(ctrl_res, _max_storage_violation(storage, s_series, traj.dt))
        ctrl_tol = max(ctrl_tol, dissipation_tolerance(traj.dt, _energy_scale(storage, s_series, traj.dt)))
        v_series = 0.5 * np.einsum("ki,ki->k", traj.x, traj.x)
        p_series = _supply_series(Passive(), traj.u, traj.y)
        plant_res = max(plant_res, _max_storage_violation(v_series, p_series, traj.dt))
        plant_tol = max(plant_tol, dissipation_tolerance(traj.dt, _energy_scale(v_series, p_series, traj.dt)))
        r_final = min(r_final, float(traj.r[horizon_idx]))
        r_post = min(r_post, float(np.min(traj.r[horizon_idx:])))
        in_domain.append(float(np.mean(traj.phase_spread < np.pi / 2.0)))

    probes = probe_corpus(c.input_dim, cfg, probe_rng)
    gamma_hat, bias_b = empirical_l2_gain(c, probes, cfg)
    gain_bound = (1.0 + GAIN_MARGIN) / c.epsilon

    tolerances = {
        "matrix": MATRIX_TOL,
        "controller_dissipation": ctrl_tol,
        "plant_dissipation": plant_tol,
        "l2_gain": gain_bound,
        "consensus_r_final": CONSENSUS_R_FINAL,
        "consensus_r_post": CONSENSUS_R_POST,
    }
    verdicts = {
        "matrix_certificate": matrix_res <= MATRIX_TOL,
        "controller_dissipation": ctrl_res <= ctrl_tol,
        "plant_dissipation": plant_res <= plant_tol,
        "l2_gain": gamma_hat <= gain_bound,
        "consensus": r_final >= CONSENSUS_R_FINAL and r_post >= CONSENSUS_R_POST,
    }
    return CertificateReport(
        matrix_residual=matrix_res,
        controller_residual=ctrl_res,
        plant_residual=plant_res,
        empirical_gain=gamma_hat,
        bias_b=bias_b,
        r_final=r_final,
        r_post_min=r_post,
        dt=cfg.dt,
        tolerances=tolerances,
        verdicts=verdicts,
        sample_counts={"rollouts": len(list(inits)), "probes": len(probes)},
        seeds={"probes": probe_rng.seed, "probe_stream": probe_rng.stream_id},
        probe_names=tuple(name for name, _ in probes),
        in_domain_fraction=float(np.mean(in_domain)) if in_domain else 1.0,
    )


def report_to_json(report: CertificateReport, config_hash: str = "") -> str:
    from .controller import _format_json

    doc = {
        "matrix_residual": report.matrix_residual,
        "controller_residual": report.controller_residual,
        "plant_residual": report.plant_residual,
        "empirical_gain": report.empirical_gain,
        "bias_b": report.bias_b,
        "r_final": report.r_final,
        "r_post_min": report.r_post_min,
        "dt": report.dt,
        "in_domain_fraction": report.in_domain_fraction,
        "tolerances": {k: float(v) for k, v in report.tolerances.items()},
        "verdicts": {k: bool(v) for k, v in report.verdicts.items()},
        "sample_counts": {k: int(v) for k, v in report.sample_counts.items()},
        "seeds": {k: int(v) for k, v in report.seeds.items()},
        "probes": list(report.probe_names),
        "config_hash": config_hash,
    }
    return _format_json(doc) + "\n"
