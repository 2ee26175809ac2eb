"""Closed-loop assembly, forward-Euler rollouts, cost and consensus metrics.

The interconnection is positive feedback: the controller output u feeds the
plant directly (u scales the physically stabilizing coupling term), and the
plant output y = x drives the controller. Training absorbs any sign flips
into the controller's input matrix.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .controller import PhController, controller_output, grad_hamiltonian
from .errors import ConfigError, DimensionError, DivergenceError, NumericError
from .numerics import SeededRng
from .plant import KuramotoParams, SecondOrderKuramoto

__all__ = [
    "ClosedLoopState",
    "RolloutConfig",
    "Trajectory",
    "baseline_rollout",
    "closed_loop_rhs",
    "consensus_metric",
    "euler_step",
    "rollout",
    "sample_initial",
    "trajectory_cost",
    "trajectory_to_csv",
]


@dataclass(frozen=True)
class RolloutConfig:
    """Step size, horizon, control-effort weight, and cost normalization flag."""

    dt: float
    horizon: float
    beta: float = 0.0
    normalize_cost: bool = False

    def __post_init__(self):
        if self.dt <= 0 or self.horizon <= 0:
            raise ConfigError("dt and horizon must be positive")
        if self.beta < 0:
            raise ConfigError("beta must be non-negative")
        steps = self.horizon / self.dt
        if abs(steps - round(steps)) > 1e-9:
            raise ConfigError(f"horizon {self.horizon} is not an integer multiple of dt {self.dt}")

    @property
    def steps(self) -> int:
        return int(round(self.horizon / self.dt))

    def extended(self, factor: float) -> "RolloutConfig":
        return replace(self, horizon=self.horizon * factor)


@dataclass
class ClosedLoopState:
    """Plant phases/rates plus controller state."""

    theta: np.ndarray
    x: np.ndarray
    xi: np.ndarray

    def __post_init__(self):
        self.theta = np.asarray(self.theta, dtype=float)
        self.x = np.asarray(self.x, dtype=float)
        self.xi = np.asarray(self.xi, dtype=float)
        if self.theta.shape != self.x.shape:
            raise DimensionError("theta and x must have the same length")


@dataclass(eq=False)
class Trajectory:
    """Uniform-step rollout log.

    Arrays have length steps + 1; row k holds the state *before* step k plus
    the input/output, instantaneous cost integrand, consensus metric, and
    phase spread evaluated at that state. Phase spread below pi/2 means the
    state is still inside the domain where every pairwise coupling term has
    a positive cosine factor (recorded, never enforced).
    """

    times: np.ndarray
    theta: np.ndarray
    x: np.ndarray
    xi: np.ndarray
    u: np.ndarray
    y: np.ndarray
    step_cost: np.ndarray
    r: np.ndarray
    phase_spread: np.ndarray
    dt: float

    def state_at(self, k: int) -> ClosedLoopState:
        return ClosedLoopState(self.theta[k].copy(), self.x[k].copy(), self.xi[k].copy())

    def __len__(self) -> int:
        return len(self.times)


def euler_step(value: np.ndarray, derivative: np.ndarray, dt: float) -> np.ndarray:
    """One explicit Euler step."""
    return value + dt * derivative


def consensus_metric(theta: np.ndarray) -> float:
    """Order parameter r = sqrt(sum_{i,j} cos(theta_j - theta_i)) / N.

    Equals 1 exactly when all phases coincide. The double sum (ordered pairs,
    i = j included) equals (sum cos)^2 + (sum sin)^2, which keeps the
    radicand non-negative; tiny negative round-off in [-1e-12, 0] would be
    clamped, anything below that is a numeric error.
    """
    theta = np.asarray(theta, dtype=float)
    n = theta.shape[0]
    radicand = float(np.sum(np.cos(theta)) ** 2 + np.sum(np.sin(theta)) ** 2)
    if radicand < 0.0:
        if radicand < -1e-12:
            raise NumericError(f"consensus metric radicand {radicand} below -1e-12")
        radicand = 0.0
    return float(np.sqrt(radicand)) / n


def _pair_cost(adjacency: np.ndarray, theta: np.ndarray) -> float:
    diff = theta[None, :] - theta[:, None]
    return float(np.sum(adjacency * np.sin(diff) ** 2))


def _as_model(plant):
    if isinstance(plant, KuramotoParams):
        return SecondOrderKuramoto(plant)
    return plant


def closed_loop_rhs(plant, controller: PhController, s: ClosedLoopState):
    """(theta_dot, x_dot, xi_dot) of the feedback loop at state s."""
    model = _as_model(plant)
    g = grad_hamiltonian(controller, s.xi)
    u = controller.g_c.T @ g
    y = model.output(s.x)
    theta_dot, x_dot = model.rhs(s.theta, s.x, u)
    xi_dot = (
        controller.j_c @ g
        - controller.alpha * g
        - controller.lam_diag * g
        + controller.g_c @ y
    )
    return theta_dot, x_dot, xi_dot


def rollout(plant, controller: PhController, init: ClosedLoopState, cfg: RolloutConfig) -> Trajectory:
    """Forward-Euler rollout logging u, y, cost integrand, r, and phase spread.

    Raises DivergenceError naming the step if the state leaves float range.
    """
    model = _as_model(plant)
    adjacency = getattr(model, "params", None)
    adjacency = adjacency.adjacency if adjacency is not None else getattr(model, "adjacency", None)
    steps = cfg.steps
    n = len(np.asarray(init.theta))
    nc = controller.state_dim

    theta = np.empty((steps + 1, n))
    x = np.empty((steps + 1, n))
    xi = np.empty((steps + 1, nc))
    u_log = np.empty((steps + 1, controller.input_dim))
    y_log = np.empty((steps + 1, n))
    step_cost = np.empty(steps + 1)
    r = np.empty(steps + 1)
    spread = np.empty(steps + 1)

    theta[0] = init.theta
    x[0] = init.x
    xi[0] = init.xi

    for k in range(steps + 1):
        th_k, x_k, xi_k = theta[k], x[k], xi[k]
        g = grad_hamiltonian(controller, xi_k)
        u = controller.g_c.T @ g
        y = model.output(x_k)
        u_log[k] = u
        y_log[k] = y
        pair = _pair_cost(adjacency, th_k) if adjacency is not None else 0.0
        step_cost[k] = 0.5 * (pair + cfg.beta * float(u @ u))
        r[k] = consensus_metric(th_k)
        spread[k] = float(np.max(th_k) - np.min(th_k)) if n > 1 else 0.0
        if k == steps:
            break
        theta_dot, x_dot = model.rhs(th_k, x_k, u)
        xi_dot = (
            controller.j_c @ g
            - controller.alpha * g
            - controller.lam_diag * g
            + controller.g_c @ y
        )
        theta[k + 1] = euler_step(th_k, theta_dot, cfg.dt)
        x[k + 1] = euler_step(x_k, x_dot, cfg.dt)
        xi[k + 1] = euler_step(xi_k, xi_dot, cfg.dt)
        if not (
            np.all(np.isfinite(theta[k + 1]))
            and np.all(np.isfinite(x[k + 1]))
            and np.all(np.isfinite(xi[k + 1]))
        ):
            raise DivergenceError(k + 1)

    times = np.arange(steps + 1) * cfg.dt
    return Trajectory(times, theta, x, xi, u_log, y_log, step_cost, r, spread, cfg.dt)


def trajectory_cost(
    traj: Trajectory, adjacency: np.ndarray, beta: float, normalize: bool = False
) -> float:
    """Left-Riemann cost 0.5*dt*sum_k [sum_ij P_ij sin^2(theta_j - theta_i) + beta ||u_k||^2].

    The final sample is excluded (left rule). With normalize=True the sum is
    divided by the horizon length.
    """
    adjacency = np.asarray(adjacency, dtype=float)
    if adjacency.shape != (traj.theta.shape[1],) * 2:
        raise DimensionError("adjacency does not match trajectory width")
    total = 0.0
    last = len(traj) - 1
    for k in range(last):
        total += _pair_cost(adjacency, traj.theta[k]) + beta * float(traj.u[k] @ traj.u[k])
    cost = 0.5 * traj.dt * total
    if normalize:
        cost /= traj.dt * last
    return cost


def sample_initial(n: int, q_total: int, rng: SeededRng) -> ClosedLoopState:
    """Random start: phases in [0, pi/2) so every pairwise difference stays
    below pi/2, rates uniform in [-2, 2], controller at its zero-energy state."""
    theta = rng.uniform(0.0, np.pi / 2.0, size=n)
    x = rng.uniform(-2.0, 2.0, size=n)
    return ClosedLoopState(theta, x, np.zeros(q_total))


def baseline_rollout(params: KuramotoParams, theta0: np.ndarray, cfg: RolloutConfig, u_value: float = 1.0):
    """First-order uncontrolled rollout (u_i held at u_value, coupling active).

    Returns (times, theta path, consensus metric path).
    """
    from .plant import rhs_first_order

    theta0 = np.asarray(theta0, dtype=float)
    steps = cfg.steps
    u = np.full(params.n, float(u_value))
    theta = np.empty((steps + 1, params.n))
    r = np.empty(steps + 1)
    theta[0] = theta0
    r[0] = consensus_metric(theta0)
    for k in range(steps):
        theta[k + 1] = euler_step(theta[k], rhs_first_order(params, theta[k], u), cfg.dt)
        if not np.all(np.isfinite(theta[k + 1])):
            raise DivergenceError(k + 1)
        r[k + 1] = consensus_metric(theta[k + 1])
    return np.arange(steps + 1) * cfg.dt, theta, r


def trajectory_to_csv(traj: Trajectory, config_hash: str = "") -> str:
    """CSV export: t,r,cost,theta_*,x_*,u_* with 12 significant digits."""
    n = traj.theta.shape[1]
    m = traj.u.shape[1]
    header = (
        "t,r,cost,"
        + ",".join(f"theta_{i}" for i in range(n))
        + ","
        + ",".join(f"x_{i}" for i in range(n))
        + ","
        + ",".join(f"u_{i}" for i in range(m))
    )
    lines = []
    if config_hash:
        lines.append(f"# config_hash={config_hash}")
    lines.append(header)
    for k in range(len(traj)):
        row = [traj.times[k], traj.r[k], traj.step_cost[k]]
        row.extend(traj.theta[k])
        row.extend(traj.x[k])
        row.extend(traj.u[k])
        lines.append(",".join(format(v, ".12g") for v in row))
    return "\n".join(lines) + "\n"
