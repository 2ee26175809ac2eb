"""Kuramoto oscillator dynamics in first- and second-order form.

First-order (phases only), used for the uncontrolled baseline:

    theta_dot_i = omega_i + (K u_i / N) sum_j P_ij sin(theta_j - theta_i)

Second-order (phases and angular rates), the controlled plant; natural
frequencies drop out when the phase equation is differentiated:

    theta_dot_i = x_i
    x_dot_i     = (K u_i / N) sum_j P_ij cos(theta_j - theta_i) (x_j - x_i)
    y_i         = x_i

The second-order form is passive-style with storage 0.5 * ||x||^2 and an
identity output map. Other plants can be plugged into the closed loop by
implementing the same small interface as `SecondOrderKuramoto` (attributes
`n`, `rhs(theta, x, u)`, `output(x)`), but only Kuramoto ships here.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, StructureError

__all__ = [
    "KuramotoParams",
    "PlantState",
    "SecondOrderKuramoto",
    "plant_output",
    "rhs_first_order",
    "rhs_second_order",
    "storage_value",
]


@dataclass(frozen=True, eq=False)
class KuramotoParams:
    """Oscillator network: size, coupling gain, natural frequencies, adjacency."""

    n: int
    coupling: float
    omega: np.ndarray
    adjacency: np.ndarray

    def __post_init__(self):
        omega = np.asarray(self.omega, dtype=float)
        adj = np.asarray(self.adjacency, dtype=float)
        object.__setattr__(self, "omega", omega)
        object.__setattr__(self, "adjacency", adj)
        if self.n <= 0:
            raise DimensionError("oscillator count must be positive")
        if self.coupling <= 0:
            raise StructureError("coupling gain must be positive")
        if omega.shape != (self.n,):
            raise DimensionError(f"omega must have length {self.n}, got {omega.shape}")
        if adj.shape != (self.n, self.n):
            raise DimensionError(f"adjacency must be {self.n}x{self.n}, got {adj.shape}")
        if np.any(adj != adj.T):
            raise StructureError("adjacency must be symmetric")
        if np.any(np.diag(adj) != 0):
            raise StructureError("adjacency must have a zero diagonal")
        if not np.isin(adj, (0.0, 1.0)).all():
            raise StructureError("adjacency entries must be 0 or 1")
        if not np.all(np.isfinite(omega)):
            raise StructureError("omega entries must be finite")


@dataclass
class PlantState:
    """Phases (rad) and angular rates (rad/s)."""

    theta: np.ndarray
    x: np.ndarray

    def __post_init__(self):
        self.theta = np.asarray(self.theta, dtype=float)
        self.x = np.asarray(self.x, dtype=float)
        if self.theta.shape != self.x.shape:
            raise DimensionError("theta and x must have the same length")


def _check_len(name: str, v: np.ndarray, n: int):
    if v.shape != (n,):
        raise DimensionError(f"{name} must have length {n}, got shape {v.shape}")


def rhs_first_order(p: KuramotoParams, theta: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Phase velocities of the first-order model with per-node coupling modulation u."""
    theta = np.asarray(theta, dtype=float)
    u = np.asarray(u, dtype=float)
    _check_len("theta", theta, p.n)
    _check_len("u", u, p.n)
    diff = theta[None, :] - theta[:, None]  # [i, j] = theta_j - theta_i
    coupling = (p.adjacency * np.sin(diff)).sum(axis=1)
    return p.omega + (p.coupling / p.n) * u * coupling


def rhs_second_order(p: KuramotoParams, s: PlantState, u: np.ndarray):
    """(theta_dot, x_dot) of the second-order model; consensus in x is an equilibrium."""
    u = np.asarray(u, dtype=float)
    _check_len("theta", s.theta, p.n)
    _check_len("x", s.x, p.n)
    _check_len("u", u, p.n)
    diff = s.theta[None, :] - s.theta[:, None]
    pc = p.adjacency * np.cos(diff)
    w = pc @ s.x - pc.sum(axis=1) * s.x  # sum_j P_ij cos(.)(x_j - x_i)
    return s.x.copy(), (p.coupling / p.n) * u * w


def plant_output(s: PlantState) -> np.ndarray:
    """Identity output map: y = x."""
    return s.x.copy()


def storage_value(s: PlantState) -> float:
    """Stored energy 0.5 * ||x||^2."""
    return 0.5 * float(s.x @ s.x)


class SecondOrderKuramoto:
    """Closed-loop plant adapter around `rhs_second_order`."""

    def __init__(self, params: KuramotoParams):
        self.params = params
        self.n = params.n

    def rhs(self, theta: np.ndarray, x: np.ndarray, u: np.ndarray):
        diff = theta[None, :] - theta[:, None]
        pc = self.params.adjacency * np.cos(diff)
        w = pc @ x - pc.sum(axis=1) * x
        return x, (self.params.coupling / self.n) * u * w

    def output(self, x: np.ndarray) -> np.ndarray:
        return x
