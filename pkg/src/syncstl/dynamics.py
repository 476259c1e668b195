"""Linear time-invariant agent models and trajectory rollout."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True, eq=False)
class AgentModel:
    A: np.ndarray
    B: np.ndarray
    x_bounds: np.ndarray  # (n_x, 2) closed intervals
    u_bounds: np.ndarray  # (n_u, 2)
    position: tuple[int, ...] = (0, 1)
    name: str = ""

    def __post_init__(self):
        for attr in ("A", "B", "x_bounds", "u_bounds"):
            object.__setattr__(self, attr, np.atleast_2d(np.asarray(getattr(self, attr), float)))
        nx, nu = self.B.shape
        if self.A.shape != (nx, nx):
            raise ValueError(f"A has shape {self.A.shape}, expected {(nx, nx)}")
        if self.x_bounds.shape != (nx, 2) or self.u_bounds.shape != (nu, 2):
            raise ValueError("bounds must be (n, 2) arrays matching A and B")
        if not (np.isfinite(self.x_bounds).all() and np.isfinite(self.u_bounds).all()):
            raise ValueError("state and control bounds must be finite")
        if (self.x_bounds[:, 0] > self.x_bounds[:, 1]).any() or \
                (self.u_bounds[:, 0] > self.u_bounds[:, 1]).any():
            raise ValueError("lower bound above upper bound")
        object.__setattr__(self, "position", tuple(self.position))

    @property
    def nx(self) -> int:
        return self.A.shape[0]

    @property
    def nu(self) -> int:
        return self.B.shape[1]

    def __eq__(self, other):
        if not isinstance(other, AgentModel):
            return NotImplemented
        return all(np.array_equal(getattr(self, a), getattr(other, a))
                   for a in ("A", "B", "x_bounds", "u_bounds")) and \
            self.position == other.position

    def __hash__(self):
        return hash((self.A.tobytes(), self.B.tobytes(), self.position))


def double_integrator_2d(x_bounds=((0, 7), (0, 5), (-2, 2), (-2, 2)),
                         u_bounds=((-2, 2), (-2, 2))) -> AgentModel:
    """Planar double integrator with state (z_x, z_y, v_x, v_y), unit step."""
    I = np.eye(2)
    A = np.block([[I, I], [np.zeros((2, 2)), I]])
    B = np.vstack([0.5 * I, I])
    return AgentModel(A, B, np.array(x_bounds, float), np.array(u_bounds, float),
                      (0, 1), "double_integrator_2d")


def single_integrator(dim=1, x_bounds=None, u_bounds=None) -> AgentModel:
    x_bounds = [(0, 10)] * dim if x_bounds is None else x_bounds
    u_bounds = [(-1, 1)] * dim if u_bounds is None else u_bounds
    return AgentModel(np.eye(dim), np.eye(dim), np.array(x_bounds, float),
                      np.array(u_bounds, float), tuple(range(min(dim, 2))),
                      "single_integrator")


PRESETS = {
    "double_integrator_2d": double_integrator_2d,
    "single_integrator_1d": lambda **kw: single_integrator(1, **kw),
    "single_integrator_2d": lambda **kw: single_integrator(2, **kw),
}


def preset(name: str, **kw) -> AgentModel:
    try:
        return PRESETS[name](**kw)
    except KeyError:
        raise KeyError(f"unknown model preset {name!r}; known: {sorted(PRESETS)}") from None


def rollout(model: AgentModel, x0, u) -> np.ndarray:
    """States x(0..H) for controls u(0..H-1); returns an (H+1, n_x) array."""
    x0 = np.asarray(x0, float)
    u = np.asarray(u, float).reshape(-1, model.nu) if np.size(u) else np.zeros((0, model.nu))
    if x0.shape != (model.nx,):
        raise ValueError(f"x0 has shape {x0.shape}, expected ({model.nx},)")
    xs = np.empty((len(u) + 1, model.nx))
    xs[0] = x0
    for k, uk in enumerate(u):
        xs[k + 1] = model.A @ xs[k] + model.B @ uk
    return xs


@dataclass(frozen=True)
class Violation:
    kind: str  # "state" or "control"
    k: int
    component: int
    value: float
    bound: tuple[float, float] = field(default=(0.0, 0.0))


def check_bounds(model: AgentModel, traj, u=None, tol: float = 0.0) -> list[Violation]:
    out = []
    for kind, arr, bounds in (("state", traj, model.x_bounds), ("control", u, model.u_bounds)):
        if arr is None:
            continue
        arr = np.atleast_2d(np.asarray(arr, float))
        for k, row in enumerate(arr):
            for i, v in enumerate(row):
                lo, hi = bounds[i]
                if v < lo - tol or v > hi + tol:
                    out.append(Violation(kind, k, i, float(v), (float(lo), float(hi))))
    return out
