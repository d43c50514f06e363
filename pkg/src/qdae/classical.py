"""Classical reference integrators and error metrics.

Forward Euler is the production-grade baseline the quantum stepper is
compared against; the fourth-order Runge-Kutta at a finer step is the
trajectory oracle for everything else.  Events (model swaps from a
disturbance schedule) are applied at step boundaries only.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .dae import OdeSystem

__all__ = ["Trace", "IntegrationError", "forward_euler", "rk4", "rmse",
           "EventSchedule"]

# (time, replacement system) pairs, sorted by time
EventSchedule = Sequence[tuple[float, OdeSystem]]


class IntegrationError(Exception):
    """Raised on numerical failure; carries the partial trace."""

    def __init__(self, message: str, partial: "Trace"):
        super().__init__(message)
        self.partial = partial


@dataclass
class Trace:
    """Time-stamped variable values for one run."""

    names: tuple[str, ...]
    times: np.ndarray
    values: np.ndarray  # rows = time points, columns = variables
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (len(self.times), len(self.names)):
            raise ValueError("trace shape mismatch")
        if len(self.times) > 1 and np.any(np.diff(self.times) <= 0):
            raise ValueError("time grid must be strictly increasing")

    def column(self, name: str) -> np.ndarray:
        try:
            return self.values[:, self.names.index(name)]
        except ValueError:
            raise KeyError(f"no variable named '{name}'") from None

    def final(self, name: str) -> float:
        return float(self.column(name)[-1])


def _time_grid(dt: float, t_end: float) -> np.ndarray:
    if dt <= 0:
        raise ValueError("time step must be positive")
    if t_end < dt:
        raise ValueError("horizon must cover at least one step")
    steps = int(round(t_end / dt))
    return np.arange(steps + 1) * dt


class _EventCursor:
    def __init__(self, events: EventSchedule):
        self.events = sorted(events, key=lambda item: item[0])
        self.position = 0

    def current(self, t: float, ode: OdeSystem) -> OdeSystem:
        while self.position < len(self.events) and \
                self.events[self.position][0] <= t + 1e-12:
            ode = self.events[self.position][1]
            self.position += 1
        return ode


def _integrate(ode: OdeSystem, z0, dt, t_end, events, stepper, method):
    times = _time_grid(dt, t_end)
    z = np.asarray(z0, dtype=float).copy()
    if z.shape != (ode.size,):
        raise ValueError(f"initial state must have {ode.size} entries")
    rows = [z.copy()]
    cursor = _EventCursor(events)
    ode = cursor.current(0.0, ode)
    fn = ode.evaluator()
    for k in range(len(times) - 1):
        swapped = cursor.current(times[k], ode)
        if swapped is not ode:
            ode = swapped
            fn = ode.evaluator()
        z = stepper(fn, z, dt)
        if not np.all(np.isfinite(z)):
            partial = Trace(ode.variables, times[:k + 1], np.array(rows),
                            {"method": method, "dt": dt, "aborted": True})
            raise IntegrationError(
                f"non-finite state at t = {times[k + 1]:.6g}", partial)
        rows.append(z.copy())
    return Trace(ode.variables, times, np.array(rows),
                 {"method": method, "dt": dt})


def _euler_step(fn, z, dt):
    return z + dt * fn(z)


def _rk4_step(fn, z, dt):
    k1 = fn(z)
    k2 = fn(z + 0.5 * dt * k1)
    k3 = fn(z + 0.5 * dt * k2)
    k4 = fn(z + dt * k3)
    return z + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def forward_euler(ode: OdeSystem, z0, dt: float, t_end: float,
                  events: EventSchedule = ()) -> Trace:
    """z(t+dt) = z(t) + dt*f(z(t)) with scheduled model swaps."""
    return _integrate(ode, z0, dt, t_end, events, _euler_step, "classical-euler")


def rk4(ode: OdeSystem, z0, dt: float, t_end: float,
        events: EventSchedule = ()) -> Trace:
    """Classic fourth-order one-step method; the designated trajectory oracle."""
    return _integrate(ode, z0, dt, t_end, events, _rk4_step, "classical-rk4")


def rmse(a: Trace, b: Trace, variable: str) -> float:
    """Root-mean-square difference of one variable over identical time grids."""
    if len(a.times) != len(b.times) or np.max(np.abs(a.times - b.times)) > 1e-12:
        raise ValueError("traces are on different time grids")
    diff = a.column(variable) - b.column(variable)
    return float(np.sqrt(np.mean(diff ** 2)))
