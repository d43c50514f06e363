"""Differential-algebraic models, structural index reduction, and the
conversion to an explicit ODE.

A :class:`DaeSystem` is semi-explicit: der(x_i) = f_i(x, y) plus algebraic
residuals 0 = g_k(x, y).  :func:`pantelides_reduce` differentiates constraints
(graph-matching driven) until each algebraic equation can be matched to an
algebraic variable, :func:`to_explicit_ode` promotes the algebraic variables
to states whose derivatives come from a per-evaluation linear solve, and
:func:`consistent_initialize` produces algebraic values satisfying the
constraints at a given state.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Mapping, Sequence

import numpy as np

from . import expr
from .expr import Expression, ParseError

__all__ = [
    "DaeSystem", "OdeSystem", "LineageRecord", "DaeError",
    "StructuralSingularityError", "SingularJacobianError", "NewtonError",
    "pantelides_reduce", "to_explicit_ode", "consistent_initialize",
    "constraint_evaluator", "parse_model_file", "ModelFile",
]

DIFFERENTIATION_BUDGET = 10
CONDITION_LIMIT = 1e12


class DaeError(Exception):
    pass


class StructuralSingularityError(DaeError):
    """Index reduction could not complete the equation/variable matching."""

    def __init__(self, message: str, unmatched: Sequence[int]):
        super().__init__(message)
        self.unmatched = tuple(unmatched)


class SingularJacobianError(DaeError):
    """The algebraic Jacobian is numerically singular at an evaluation point."""

    def __init__(self, message: str, suspects: Sequence[int]):
        super().__init__(message)
        self.suspects = tuple(suspects)


class NewtonError(DaeError):
    """Consistent initialization did not converge; carries the residual report."""

    def __init__(self, message: str, residuals: Mapping[int, float]):
        super().__init__(message)
        self.residuals = dict(residuals)


@dataclass(frozen=True)
class LineageRecord:
    """Records that constraint ``index`` was replaced by the time derivative
    of ``parent`` (repeated ``rounds`` times)."""

    index: int
    parent: Expression
    rounds: int


@dataclass(frozen=True)
class DaeSystem:
    states: tuple[str, ...]
    algebraics: tuple[str, ...]
    parameters: Mapping[str, float]
    derivatives: tuple[Expression, ...]   # RHS of der(states[i])
    constraints: tuple[Expression, ...]   # residuals, 0 = g_k
    lineage: tuple[LineageRecord, ...] = ()

    def __post_init__(self):
        if len(self.derivatives) != len(self.states):
            raise DaeError("one derivative equation per state is required")
        if len(self.constraints) != len(self.algebraics):
            raise DaeError(
                f"{len(self.constraints)} constraints for "
                f"{len(self.algebraics)} algebraic variables")
        declared = set(self.states) | set(self.algebraics) | set(self.parameters)
        for e in (*self.derivatives, *self.constraints):
            undeclared = expr.free_names(e) - declared
            if undeclared:
                raise DaeError(f"undeclared names in equations: {sorted(undeclared)}")

    @property
    def size(self) -> int:
        return len(self.states) + len(self.algebraics)


@dataclass(frozen=True)
class OdeSystem:
    """Explicit system dz/dt = f(z).

    ``rhs`` holds symbolic right-hand sides when the model provides them
    (needed for exact Taylor coefficients); systems produced by
    :func:`to_explicit_ode` carry only an evaluator because the algebraic
    derivative block requires a numeric linear solve per point.
    """

    variables: tuple[str, ...]
    parameters: Mapping[str, float]
    rhs: tuple[Expression, ...] | None = None
    rhs_evaluator: Callable[[np.ndarray], np.ndarray] | None = None
    _compiled: list = field(default_factory=list, repr=False, compare=False)

    def __post_init__(self):
        if self.rhs is None and self.rhs_evaluator is None:
            raise DaeError("an OdeSystem needs symbolic RHS or an evaluator")
        if self.rhs is not None and len(self.rhs) != len(self.variables):
            raise DaeError("one right-hand side per variable is required")

    @property
    def size(self) -> int:
        return len(self.variables)

    def evaluator(self) -> Callable[[np.ndarray], np.ndarray]:
        """Vectorized dz/dt callable (compiled once per system)."""
        if self.rhs_evaluator is not None:
            return self.rhs_evaluator
        if not self._compiled:
            self._compiled.append(
                expr.compile_vector(self.rhs, self.variables, self.parameters))
        return self._compiled[0]


# --- incidence and matching ----------------------------------------------------

@dataclass
class IncidenceGraph:
    """Bipartite incidence of algebraic constraints onto algebraic variables,
    with the current matching (a partial injection constraints -> variables)."""

    incidence: list[set[int]]
    matching: dict[int, int]          # constraint index -> variable index

    @classmethod
    def build(cls, constraints: Sequence[Expression],
              algebraics: Sequence[str]) -> "IncidenceGraph":
        index = {name: j for j, name in enumerate(algebraics)}
        rows = [
            {index[n] for n in expr.free_names(g) if n in index}
            for g in constraints
        ]
        return cls(rows, {})

    def maximum_matching(self) -> dict[int, int]:
        """Kuhn's augmenting-path matching; sizes here are tiny."""
        var_owner: dict[int, int] = {}

        def augment(eq: int, visited: set[int]) -> bool:
            for v in sorted(self.incidence[eq]):
                if v in visited:
                    continue
                visited.add(v)
                if v not in var_owner or augment(var_owner[v], visited):
                    var_owner[v] = eq
                    return True
            return False

        for eq in range(len(self.incidence)):
            augment(eq, set())
        self.matching = {eq: v for v, eq in var_owner.items()}
        return self.matching

    def unmatched(self) -> list[int]:
        return [eq for eq in range(len(self.incidence)) if eq not in self.matching]


def pantelides_reduce(system: DaeSystem) -> DaeSystem:
    """Differentiate constraints until every one matches an algebraic variable.

    Unmatched constraints that contain no algebraic variable are replaced by
    their total time derivative with state derivatives substituted from the
    differential equations (value-identical along trajectories, recorded in
    the lineage).  Index-<=1 systems are returned unchanged.  A constraint
    that cannot make progress inside the differentiation budget raises
    :class:`StructuralSingularityError` naming the unmatched equations.
    """
    state_rhs = dict(zip(system.states, system.derivatives))
    constraints = list(system.constraints)
    lineage = {rec.index: rec for rec in system.lineage}

    for round_number in range(1, DIFFERENTIATION_BUDGET + 1):
        graph = IncidenceGraph.build(constraints, system.algebraics)
        graph.maximum_matching()
        unmatched = graph.unmatched()
        if not unmatched:
            if round_number == 1:
                return system
            return replace(system, constraints=tuple(constraints),
                           lineage=tuple(sorted(lineage.values(),
                                                key=lambda r: r.index)))
        progressed = False
        for k in unmatched:
            if graph.incidence[k]:
                # The constraint competes for already-matched algebraic
                # variables; resolving this needs dummy derivatives, which
                # this reducer does not do.
                raise StructuralSingularityError(
                    "no augmenting path for constraints "
                    f"{unmatched}: structurally singular system", unmatched)
            differentiated = expr.substitute_derivatives(
                expr.differentiate_time(constraints[k]), state_rhs)
            leftover = expr.derivative_names(differentiated)
            if leftover:
                raise StructuralSingularityError(
                    f"constraint {k} differentiates onto algebraic "
                    f"derivatives of {sorted(leftover)}", [k])
            if differentiated == constraints[k]:
                continue  # fixpoint, e.g. a constant residual
            parent = lineage[k].parent if k in lineage else constraints[k]
            rounds = lineage[k].rounds + 1 if k in lineage else 1
            constraints[k] = differentiated
            lineage[k] = LineageRecord(k, parent, rounds)
            progressed = True
        if not progressed:
            break

    graph = IncidenceGraph.build(constraints, system.algebraics)
    graph.maximum_matching()
    raise StructuralSingularityError(
        f"constraints {graph.unmatched()} still unmatched after "
        f"{DIFFERENTIATION_BUDGET} differentiation rounds", graph.unmatched())


# --- explicit ODE conversion ---------------------------------------------------

def _jacobian(equations: Sequence[Expression],
              names: Sequence[str]) -> list[list[Expression]]:
    return [[expr.differentiate(g, n) for n in names] for g in equations]


def to_explicit_ode(system: DaeSystem) -> OdeSystem:
    """Promote algebraic variables to states: z = [x; y] with
    dy/dt = -(dg/dy)^-1 (dg/dx) f(x, y) solved numerically at each point.

    The algebraic Jacobian is formed symbolically once and checked for
    numerical singularity (condition estimate above 1e12) at every
    evaluation.
    """
    reduced = pantelides_reduce(system)
    variables = reduced.states + reduced.algebraics
    nx, ny = len(reduced.states), len(reduced.algebraics)

    f_fn = expr.compile_vector(reduced.derivatives, variables, reduced.parameters)
    gx = _jacobian(reduced.constraints, reduced.states)
    gy = _jacobian(reduced.constraints, reduced.algebraics)
    gx_fn = expr.compile_vector([e for row in gx for e in row],
                                variables, reduced.parameters)
    gy_fn = expr.compile_vector([e for row in gy for e in row],
                                variables, reduced.parameters)

    def rhs(z: np.ndarray) -> np.ndarray:
        xdot = f_fn(z)
        if ny == 0:
            return xdot
        jx = gx_fn(z).reshape(ny, nx)
        jy = gy_fn(z).reshape(ny, ny)
        _check_condition(jy)
        ydot = np.linalg.solve(jy, -jx @ xdot)
        return np.concatenate([xdot, ydot])

    return OdeSystem(variables=variables, parameters=dict(reduced.parameters),
                     rhs_evaluator=rhs)


def _check_condition(jy: np.ndarray):
    u, s, _ = np.linalg.svd(jy)
    if s[-1] == 0.0 or s[0] / s[-1] > CONDITION_LIMIT:
        # Constraint rows loading the near-null left singular direction.
        weights = np.abs(u[:, -1])
        suspects = [int(i) for i in np.argsort(weights)[::-1][:3]]
        raise SingularJacobianError(
            "algebraic Jacobian numerically singular; nearest-to-dependent "
            f"constraints: {suspects}", suspects)


def constraint_evaluator(system: DaeSystem) -> Callable[[np.ndarray], np.ndarray]:
    """Residual g(z) over z = [x; y]; used for drift checks along trajectories."""
    variables = system.states + system.algebraics
    return expr.compile_vector(system.constraints, variables, system.parameters)


def consistent_initialize(system: DaeSystem, x0: Mapping[str, float] | np.ndarray,
                          y_guess: Mapping[str, float] | np.ndarray,
                          tolerance: float = 1e-10,
                          max_iterations: int = 50) -> np.ndarray:
    """Solve g(x0, y) = 0 for y by damped Newton with the exact symbolic
    Jacobian.  The step is halved while it increases the residual norm.
    Raises :class:`NewtonError` with a per-constraint residual report when the
    iteration does not reach the tolerance.
    """
    x = _as_array(x0, system.states)
    y = _as_array(y_guess, system.algebraics)
    variables = system.states + system.algebraics
    ny = len(system.algebraics)

    g_fn = expr.compile_vector(system.constraints, variables, system.parameters)
    gy = _jacobian(system.constraints, system.algebraics)
    gy_fn = expr.compile_vector([e for row in gy for e in row],
                                variables, system.parameters)

    def residual(yv: np.ndarray) -> np.ndarray:
        return g_fn(np.concatenate([x, yv]))

    g = residual(y)
    for _ in range(max_iterations):
        if np.max(np.abs(g)) <= tolerance:
            return y
        jy = gy_fn(np.concatenate([x, y])).reshape(ny, ny)
        _check_condition(jy)
        step = np.linalg.solve(jy, -g)
        damping = 1.0
        norm = np.max(np.abs(g))
        while damping > 1e-8:
            trial = y + damping * step
            g_trial = residual(trial)
            if np.max(np.abs(g_trial)) < norm or np.max(np.abs(g_trial)) <= tolerance:
                y, g = trial, g_trial
                break
            damping /= 2.0
        else:
            break
    if np.max(np.abs(g)) <= tolerance:
        return y
    report = {k: float(abs(v)) for k, v in enumerate(g) if abs(v) > tolerance}
    raise NewtonError(
        f"initialization stalled at residual {np.max(np.abs(g)):.3e} "
        f"after {max_iterations} iterations", report)


def _as_array(values, names: Sequence[str]) -> np.ndarray:
    if isinstance(values, Mapping):
        return np.array([float(values[n]) for n in names])
    arr = np.asarray(values, dtype=float)
    if arr.shape != (len(names),):
        raise DaeError(f"expected {len(names)} values, got shape {arr.shape}")
    return arr.copy()


# --- model files -----------------------------------------------------------------

@dataclass(frozen=True)
class ModelFile:
    system: DaeSystem
    initial_states: dict[str, float]
    algebraic_guesses: dict[str, float]


def parse_model_file(text: str) -> ModelFile:
    """Parse the line-oriented model format:

        param NAME = value
        state NAME = initial
        alg NAME = guess
        eq der(NAME) = <expr>
        eq 0 = <expr>

    ``#`` starts a comment; statements are one per line.
    """
    parameters: dict[str, float] = {}
    initial_states: dict[str, float] = {}
    guesses: dict[str, float] = {}
    state_rhs_text: dict[str, tuple[str, int]] = {}
    constraint_text: list[tuple[str, int]] = []

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        keyword, _, rest = line.partition(" ")
        if keyword in ("param", "state", "alg"):
            name, _, value = rest.partition("=")
            name, value = name.strip(), value.strip()
            if not name or not value:
                raise ParseError(f"malformed {keyword} declaration", lineno, 1)
            try:
                number = float(value)
            except ValueError:
                raise ParseError(f"bad numeric value {value!r}", lineno, 1) from None
            target = {"param": parameters, "state": initial_states,
                      "alg": guesses}[keyword]
            if name in target:
                raise ParseError(f"duplicate {keyword} '{name}'", lineno, 1)
            target[name] = number
        elif keyword == "eq":
            lhs, sep, rhs = rest.partition("=")
            lhs = lhs.strip()
            if not sep:
                raise ParseError("equation needs '='", lineno, 1)
            if lhs == "0":
                constraint_text.append((rhs.strip(), lineno))
            elif lhs.startswith("der(") and lhs.endswith(")"):
                name = lhs[4:-1].strip()
                if name in state_rhs_text:
                    raise ParseError(f"duplicate equation for der({name})", lineno, 1)
                state_rhs_text[name] = (rhs.strip(), lineno)
            else:
                raise ParseError(f"unrecognized equation head {lhs!r}", lineno, 1)
        else:
            raise ParseError(f"unknown statement '{keyword}'", lineno, 1)

    for name in state_rhs_text:
        if name not in initial_states:
            raise DaeError(f"equation for der({name}) but no state declaration")
    for name in initial_states:
        if name not in state_rhs_text:
            raise DaeError(f"state '{name}' has no derivative equation")

    param_names = set(parameters)
    states = tuple(initial_states)
    derivatives = tuple(
        expr.parse_expression(state_rhs_text[name][0], param_names,
                              line_offset=state_rhs_text[name][1])
        for name in states)
    constraints = tuple(
        expr.parse_expression(body, param_names, line_offset=lineno)
        for body, lineno in constraint_text)

    system = DaeSystem(
        states=states,
        algebraics=tuple(guesses),
        parameters=parameters,
        derivatives=derivatives,
        constraints=constraints,
    )
    return ModelFile(system, initial_states, guesses)
