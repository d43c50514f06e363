"""Simulated linear-system solver in the phase-estimation style.

The pipeline mirrors the register algebra of the quantum algorithm:
decompose the (Hermitian-embedded, power-of-two padded) matrix, express the
right-hand side in the eigenbasis, round each eigenphase onto the finite
clock register, apply the eigenvalue-inversion rotation amplitudes, uncompute,
and post-select the ancilla.  Phase estimation is done by direct
eigendecomposition plus binary-fraction rounding of the phases; that is
mathematically identical to the register evolution and keeps every
intermediate exactly inspectable.

Sign convention: when the spectrum contains negative eigenvalues the clock
register is read in two's complement (phases in [-1/2, 1/2)); for
non-negative spectra it is read unsigned (phases in [0, 1)).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "LinearSystem", "HhlConfig", "HhlSolution", "HhlError",
    "HhlResolutionError", "EmptyAncillaError",
    "hermitian_embed", "choose_config", "solve", "extract_solution",
    "solve_system",
]

HERMITIAN_TOLERANCE = 1e-12
DYADIC_SEARCH_LIMIT = 12
DEFAULT_CLOCK_QUBITS = 8
EMPTY_BRANCH_FLOOR = 1e-14
NEGLIGIBLE_COMPONENT = 1e-14


class HhlError(Exception):
    pass


class HhlResolutionError(HhlError):
    """An eigenvalue falls outside (or rounds off) the clock window."""

    def __init__(self, message: str, eigenvalue: float):
        super().__init__(message)
        self.eigenvalue = eigenvalue


class EmptyAncillaError(HhlError):
    """The ancilla success branch has numerically zero probability."""


@dataclass(frozen=True)
class LinearSystem:
    """Hermitian matrix (power-of-two dimension after padding) with a unit
    right-hand side.  ``solution_slice`` extracts the physical solution from
    the padded/embedded vector; padding rows are identity with zero
    right-hand side, so they never influence the solution."""

    matrix: np.ndarray
    rhs_unit: np.ndarray
    rhs_norm: float
    solution_slice: slice

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        b = np.asarray(self.rhs_unit, dtype=complex)
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "rhs_unit", b)
        dim = m.shape[0]
        if m.shape != (dim, dim) or b.shape != (dim,):
            raise HhlError("matrix/vector shapes disagree")
        if dim & (dim - 1):
            raise HhlError("system dimension must be a power of two")
        if np.max(np.abs(m - m.conj().T)) > HERMITIAN_TOLERANCE * max(
                1.0, float(np.max(np.abs(m)))):
            raise HhlError("system matrix must be Hermitian")


@dataclass(frozen=True)
class HhlConfig:
    clock_qubits: int
    evolution_time: float
    rotation_scale: float

    def __post_init__(self):
        if self.clock_qubits < 1:
            raise HhlError("at least one clock qubit is required")
        if self.evolution_time <= 0:
            raise HhlError("evolution time must be positive")
        if self.rotation_scale <= 0:
            raise HhlError("rotation scale must be positive")


@dataclass(frozen=True)
class HhlSolution:
    """Post-selected output plus white-box register diagnostics."""

    direction: np.ndarray            # unit vector, padded dimensions
    norm: float                      # physical solution norm estimate
    success_probability: float
    eigenvalues: np.ndarray
    resolved_eigenvalues: np.ndarray  # after clock rounding
    rhs_coefficients: np.ndarray      # rhs in the eigenbasis
    rotation_amplitudes: np.ndarray   # ancilla-1 amplitude per eigenvector
    rotation_scale_used: float        # config scale, capped at min |resolved|


def _next_power_of_two(n: int) -> int:
    p = 1
    while p < n:
        p *= 2
    return p


def _pad(matrix: np.ndarray, rhs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    dim = matrix.shape[0]
    padded = _next_power_of_two(dim)
    if padded == dim:
        return matrix, rhs
    m = np.eye(padded, dtype=complex)
    m[:dim, :dim] = matrix
    b = np.zeros(padded, dtype=complex)
    b[:dim] = rhs
    return m, b


def hermitian_embed(matrix: np.ndarray, rhs: np.ndarray) -> LinearSystem:
    """Wrap M s = b as a Hermitian, power-of-two system.

    A Hermitian M passes through (padding aside).  Otherwise the doubled
    system [[0, M], [M^t, 0]] [0; s] = [b; 0] is used and the solution lives
    in the lower block.
    """
    m = np.asarray(matrix, dtype=complex)
    b = np.asarray(rhs, dtype=complex)
    dim = m.shape[0]
    if m.shape != (dim, dim):
        raise HhlError("matrix must be square")
    if b.shape != (dim,):
        raise HhlError("right-hand side length mismatch")
    norm = float(np.linalg.norm(b))
    if norm == 0.0:
        raise HhlError("right-hand side is zero")

    hermitian = np.max(np.abs(m - m.conj().T)) <= HERMITIAN_TOLERANCE * max(
        1.0, float(np.max(np.abs(m))))
    if hermitian:
        big, rhs_big = m, b / norm
        solution = slice(0, dim)
    else:
        big = np.zeros((2 * dim, 2 * dim), dtype=complex)
        big[:dim, dim:] = m
        big[dim:, :dim] = m.conj().T
        rhs_big = np.zeros(2 * dim, dtype=complex)
        rhs_big[:dim] = b / norm
        solution = slice(dim, 2 * dim)

    padded, rhs_padded = _pad(big, rhs_big)
    return LinearSystem(padded, rhs_padded, norm, solution)


def choose_config(matrix: np.ndarray) -> HhlConfig:
    """Pick evolution time, clock size, and rotation scale for a Hermitian M.

    The time maps the spectral range into the representable phase window
    (positive spectra use phases up to 1/2; mixed spectra stay within
    +-1/4 so the signed convention has margin).  The clock gets the smallest
    qubit count that resolves every phase exactly when they are all dyadic,
    otherwise the configured default of 8.  The rotation scale is 0.9 times
    the smallest eigenvalue magnitude.
    """
    m = np.asarray(matrix, dtype=complex)
    eigenvalues = np.linalg.eigvalsh(m)
    magnitudes = np.abs(eigenvalues)
    largest = float(np.max(magnitudes))
    if largest == 0.0:
        raise HhlError("zero matrix has no usable spectrum")
    smallest = float(np.min(magnitudes))
    if smallest <= largest * 1e-14:
        raise HhlError("matrix is numerically singular")

    if float(np.min(eigenvalues)) >= 0.0:
        time = np.pi / largest                 # phases in (0, 1/2]
    else:
        time = np.pi / (2.0 * largest)         # phases in [-1/4, 1/4]

    phases = eigenvalues * time / (2.0 * np.pi)
    clock = DEFAULT_CLOCK_QUBITS
    for bits in range(1, DYADIC_SEARCH_LIMIT + 1):
        scaled = phases * 2 ** bits
        rounded = np.round(scaled)
        if np.max(np.abs(scaled - rounded)) <= 1e-9 and np.all(rounded != 0):
            clock = bits
            break

    return HhlConfig(clock_qubits=clock, evolution_time=float(time),
                     rotation_scale=0.9 * smallest)


def solve(system: LinearSystem, config: HhlConfig) -> HhlSolution:
    """Run the phase-estimation / rotation / uncompute / post-select sequence.

    Phases are rounded to the clock register's binary fractions, so the
    returned direction is exact when every eigenphase is dyadic at the
    configured width and degrades with the rounding error otherwise.
    """
    eigenvalues, vectors = np.linalg.eigh(system.matrix)
    coefficients = vectors.conj().T @ system.rhs_unit

    signed = bool(np.min(eigenvalues) < 0.0)
    grid = 2 ** config.clock_qubits
    phases = eigenvalues * config.evolution_time / (2.0 * np.pi)
    resolved = np.empty_like(eigenvalues)
    for j, (lam, phase, weight) in enumerate(
            zip(eigenvalues, phases, np.abs(coefficients))):
        relevant = weight > NEGLIGIBLE_COMPONENT
        if signed:
            if relevant and abs(phase) >= 0.5:
                raise HhlResolutionError(
                    f"eigenvalue {lam:.6g} maps to phase {phase:.6g} outside "
                    "the signed clock window", float(lam))
            clock_value = int(np.round(phase * grid)) % grid
            signed_value = clock_value - grid if clock_value >= grid // 2 \
                else clock_value
        else:
            if relevant and not 0.0 <= phase < 1.0:
                raise HhlResolutionError(
                    f"eigenvalue {lam:.6g} maps to phase {phase:.6g} outside "
                    "the clock window", float(lam))
            signed_value = int(np.round(phase * grid))
            if signed_value >= grid:
                signed_value = 0  # wraps around the register: unresolvable
        if signed_value == 0 and relevant:
            raise HhlResolutionError(
                f"eigenvalue {lam:.6g} rounds to clock value 0 at "
                f"{config.clock_qubits} clock qubits", float(lam))
        resolved[j] = signed_value * 2.0 * np.pi / (grid * config.evolution_time) \
            if signed_value != 0 else np.inf  # negligible component, drops out

    inverted = coefficients / resolved
    # The conditioned-rotation amplitude c/lambda must stay within [0, 1].
    # Clock rounding can push a resolved eigenvalue below the configured
    # scale, so cap the effective scale; this changes only the success
    # probability, never the post-selected direction.
    smallest_resolved = float(np.min(np.abs(resolved)))
    scale_used = min(config.rotation_scale, smallest_resolved)
    rotation = scale_used * inverted

    success_probability = float(np.sum(np.abs(rotation) ** 2))
    if success_probability < EMPTY_BRANCH_FLOOR:
        raise EmptyAncillaError(
            f"ancilla success probability {success_probability:.3e} is "
            "numerically empty")

    raw = vectors @ inverted
    raw_norm = float(np.linalg.norm(raw))
    return HhlSolution(
        direction=raw / raw_norm,
        norm=raw_norm * system.rhs_norm,
        success_probability=success_probability,
        eigenvalues=eigenvalues,
        resolved_eigenvalues=np.where(np.isinf(resolved), 0.0, resolved),
        rhs_coefficients=coefficients,
        rotation_amplitudes=rotation,
        rotation_scale_used=scale_used,
    )


def extract_solution(system: LinearSystem, solution: HhlSolution) -> np.ndarray:
    """Physical solution vector: rescale the unit direction and slice off the
    embedding/padding blocks."""
    return (solution.direction * solution.norm)[system.solution_slice]


def solve_system(matrix: np.ndarray, rhs: np.ndarray,
                 config: HhlConfig | None = None,
                 clock_qubits: int | None = None) -> tuple[np.ndarray, HhlSolution]:
    """Embed, configure (unless given), solve, and extract in one call."""
    system = hermitian_embed(matrix, rhs)
    if config is None:
        config = choose_config(system.matrix)
        if clock_qubits is not None:
            config = HhlConfig(clock_qubits, config.evolution_time,
                               config.rotation_scale)
    solution = solve(system, config)
    return extract_solution(system, solution), solution
