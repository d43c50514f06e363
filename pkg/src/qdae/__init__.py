"""Power-system dynamic models solved two ways: classical integrators and a
simulated quantum pipeline (amplitude encoding, pointer-Hamiltonian evaluation
of the right-hand side, and a phase-estimation linear solver for the Euler
update)."""

__version__ = "0.1.0"
