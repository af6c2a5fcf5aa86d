"""Exception types raised across the package."""


class ParameterError(ValueError):
    """Invalid physical or numerical parameters."""


class DegeneracyError(ArithmeticError):
    """The mode matrix lost full column rank during normalization."""


class ConsistencyError(ArithmeticError):
    """An internal numerical invariant (Hermiticity, trace, ...) was violated."""


class DivergenceError(ArithmeticError):
    """A closed-form expression was evaluated at a divergent point."""


class FitError(ValueError):
    """Input data unsuitable for the requested fit."""


class NoiseDesyncError(RuntimeError):
    """Two engines sharing a noise stream fell out of step."""


class TrajectoryAborted(RuntimeError):
    """A trajectory hit a numerical failure; carries a diagnostic string."""

    def __init__(self, trajectory_id, step, diagnostic):
        super().__init__(f"trajectory {trajectory_id} aborted at step {step}: {diagnostic}")
        self.trajectory_id = trajectory_id
        self.step = step
        self.diagnostic = diagnostic


class EnsembleFailure(RuntimeError):
    """Too many trajectories of an ensemble aborted."""
