"""Exception types raised by the library."""


class KahlerLabError(Exception):
    """Base class for all library errors."""


class NotKahler(KahlerLabError):
    """The form omega + i dd^c phi fails the positivity margin."""

    def __init__(self, min_eigenvalue: float, floor: float | None = None):
        self.min_eigenvalue = float(min_eigenvalue)
        self.floor = floor
        msg = f"minimum metric eigenvalue {self.min_eigenvalue:.3e}"
        if floor is not None:
            msg += f" below floor {floor:.1e}"
        super().__init__(msg)


class NoConvergence(KahlerLabError):
    def __init__(self, residual: float, iterations: int, what: str = "solver"):
        self.residual = float(residual)
        self.iterations = int(iterations)
        super().__init__(f"{what} did not converge: residual {self.residual:.3e} "
                         f"after {self.iterations} iterations")


class Unsupported(KahlerLabError):
    pass


class IllPosedParams(KahlerLabError):
    """Cauchy problem requested for a metric with beta = gamma = 0."""


class WrongParams(KahlerLabError):
    pass


class PositivityLoss(KahlerLabError):
    def __init__(self, t: float, min_value: float):
        self.t = float(t)
        self.min_value = float(min_value)
        super().__init__(f"positivity lost at t={self.t:.6g} (min {self.min_value:.3e})")


class LeftPositiveCone(KahlerLabError):
    pass


class DegeneratePlane(KahlerLabError):
    def __init__(self, gram: float):
        self.gram = float(gram)
        super().__init__(f"tangent plane is degenerate (relative Gram determinant {gram:.3e})")


class IncompatibleSource(KahlerLabError):
    pass


class ShockDetected(KahlerLabError):
    def __init__(self, s: float, reason: str):
        self.s = float(s)
        super().__init__(f"shock detected at s={self.s:.6g}: {reason}")


class ConvexityLoss(KahlerLabError):
    pass


class ConfigError(KahlerLabError):
    def __init__(self, problems):
        if isinstance(problems, str):
            problems = [problems]
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))
