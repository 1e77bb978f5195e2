class IcicertError(Exception):
    """Base class of every numerical failure raised by icicert."""


class ConvexityError(IcicertError):
    def __init__(self, index: int, msg: str | None = None):
        """
        Raised when discrete slopes decrease.
        :param index: Index of the first breakpoint at which the slope decreases
        :param msg: Optional message
        """
        self.index = index
        super().__init__(msg or f'Input is not convex: slope decreases at breakpoint {index}')


class ImproperFunctionError(IcicertError):
    """Raised for functions that are +inf everywhere, have a split finite part, or whose result would be -inf."""


class LevelUnreachableError(IcicertError):
    def __init__(self, level: float, span_end: float):
        self.level = level
        self.span_end = span_end
        super().__init__(f'Level {level!r} unreachable on grid ending at {span_end!r}; widen the grid')


class DistributionError(IcicertError):
    """Raised for tail exponents violating N(0) = 0, monotonicity, or decay."""


class QuadratureError(IcicertError):
    def __init__(self, msg: str, truncation_point: float, last_value: float):
        self.truncation_point = truncation_point
        self.last_value = last_value
        super().__init__(f'{msg} (truncation point {truncation_point!r}, last log-density {last_value!r})')


class PhiConstructionError(IcicertError):
    """Raised when the Cramer branch of the cost exceeds x^2 on [0, 1]."""


class CrossCheckError(IcicertError):
    def __init__(self, deviation: float, location: float):
        self.deviation = deviation
        self.location = location
        super().__init__(f'Sweep and conjugate infimum convolutions differ by {deviation!r} at x = {location!r}')


class GridSpanError(IcicertError):
    """Raised when a brute-force infimum stays on the grid boundary after all widenings."""


class PrecisionError(IcicertError):
    def __init__(self, half_width: float, estimate: float, n_samples: int):
        self.half_width = half_width
        self.estimate = estimate
        self.n_samples = n_samples
        super().__init__(f'Confidence half-width {half_width!r} of estimate {estimate!r} still above target after '
                         f'{n_samples} samples')


class ConfigError(IcicertError):
    def __init__(self, problems: list[str]):
        """
        Collects every invalid field of a run configuration.
        :param problems: One message per offending field
        """
        self.problems = list(problems)
        super().__init__('Invalid configuration: ' + '; '.join(self.problems))


class GridFileError(IcicertError):
    def __init__(self, path: str, row: int, msg: str):
        self.path = path
        self.row = row
        super().__init__(f'{path}, row {row}: {msg}')
