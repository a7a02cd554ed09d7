"""Exception hierarchy shared by every module."""


class GeoAdaptError(Exception):
    """Base class for all errors raised by geoadapt."""


class InvalidInputError(GeoAdaptError, ValueError):
    pass


class DimensionError(InvalidInputError):
    pass


class RankDeficiencyError(InvalidInputError):
    def __init__(self, achieved_rank, required_rank):
        self.achieved_rank = achieved_rank
        self.required_rank = required_rank
        super().__init__(
            f"data has rank {achieved_rank}, need at least {required_rank}"
        )


class DegenerateNormError(InvalidInputError):
    pass


class InvalidStateError(GeoAdaptError, RuntimeError):
    pass


class NumericalFailure(GeoAdaptError, ArithmeticError):
    pass


class SizeLimitError(InvalidInputError):
    pass


class ExhaustionError(GeoAdaptError, RuntimeError):
    pass


class ConfigError(GeoAdaptError):
    pass


class SchemaError(GeoAdaptError):
    pass
