"""Exception types shared across the package.

Each error carries the CLI exit code it maps to, so the command layer can
translate failures without a lookup table.
"""


class DarkBannerError(Exception):
    exit_code = 1


class MissingColumn(DarkBannerError):
    exit_code = 2

    def __init__(self, name):
        super().__init__(f"input is missing required column {name!r}")
        self.name = name


class MissingAnnotation(DarkBannerError, ValueError):
    def __init__(self, pattern):
        super().__init__(f"reviewer annotation missing for pattern {pattern!r}")
        self.pattern = pattern


class InvalidFraction(DarkBannerError, ValueError):
    pass


class InvalidLexicon(DarkBannerError, ValueError):
    pass


class ProviderUnavailable(DarkBannerError):
    pass


class TooFewPoints(DarkBannerError, ValueError):
    exit_code = 3


class DimensionMismatch(DarkBannerError, ValueError):
    pass


class EmptyData(DarkBannerError, ValueError):
    pass


class ShapeMismatch(DarkBannerError, ValueError):
    pass


class InvalidHyperparameter(DarkBannerError, ValueError):
    pass


class UnfittedModel(DarkBannerError):
    pass


class TooFewSamples(DarkBannerError, ValueError):
    pass


class EmptyInput(DarkBannerError, ValueError):
    pass


class SplitMismatch(DarkBannerError):
    exit_code = 4


class OverwriteRefused(DarkBannerError):
    exit_code = 5


class OutputLocked(DarkBannerError):
    exit_code = 5
