"""Exception hierarchy. The CLI maps each class to its own exit code."""


class FeatstabError(Exception):
    exit_code = 1


class ConfigError(FeatstabError, ValueError):
    exit_code = 2


class DataError(FeatstabError, ValueError):
    exit_code = 3


class NumericError(FeatstabError, ArithmeticError):
    exit_code = 4
