"""Error types shared across the pipeline, mapped to CLI exit codes."""


class PolyprobeError(Exception):
    """Base error. exit_code 5 = internal."""

    exit_code = 5


class InputError(PolyprobeError):
    """Malformed or missing input data (files, records, requests)."""

    exit_code = 2


class ScorerError(PolyprobeError):
    """Scorer unavailable or protocol violation."""

    exit_code = 3


class StateMismatchError(PolyprobeError):
    """Persisted state does not match the current inputs (e.g. pack hash)."""

    exit_code = 4
