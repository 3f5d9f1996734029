"""Exception types shared across the package."""


class CircuitError(ValueError):
    """Malformed circuit structure or a bad input to a circuit pass."""


class PolynomialError(ValueError):
    """Invalid monomial, polynomial, or factor table."""


class SizeLimitError(ValueError):
    """An enumeration or dense-table cap was exceeded.

    The cap that was hit is kept in ``limit`` so callers (the CLI in
    particular) can report it.
    """

    def __init__(self, message: str, limit: int):
        super().__init__(message)
        self.limit = limit


class UAIParseError(ValueError):
    """A ``.uai`` file could not be parsed.

    Attributes:
        code: short machine-readable failure class (``bad_header``,
            ``bad_cardinality``, ...).
        position: index of the offending whitespace-separated token.
    """

    def __init__(self, code: str, position: int, message: str):
        super().__init__(f"[{code}] token {position}: {message}")
        self.code = code
        self.position = position
