class ConfigurationError(ValueError):
    """Raised for unsupported dimensions, operators, or kernel settings."""


class QuadratureDegreeError(ValueError):
    pass


class DegenerateElementError(ValueError):
    """An element has a non-positive Jacobian determinant."""

    def __init__(self, cells, message=None):
        self.cells = list(cells)
        if message is None:
            shown = ", ".join(str(c) for c in self.cells[:10])
            more = "" if len(self.cells) <= 10 else f" (+{len(self.cells) - 10} more)"
            message = f"degenerate or inverted element(s): {shown}{more}"
        super().__init__(message)
