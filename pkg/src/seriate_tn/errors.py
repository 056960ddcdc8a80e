"""Exception hierarchy.

Every error carries an ``exit_code`` so the CLI can map failures to a
category without inspecting messages.
"""


class SeriationError(Exception):
    exit_code = 1


class ValidationError(SeriationError, ValueError):
    exit_code = 3


class DomainError(ValidationError):
    """A parameter lies outside its mathematical domain."""


class ParseError(ValidationError):
    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class CapacityError(SeriationError):
    exit_code = 4


class IsolatedVertexError(ValidationError):
    def __init__(self, vertex):
        super().__init__(f"vertex {vertex} has zero degree; normalized Laplacian undefined")
        self.vertex = vertex


class DisconnectedGraphError(ValidationError):
    """Raised when a Fiedler vector is requested for a disconnected graph.

    ``components`` holds the vertex partition so callers can seriate each
    component on its own.
    """

    def __init__(self, components, lambda1=None):
        msg = f"graph has {len(components)} connected components"
        if lambda1 is not None:
            msg += f" (lambda1={lambda1:.3e})"
        super().__init__(msg)
        self.components = components
        self.lambda1 = lambda1


class SupportError(ValidationError):
    def __init__(self, sample, index=None):
        bits = "".join(str(int(b)) for b in sample)
        where = f" (sample {index})" if index is not None else ""
        super().__init__(f"model assigns ~zero probability to {bits}{where}")
        self.sample = bits
        self.index = index


class DivergenceError(SeriationError):
    exit_code = 5

    def __init__(self, epoch, value):
        super().__init__(f"non-finite loss {value!r} at epoch {epoch}")
        self.epoch = epoch
        self.value = value
