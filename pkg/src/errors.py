"""Error taxonomy shared by the numeric modules, the CLI and the MCP tools.

Every error carries the process exit code the command line reports for it.
"""


class ToolkitError(Exception):
    exit_code = 1


class InvalidArgumentError(ToolkitError, ValueError):
    exit_code = 2


class ConfigurationError(ToolkitError):
    exit_code = 2


class ParseError(ToolkitError):
    exit_code = 3

    def __init__(self, message: str, offset: int | None = None, path: str | None = None):
        self.offset = offset
        self.path = path
        where = []
        if path is not None:
            where.append(str(path))
        if offset is not None:
            where.append(f"byte {offset}")
        super().__init__(f"{message} ({', '.join(where)})" if where else message)


class NumericError(ToolkitError, ArithmeticError):
    exit_code = 4

    def __init__(self, message: str, parameter: str | None = None):
        self.parameter = parameter
        super().__init__(f"{message} [parameter: {parameter}]" if parameter else message)


class DegenerateBatchError(ToolkitError):
    """A batch without positives or without negatives."""
    exit_code = 5


class DegenerateSampleError(ToolkitError):
    """A minimal sample that does not determine a rigid transform."""
    exit_code = 5


class InsufficientMatchesError(ToolkitError):
    exit_code = 5


class InsufficientDataError(ToolkitError):
    exit_code = 5
