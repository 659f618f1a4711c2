"""
Exception hierarchy for the TRACE nowcasting toolkit
"""

from typing import Optional


class TraceError(Exception):
    """Base class for every error raised by this package"""


class DimensionError(TraceError, ValueError):
    """Operand shapes are incompatible for the requested operation"""

    def __init__(self, op: str, *shapes):
        self.op = op
        self.shapes = shapes
        rendered = " and ".join(str(tuple(s)) for s in shapes)
        super().__init__(f"{op}: incompatible shapes {rendered}")


class ContractError(TraceError, ValueError):
    """A precondition of an operation was violated by the caller"""


class ConfigError(TraceError, ValueError):
    """Invalid configuration value or config file"""


class ParseError(TraceError, ValueError):
    """Malformed record in a trajectory or vocabulary file"""

    def __init__(self, message: str, line_no: Optional[int] = None, field: Optional[str] = None):
        self.line_no = line_no
        self.field = field
        location = []
        if line_no is not None:
            location.append(f"line {line_no}")
        if field:
            location.append(f"field '{field}'")
        prefix = f"{', '.join(location)}: " if location else ""
        super().__init__(f"{prefix}{message}")


class SchemaError(ParseError):
    """Record parses but violates a domain invariant (e.g. flag on a non-lab event)"""


class VocabularyError(TraceError, ValueError):
    """Token id or token outside the vocabulary"""


class DataError(TraceError, ValueError):
    """Dataset is empty or too small for the requested operation"""


class MetricError(TraceError, ValueError):
    """Metric is undefined for the given inputs"""


class CheckpointError(TraceError, ValueError):
    """Checkpoint file is corrupt or has an unsupported format version"""


class NumericError(TraceError, ArithmeticError):
    """Training produced a non-finite loss or gradient"""

    def __init__(self, message: str, step: Optional[int] = None, block: Optional[str] = None):
        self.step = step
        self.block = block
        super().__init__(message)
