"""Exception hierarchy for the toolkit."""


class SpaceTriggerError(Exception):
    """Base class for all toolkit errors."""


class DatasetParseError(SpaceTriggerError):
    """A file failed to parse as the expected layout.

    ``offset`` is the character offset of the syntax error when the
    underlying JSON decoder reports one, else None.
    """

    def __init__(self, message: str, path=None, offset=None):
        super().__init__(message)
        self.path = path
        self.offset = offset

    def __str__(self):
        base = super().__str__()
        parts = []
        if self.path is not None:
            parts.append(f"file={self.path}")
        if self.offset is not None:
            parts.append(f"offset={self.offset}")
        return f"{base} ({', '.join(parts)})" if parts else base


class DatasetValidationError(SpaceTriggerError):
    """Data violates a dataset invariant. ``ids`` names the offenders."""

    def __init__(self, message: str, ids=()):
        self.ids = tuple(ids)
        if self.ids:
            shown = ", ".join(str(i) for i in self.ids[:20])
            more = "" if len(self.ids) <= 20 else f" (+{len(self.ids) - 20} more)"
            message = f"{message}: {shown}{more}"
        super().__init__(message)


class TriggerSpecError(SpaceTriggerError):
    """A trigger spec file or object is invalid. ``location`` points at the field."""

    def __init__(self, message: str, location: str | None = None):
        super().__init__(f"{location}: {message}" if location else message)
        self.location = location


class PoisoningError(SpaceTriggerError):
    """An attack cannot be applied as specified."""


class PoisoningConflictError(PoisoningError):
    """Two pairs demand different actions on the same annotation."""

    def __init__(self, message: str, annotation_id: int):
        super().__init__(message)
        self.annotation_id = annotation_id


class EvaluationError(SpaceTriggerError):
    """Evaluation inputs are malformed."""


class SynthesisError(SpaceTriggerError):
    """The synthetic generator cannot realize the requested configuration."""
