"""Exception types shared across the package."""


class KgexpandError(Exception):
    """Base class for all package errors."""


class ParseError(KgexpandError, ValueError):
    """Malformed input file. Carries enough context to locate the problem."""

    def __init__(self, message, path=None, line=None, field=None):
        detail = message
        where = []
        if path is not None:
            where.append(str(path))
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field {field!r}")
        if where:
            detail = f"{message} ({', '.join(where)})"
        super().__init__(detail)
        self.path = path
        self.line = line
        self.field = field


class DomainError(KgexpandError, ValueError):
    """Operation called outside its stated precondition."""


class MissingEmbeddingError(KgexpandError, KeyError):
    """Lookup of a concept that has no embedding; never silently zero."""

    def __init__(self, concept_id):
        super().__init__(concept_id)
        self.concept_id = concept_id

    def __str__(self):
        return f"no embedding for concept {self.concept_id!r}"


class StageDependencyError(KgexpandError, RuntimeError):
    """A pipeline stage input artifact is missing."""

    def __init__(self, artifact, message=None):
        super().__init__(message or f"missing stage artifact: {artifact}")
        self.artifact = artifact
