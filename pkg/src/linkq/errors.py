"""Exception hierarchy shared across the toolkit."""


class LinkqError(Exception):
    """Base class for all toolkit errors."""


# --- model backends ---

class BackendUnavailable(LinkqError):
    """A remote backend could not be reached, even after retries."""


class QuotaExceeded(BackendUnavailable):
    """A remote backend kept answering 429 until retries ran out."""


class MalformedResponse(LinkqError):
    """The backend answered, but not with a usable completion payload."""


class AuthError(LinkqError):
    """The backend rejected our credentials; retrying will not help."""


class ScriptedMiss(MalformedResponse):
    """No scripted entry matched the prompt handed to a scripted backend."""


# --- agent ---

class InvalidQuery(LinkqError):
    """The query violates a precondition (for example, empty text)."""


class MalformedReaderOutput(LinkqError):
    """The disambiguation completion had no parseable answer block."""


# --- retrieval ---

class DuplicateTitle(LinkqError):
    """Two corpus documents share the same normalized title."""


class EmptyCorpus(LinkqError):
    """An index cannot be built from zero documents."""


class NotFound(LinkqError):
    """No stored document matches the requested entity."""


class IndexFormatError(LinkqError):
    """A persisted index is corrupt or has an unsupported format version."""


# --- evaluation ---

class EmptyEvaluation(LinkqError):
    """Aggregation over zero queries is undefined."""


# --- datasets / pipelines ---

class ParseError(LinkqError):
    """A dataset or fixture file line could not be parsed."""


class MixedNamespace(LinkqError):
    """Gold entities within one record mix identifier namespaces."""


# --- configuration ---

class ConfigError(LinkqError):
    """The layered CLI configuration is inconsistent or unreadable."""
