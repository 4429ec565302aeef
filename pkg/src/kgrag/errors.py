"""Exception types shared across the package."""


class KgragError(Exception):
    """Base class for all package errors."""


# --- index loading / graph queries ---

class MissingFile(KgragError):
    def __init__(self, path):
        super().__init__(f"missing index file: {path}")
        self.path = str(path)


class MalformedRecord(KgragError):
    def __init__(self, path, line_number, reason):
        super().__init__(f"{path}:{line_number}: {reason}")
        self.path = str(path)
        self.line_number = line_number
        self.reason = reason


class DuplicateId(KgragError):
    def __init__(self, kind, record_id):
        super().__init__(f"duplicate {kind} id: {record_id!r}")
        self.kind = kind
        self.record_id = record_id


class DanglingReference(KgragError):
    def __init__(self, kind, record_id):
        super().__init__(f"reference to unknown {kind}: {record_id!r}")
        self.kind = kind
        self.record_id = record_id


class InvalidIndex(KgragError):
    """Structural invariant violation not covered by a more specific error."""


class UnknownEntity(KgragError):
    def __init__(self, entity_id):
        super().__init__(f"unknown entity: {entity_id!r}")
        self.entity_id = entity_id


class CommunitiesAlreadyPresent(KgragError):
    pass


# --- embedding ---

class EmptyText(KgragError):
    pass


class ProviderUnreachable(KgragError):
    pass


class DimensionMismatch(KgragError):
    pass


class ZeroVector(KgragError):
    pass


class NotEmbedded(KgragError):
    def __init__(self, kind, item_id):
        super().__init__(f"no embedding for {kind} {item_id!r}")
        self.kind = kind
        self.item_id = item_id


# --- retrieval ---

class EmptyStore(KgragError):
    pass


# --- generation / judging ---

class BudgetTooSmall(KgragError):
    pass


class ClientUnreachable(KgragError):
    pass


class EmptyCompletion(KgragError):
    pass


class UnexpectedPrompt(KgragError):
    pass


class ModelUnavailable(KgragError):
    pass


class JudgeUnreachable(KgragError):
    pass


class EmptyTokenization(KgragError):
    pass


# --- datasets ---

class EmptyDataset(KgragError):
    pass
