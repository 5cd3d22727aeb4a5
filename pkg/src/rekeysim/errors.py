"""Shared exception types."""


class RekeysimError(Exception):
    """Base class for all errors raised by this package."""


class RootHasNoParent(RekeysimError):
    pass


class EmptyGroup(RekeysimError):
    pass


class MemberNotFound(RekeysimError):
    pass


class AlreadyMember(RekeysimError):
    pass


class NodeNotFound(RekeysimError):
    pass


class NotDecryptable(RekeysimError):
    """The decryptor does not hold the wrapping key; the message is ignored."""


class InvalidParams(RekeysimError):
    pass


class InvalidScenario(RekeysimError):
    pass


class NotPredictable(RekeysimError):
    """Closed-form cost formulas only apply to full, balanced configurations."""


class InternalInconsistency(RekeysimError):
    """Controller and member views diverged; always a bug, never an input error."""
