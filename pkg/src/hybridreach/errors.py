class DefinitionError(Exception):
    """A system definition could not be turned into a valid object."""


class SimError(Exception):
    pass


class EmptyMapValue(Exception):
    pass
