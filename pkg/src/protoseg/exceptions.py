"""Exception types raised by protoseg."""


class EmptyForegroundError(ValueError):
    """A mask that must contain foreground pixels is empty."""


class EmptyEpisodeError(EmptyForegroundError):
    """Every support shot of an episode has an empty mask."""


class InvariantError(RuntimeError):
    """An internal consistency check failed."""
