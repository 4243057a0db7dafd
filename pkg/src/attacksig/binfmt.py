"""Shared pieces of the little-endian checkpoint containers."""


class CheckpointError(ValueError):
    """Unreadable checkpoint; ``expected``/``found`` are set for version mismatches."""

    def __init__(self, msg, expected=None, found=None):
        super().__init__(msg)
        self.expected = expected
        self.found = found


def take(buf: bytes, pos: int, n: int, what: str):
    """Return ``(buf[pos:pos+n], pos+n)``, raising on a short buffer."""
    if pos + n > len(buf):
        raise CheckpointError(f"truncated checkpoint while reading {what}")
    return buf[pos:pos + n], pos + n
