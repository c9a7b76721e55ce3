"""Named seed derivation: every random stream comes from one root seed."""
import hashlib

_MASK = (1 << 64) - 1


def derive_seed(seed: int, *names) -> int:
    """``seed`` xor a stable 64-bit hash of ``names`` (independent of PYTHONHASHSEED)."""
    tag = "/".join(str(n) for n in names).encode()
    h = int.from_bytes(hashlib.sha256(tag).digest()[:8], "little")
    return (int(seed) ^ h) & _MASK
