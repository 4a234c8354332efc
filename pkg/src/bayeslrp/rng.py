import zlib

import numpy as np


def substream(seed: int, name: str) -> np.random.Generator:
    """Independent generator for a named consumer of a global seed."""
    return np.random.default_rng([int(seed), zlib.crc32(name.encode())])
