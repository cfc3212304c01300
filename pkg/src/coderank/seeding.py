import zlib

import numpy as np


def stage_seed(root: int, stage: str) -> int:
    """Independent 32-bit seed for a named pipeline stage, derived from one root seed."""
    ss = np.random.SeedSequence([int(root) & 0xFFFFFFFF, zlib.crc32(stage.encode("utf-8"))])
    return int(ss.generate_state(1)[0])
