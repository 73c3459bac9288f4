import hashlib
import sys

import numpy as np

from . import config


def log(msg):
    if config.log_experiments:
        print(msg)
        sys.stdout.flush()


def derive_seed(master, *key):
    """Expand a master seed into an independent seed for ``key``.

    ``key`` is any sequence of ints and strings, e.g.
    ``('phase1', 'death', 3, 'split')``. Strings are folded into ints
    with sha1, so the same key always yields the same seed across
    processes and runs (unlike the salted builtin ``hash``).
    """
    words = []
    for part in key:
        if isinstance(part, str):
            digest = hashlib.sha1(part.encode('utf-8')).digest()
            part = int.from_bytes(digest[:8], 'little')
        words.append(int(part) & 0xFFFFFFFFFFFFFFFF)
    ss = np.random.SeedSequence(int(master) & 0xFFFFFFFFFFFFFFFF,
                                spawn_key=tuple(words))
    return int(ss.generate_state(1, dtype=np.uint32)[0])
