import hashlib

import numpy as np


def derive_seed(root: int, *names: str) -> int:
    """
    Именованный подсид из корневого сида.

    Один и тот же (root, names) всегда дает один и тот же сид,
    поэтому каждый компонент воспроизводим отдельно.
    """
    key = ':'.join([str(int(root)), *names]).encode()
    return int.from_bytes(hashlib.sha256(key).digest()[:4], 'little')


def make_rng(root: int, *names: str) -> np.random.Generator:
    return np.random.default_rng(derive_seed(root, *names))
