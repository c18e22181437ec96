from __future__ import annotations

import numpy as np


def batch_of(ds, idx=None, width=None):
    """Tokens/mask for a subset padded to ``width`` (default: subset max)."""
    idx = np.arange(len(ds)) if idx is None else np.asarray(idx)
    lens = ds.lengths[idx]
    w = int(lens.max()) if width is None else width
    tok = np.zeros((len(idx), w), dtype=np.int64)
    n = min(w, ds.tokens.shape[1])
    tok[:, :n] = ds.tokens[idx, :n]
    mask = np.arange(w)[None, :] < lens[:, None]
    tok[~mask] = 0
    return tok, mask


# acceptance outcomes, printed by the terminal summary hook in conftest
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def record(criterion: int, ok: bool, detail: str) -> None:
    ACCEPTANCE[criterion] = (bool(ok), detail)
    print(f"criterion {criterion}: {'PASS' if ok else 'FAIL'} ({detail})", flush=True)
