"""Reference implementations used only by the tests.

Each one is written differently from the code it checks (integer
cross-multiplication instead of fractions, explicit index loops instead of
reshapes, full DP matrices instead of rolling rows).
"""

from __future__ import annotations

import numpy as np


def grid_oracle(h: int, w: int, s: int, v: int) -> tuple[int, int]:
    """Exhaustive crop-grid search with integer-only arithmetic."""
    candidates = []
    for r in range(1, s + 1):
        for c in range(1, s + 1):
            if r * c > s:
                continue
            # scale = min(r*v/h, c*v/w); compare r*v*w against c*v*h
            if r * v * w <= c * v * h:
                sh, sw = r * v, (w * r * v) // h
            else:
                sh, sw = (h * c * v) // w, c * v
            eff = min(sh * sw, h * w)
            waste = r * v * c * v - eff
            candidates.append(((-eff, waste, r * c, abs(r - c), r), (r, c)))
    candidates.sort()
    return candidates[0][1]


def shuffle_oracle(x: np.ndarray, n: int) -> np.ndarray:
    """Pixel shuffle by explicit index mapping."""
    s = int(round(n ** 0.5))
    h, w, d = x.shape
    out = np.empty((h // s, w // s, n * d), dtype=x.dtype)
    for Y in range(h // s):
        for X in range(w // s):
            k = 0
            for dy in range(s):
                for dx in range(s):
                    out[Y, X, k * d : (k + 1) * d] = x[Y * s + dy, X * s + dx]
                    k += 1
    return out


def reassemble_oracle(tiles, rows: int, cols: int) -> np.ndarray:
    v = tiles[0].shape[0]
    canvas = np.zeros((rows * v, cols * v, tiles[0].shape[2]), dtype=tiles[0].dtype)
    for k, t in enumerate(tiles):
        r, c = divmod(k, cols)
        canvas[r * v : (r + 1) * v, c * v : (c + 1) * v] = t
    return canvas


def lev_oracle(a: str, b: str) -> int:
    """Full-matrix Wagner-Fischer."""
    D = [[0] * (len(b) + 1) for _ in range(len(a) + 1)]
    for i in range(len(a) + 1):
        D[i][0] = i
    for j in range(len(b) + 1):
        D[0][j] = j
    for i in range(1, len(a) + 1):
        for j in range(1, len(b) + 1):
            D[i][j] = min(D[i - 1][j] + 1, D[i][j - 1] + 1, D[i - 1][j - 1] + (0 if a[i - 1] == b[j - 1] else 1))
    return D[len(a)][len(b)]


def anls_oracle(pred: str, golds, tau: float = 0.5) -> float:
    best = 0.0
    p = pred.strip().lower()
    for g in golds:
        g = g.strip().lower()
        if not p and not g:
            sim = 1.0
        else:
            sim = 1.0 - lev_oracle(p, g) / max(len(p), len(g))
        best = max(best, sim)
    return best if best >= tau else 0.0


def merge_tables(a, b):
    """Rebuild a table from two halves; detects which axis was split."""
    if a.header == b.header:
        return a.header, a.rows + b.rows
    return a.header + b.header, tuple(ra + rb for ra, rb in zip(a.rows, b.rows))
