"""Independent brute-force references used by the unit and acceptance tests.

Everything here is written for clarity rather than speed and shares no code
with the package beyond plain data.
"""

from __future__ import annotations

from fractions import Fraction
from itertools import combinations

import numpy as np


def midpoint(a: float, b: float) -> float:
    mid = (a + b) / 2.0
    return a if mid >= b else mid


def gini_exact(labels) -> Fraction:
    n = len(labels)
    counts = {}
    for v in labels:
        counts[v] = counts.get(v, 0) + 1
    return 1 - sum(Fraction(c, n) ** 2 for c in counts.values())


def brute_gini_split(X, y, features):
    """(feature, threshold, impurity) minimising weighted child Gini, ties to the
    lower feature then the lower threshold; ``None`` when nothing separates."""
    X = np.asarray(X, dtype=float)
    n = len(y)
    if len(set(int(v) for v in y)) <= 1:
        return None
    best = None
    for f in sorted(features):
        values = sorted(set(X[:, f].tolist()))
        for a, b in zip(values[:-1], values[1:]):
            thr = midpoint(a, b)
            left = [int(y[i]) for i in range(n) if X[i, f] <= thr]
            right = [int(y[i]) for i in range(n) if X[i, f] > thr]
            imp = Fraction(len(left), n) * gini_exact(left) + Fraction(len(right), n) * gini_exact(right)
            if best is None or imp < best[2]:
                best = (f, thr, imp)
    return best


def brute_gain_split(X, g, h, lam, gamma):
    """(feature, threshold, gain) maximising the second-order gain in exact
    rational arithmetic, ties to the lower feature then the lower threshold."""
    X = np.asarray(X, dtype=float)
    n = X.shape[0]
    gF = [Fraction(float(v)) for v in g]
    hF = [Fraction(float(v)) for v in h]
    lamF, gammaF = Fraction(lam), Fraction(gamma)
    G, H = sum(gF), sum(hF)
    best = None
    for f in range(X.shape[1]):
        values = sorted(set(X[:, f].tolist()))
        for a, b in zip(values[:-1], values[1:]):
            thr = midpoint(a, b)
            GL = sum(gF[i] for i in range(n) if X[i, f] <= thr)
            HL = sum(hF[i] for i in range(n) if X[i, f] <= thr)
            GR, HR = G - GL, H - HL
            gain = (GL * GL / (HL + lamF) + GR * GR / (HR + lamF) - G * G / (H + lamF)) / 2 - gammaF
            if best is None or gain > best[2]:
                best = (f, thr, gain)
    return best


def brute_partial_neighbours(ref_values, ref_mask, row, row_mask, k, skip=None):
    """k nearest reference rows by rescaled partial Manhattan distance,
    ties to the lower index; rows sharing no observed coordinate are never used."""
    width = len(row)
    scored = []
    for j in range(len(ref_values)):
        if j == skip:
            continue
        shared = [c for c in range(width) if not ref_mask[j][c] and not row_mask[c]]
        if not shared:
            continue
        d = sum(abs(ref_values[j][c] - row[c]) for c in shared) * width / len(shared)
        scored.append((d, j))
    scored.sort()
    return [j for _, j in scored[:k]]


def find_interpolation(point, originals, tol=1e-9):
    """Return (i, j, lam) with point == originals[i] + lam * (originals[j] - originals[i])
    for some lam in [0, 1], searching every ordered pair, or ``None``."""
    P = np.asarray(point, dtype=float)
    O = np.asarray(originals, dtype=float)
    for i, j in combinations(range(len(O)), 2):
        for a, b in ((i, j), (j, i)):
            d = O[b] - O[a]
            denom = float(d @ d)
            if denom == 0.0:
                if np.max(np.abs(P - O[a])) <= tol:
                    return a, b, 0.0
                continue
            lam = float((P - O[a]) @ d) / denom
            if -tol <= lam <= 1 + tol and np.max(np.abs(O[a] + lam * d - P)) <= tol:
                return a, b, lam
    return None


def brute_manhattan_1nn(train_X, train_y, q):
    best = None
    for i, row in enumerate(train_X):
        d = sum(abs(float(a) - float(b)) for a, b in zip(row, q))
        if best is None or d < best[0]:
            best = (d, i)
    return train_y[best[1]]


def random_string(rng, alphabet="abcdefgh ", lo=3, hi=25) -> str:
    n = int(rng.integers(lo, hi + 1))
    return "".join(rng.choice(list(alphabet), size=n))


def trigram_set(s: str, n: int = 3) -> set[str]:
    s = " ".join(s.lower().split())
    if len(s) < n:
        return {s + " " * (n - len(s))}
    return {s[i : i + n] for i in range(len(s) - n + 1)}
