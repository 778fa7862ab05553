"""Independent oracles shared by the test modules.

These deliberately avoid the library's own code paths: finite differences
for gradients, explicit enumeration for ranking metrics and feature-map
grouping.
"""

import math

import numpy as np

REL_TOL = 1e-4
ABS_FLOOR = 1e-6


def finite_difference(f, array: np.ndarray, eps: float = 1e-6) -> np.ndarray:
    """Central finite differences of scalar-valued f w.r.t. every entry."""
    grad = np.zeros_like(array, dtype=np.float64)
    flat = array.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        f_plus = f()
        flat[i] = orig - eps
        f_minus = f()
        flat[i] = orig
        gflat[i] = (f_plus - f_minus) / (2.0 * eps)
    return grad


def grad_close(analytic: np.ndarray, numeric: np.ndarray,
               rel: float = REL_TOL, floor: float = ABS_FLOOR):
    """Check |a - n| <= max(rel * max(|a|,|n|), floor) elementwise."""
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    diff = np.abs(a - n)
    bound = np.maximum(rel * np.maximum(np.abs(a), np.abs(n)), floor)
    ok = diff <= bound
    if not ok.all():
        worst = np.unravel_index(np.argmax(diff - bound), diff.shape)
        raise AssertionError(
            f"gradient mismatch at {worst}: analytic={a[worst]!r} "
            f"numeric={n[worst]!r} diff={diff[worst]:.3e} bound={bound[worst]:.3e}"
        )
    return True


def average_precision_bruteforce(ranked_relevance) -> float:
    """AP over an explicit ranking, by direct double loop over ranks."""
    n_rel = sum(1 for r in ranked_relevance if r)
    assert n_rel > 0
    total = 0.0
    for rank, rel in enumerate(ranked_relevance, start=1):
        if not rel:
            continue
        hits = 0
        for r2 in ranked_relevance[:rank]:
            if r2:
                hits += 1
        total += hits / rank
    return total / n_rel


def reciprocal_rank_bruteforce(ranked_relevance) -> float:
    for rank, rel in enumerate(ranked_relevance, start=1):
        if rel:
            return 1.0 / rank
    raise AssertionError("no relevant candidate")


def word_grouping_bruteforce(tokens, m):
    """Group a list into maps of m slots by plain list slicing."""
    maps = []
    for start in range(0, len(tokens), m):
        chunk = list(tokens[start:start + m])
        pad = [None] * (m - len(chunk))
        maps.append(chunk + pad)
    return maps


def segment_grouping_bruteforce(tokens, d, m):
    """Segment then group, by plain slicing; pads with 0 / None."""
    segments = []
    for start in range(0, len(tokens), d):
        seg = list(tokens[start:start + d])
        seg += [0] * (d - len(seg))
        segments.append(seg)
    maps = []
    for start in range(0, len(segments), m):
        chunk = segments[start:start + m]
        pad = [None] * (m - len(chunk))
        maps.append(chunk + pad)
    return maps


def gaussian_mi(rho: float) -> float:
    """Analytic MI of a bivariate normal with correlation rho, in nats."""
    return -0.5 * math.log(1.0 - rho * rho)
