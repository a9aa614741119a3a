"""Independent reference implementations used to check the real ones.

These stay deliberately naive: exhaustive enumeration and direct counting,
no shared code with the package internals.
"""

import itertools

import numpy as np


def ctc_loss_by_enumeration(log_probs: np.ndarray, target, blank: int) -> float:
    """Sum path probabilities over every frame-label sequence that collapses
    to `target` (remove repeats, then blanks); return the negative log."""
    log_probs = np.asarray(log_probs, dtype=np.float64)
    t_steps, vocab = log_probs.shape
    target = list(target)
    total = 0.0
    for path in itertools.product(range(vocab), repeat=t_steps):
        collapsed = []
        prev = None
        for symbol in path:
            if symbol != prev:
                collapsed.append(symbol)
            prev = symbol
        collapsed = [s for s in collapsed if s != blank]
        if collapsed == target:
            total += float(np.exp(sum(log_probs[t, s] for t, s in enumerate(path))))
    if total == 0.0:
        return float("inf")
    return -float(np.log(total))


def eer_by_sweep(scores, labels) -> float:
    """Direct-counting threshold sweep with the same crossing definition as
    the package: accept when score >= threshold, interpolate between the
    adjacent operating points where false-accept meets false-reject."""
    scores = [float(s) for s in scores]
    labels = [bool(l) for l in labels]
    n_pos = sum(1 for l in labels if l)
    n_neg = sum(1 for l in labels if not l)
    thresholds = [float("-inf")] + sorted(set(scores)) + [float("inf")]
    prev_far = prev_frr = None
    for threshold in thresholds:
        far_count = sum(1 for s, l in zip(scores, labels) if not l and s >= threshold)
        frr_count = sum(1 for s, l in zip(scores, labels) if l and s < threshold)
        far = far_count / n_neg
        frr = frr_count / n_pos
        if far <= frr:
            if far == frr:
                return far
            a = prev_far - prev_frr
            b = far - frr
            t = a / (a - b)
            return prev_far + t * (far - prev_far)
        prev_far, prev_frr = far, frr
    return prev_far


def finite_difference(fn, array: np.ndarray, h: float = 1e-6) -> np.ndarray:
    """Central differences of scalar fn() with respect to `array`, in place."""
    grad = np.zeros(array.shape, dtype=np.float64)
    flat = array.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        step = h * (1.0 + abs(float(orig)))
        flat[i] = orig + step
        up = fn()
        flat[i] = orig - step
        down = fn()
        flat[i] = orig
        gflat[i] = (up - down) / (2.0 * step)
    return grad
