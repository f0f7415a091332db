"""Independent brute-force implementations used only as test oracles.

Everything here is written the slow, obvious way (loops, explicit
enumeration, exhaustive threshold sweeps) and deliberately shares no
code with the library paths it checks.
"""

import numpy as np


def brute_micro_f1(pred, true):
    """Pooled-count micro F1 via explicit per-class loops."""
    pred = np.asarray(pred)
    true = np.asarray(true)
    if pred.ndim == 1:
        classes = sorted(set(pred.tolist()) | set(true.tolist()))
        tp = fp = fn = 0
        for c in classes:
            for p, t in zip(pred, true):
                if p == c and t == c:
                    tp += 1
                elif p == c and t != c:
                    fp += 1
                elif p != c and t == c:
                    fn += 1
    else:
        tp = fp = fn = 0
        for prow, trow in zip(pred, true):
            for p, t in zip(prow, trow):
                if p == 1 and t == 1:
                    tp += 1
                elif p == 1 and t == 0:
                    fp += 1
                elif p == 0 and t == 1:
                    fn += 1
    denom = 2 * tp + fp + fn
    return 0.0 if denom == 0 else 2 * tp / denom


def brute_binary_f1(pred, true):
    tp = sum(1 for p, t in zip(pred, true) if p == 1 and t == 1)
    fp = sum(1 for p, t in zip(pred, true) if p == 1 and t != 1)
    fn = sum(1 for p, t in zip(pred, true) if p != 1 and t == 1)
    denom = 2 * tp + fp + fn
    return 0.0 if denom == 0 else 2 * tp / denom


def brute_auprc(scores, labels):
    """Exhaustive threshold sweep; equal scores retrieved together."""
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels)
    n_pos = int(np.sum(labels == 1))
    thresholds = sorted(set(scores.tolist()), reverse=True)
    area = 0.0
    recall_prev = 0.0
    for th in thresholds:
        retrieved = scores >= th
        tp = int(np.sum(retrieved & (labels == 1)))
        precision = tp / int(retrieved.sum())
        recall = tp / n_pos
        area += (recall - recall_prev) * precision
        recall_prev = recall
    return area


def brute_median(values):
    vals = sorted(float(v) for v in values)
    n = len(vals)
    if n == 0:
        return None
    if n % 2 == 1:
        return vals[n // 2]
    return 0.5 * (vals[n // 2 - 1] + vals[n // 2])


def brute_ranks(values):
    """Average ranks (1-based) with ties sharing the mean rank."""
    values = list(map(float, values))
    order = sorted(range(len(values)), key=lambda i: values[i])
    ranks = [0.0] * len(values)
    i = 0
    while i < len(order):
        j = i
        while j + 1 < len(order) and values[order[j + 1]] == values[order[i]]:
            j += 1
        avg = (i + j) / 2 + 1
        for idx in order[i:j + 1]:
            ranks[idx] = avg
        i = j + 1
    return np.array(ranks)


def brute_spearman(x, y):
    rx, ry = brute_ranks(x), brute_ranks(y)
    rx = rx - rx.mean()
    ry = ry - ry.mean()
    return float(np.sum(rx * ry) / np.sqrt(np.sum(rx**2) * np.sum(ry**2)))


def brute_discard_errors(uncertainty, losses, fractions):
    """Retained-set mean losses via an explicit sort with the tie rule."""
    n = len(losses)
    order = sorted(range(n), key=lambda i: (-uncertainty[i], i))
    errors = []
    for q in fractions:
        drop = int(np.ceil(q * n))
        kept = order[drop:]
        errors.append(sum(losses[i] for i in kept) / len(kept))
    return errors


def brute_mf_di(errors):
    steps = len(errors) - 1
    mf = sum(1 for i in range(steps) if errors[i] >= errors[i + 1]) / steps
    di = sum(errors[i] - errors[i + 1] for i in range(steps)) / steps
    return mf, di


def brute_argmax_sim(means, scales, n_draws, rng):
    """Monte Carlo argmax frequencies for independent Gaussian utilities."""
    u = np.asarray(means) + np.asarray(scales) * rng.standard_normal((n_draws, len(means)))
    winners = np.argmax(u, axis=1)
    return np.bincount(winners, minlength=len(means)) / n_draws
