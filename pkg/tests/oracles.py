"""Independent reference implementations used to cross-check the package.

Plain Python loops over samples and exact fractions, sharing no code with
the library.
"""

from fractions import Fraction


def brute_force_metrics(labels, probs):
    """Per-class and weighted P/R/F1 plus Top-1, from one pass over samples."""
    K = len(probs[0])
    tp = [0] * K
    fp = [0] * K
    fn = [0] * K
    support = [0] * K
    correct = 0
    for y, row in zip(labels, probs):
        # first maximum wins
        best = 0
        for k in range(1, K):
            if row[k] > row[best]:
                best = k
        support[y] += 1
        if best == y:
            tp[y] += 1
            correct += 1
        else:
            fp[best] += 1
            fn[y] += 1

    def frac(a, b):
        return Fraction(a, b) if b else Fraction(0)

    prec = [frac(tp[c], tp[c] + fp[c]) for c in range(K)]
    rec = [frac(tp[c], support[c]) for c in range(K)]
    f1 = []
    for c in range(K):
        p, r = prec[c], rec[c]
        f1.append(2 * p * r / (p + r) if p + r else Fraction(0))
    n = len(labels)
    weighted = [sum(support[c] * m[c] for c in range(K)) / n for m in (prec, rec, f1)]
    return {
        "precision": [float(x) for x in prec],
        "recall": [float(x) for x in rec],
        "f1": [float(x) for x in f1],
        "weighted": [float(x) for x in weighted],
        "top1": 100 * Fraction(correct, n),
        "support": support,
    }
