"""Independent reference computations for the tests.

Nothing here calls into the package's vectorized paths: matmuls are scalar
loops, log-probabilities go through ``math`` (floored at 1e-300), and
gradients come from central differences.
"""
import math

import mpmath
import numpy as np

mpmath.mp.dps = 50


def matmul_loop(x, w, b):
    """x @ w.T + b with explicit loops."""
    n, d = len(x), len(x[0])
    out = [[0.0] * len(w) for _ in range(n)]
    for i in range(n):
        for o in range(len(w)):
            out[i][o] = math.fsum(x[i][k] * w[o][k] for k in range(d)) + b[o]
    return np.array(out)


def mlp_loop(net, x):
    h = np.asarray(x, dtype=float)
    for layer in net.layers:
        if layer.kind == "affine":
            h = matmul_loop(h.tolist(), layer.weight.tolist(), layer.bias.tolist())
        else:
            h = np.array([[v if v > 0 else 0.0 for v in row] for row in h])
    return h


def softmax_mp(row):
    m = [mpmath.mpf(float(v)) for v in row]
    e = [mpmath.e ** v for v in m]
    s = mpmath.fsum(e)
    return [float(v / s) for v in e]


def kl_mp(teacher_row, student_row, t=1.0):
    """KL(softmax(teacher/t) || softmax(student/t)) at 50 digits."""
    tt = mpmath.mpf(t)
    p = [mpmath.e ** (mpmath.mpf(float(v)) / tt) for v in teacher_row]
    q = [mpmath.e ** (mpmath.mpf(float(v)) / tt) for v in student_row]
    sp, sq = mpmath.fsum(p), mpmath.fsum(q)
    return float(mpmath.fsum((a / sp) * mpmath.log((a / sp) / (c / sq)) for a, c in zip(p, q)))


def _softmax_row(row):
    m = max(row)
    e = [math.exp(v - m) for v in row]
    s = math.fsum(e)
    return [v / s for v in e]


def _log(p):
    return math.log(max(p, 1e-300))


def ce_loop(logits, target):
    total = 0.0
    for z, y in zip(logits, target):
        q = _softmax_row(list(z))
        total += -math.fsum(yc * _log(qc) for yc, qc in zip(y, q))
    return total / len(logits)


def kl_loop(student, teacher, t=1.0):
    total = 0.0
    for s, tt in zip(student, teacher):
        p = _softmax_row([v / t for v in tt])
        q = _softmax_row([v / t for v in s])
        total += math.fsum(pc * (_log(pc) - _log(qc)) for pc, qc in zip(p, q) if pc > 0)
    return total / len(student)


def mix_loop(logits, labels_a, labels_b, lam):
    lams = [lam] * len(logits) if np.ndim(lam) == 0 else list(lam)
    total = 0.0
    for z, a, b, l in zip(logits, labels_a, labels_b, lams):
        q = _softmax_row(list(z))
        ca = -math.fsum(ac * _log(qc) for ac, qc in zip(a, q))
        cb = -math.fsum(bc * _log(qc) for bc, qc in zip(b, q))
        total += l * ca + (1 - l) * cb
    return total / len(logits)


def central_difference(f, arrays, eps=1e-6):
    """Gradient of scalar ``f()`` w.r.t. each array in ``arrays`` (mutated and restored)."""
    grads = []
    for a in arrays:
        g = np.zeros_like(a)
        it = np.nditer(a, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            orig = a[idx]
            a[idx] = orig + eps
            fp = f()
            a[idx] = orig - eps
            fm = f()
            a[idx] = orig
            g[idx] = (fp - fm) / (2 * eps)
        grads.append(g)
    return grads


def max_rel_error(analytic, numeric, floor=1e-6):
    worst = 0.0
    for a, n in zip(analytic, numeric):
        a, n = np.asarray(a), np.asarray(n)
        denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
        worst = max(worst, float(np.max(np.abs(a - n) / denom)))
    return worst


# Forward pass and loss values at extended precision, for finite differences
# (results stay extended so the difference quotient is taken at full precision):
# float64 rounding (~1e-16) divided by eps=1e-6 would otherwise swamp gradient
# entries near the relative-error floor of deeper networks.
EXTENDED = np.finfo(np.longdouble).eps < 1e-18


def _widen(a):
    a = np.asarray(a, dtype=float)
    if EXTENDED:
        return a.astype(np.longdouble)
    return np.vectorize(mpmath.mpf, otypes=[object])(a)


def mlp_hp(net, x):
    """Network forward pass at extended precision (float64 parameters, exact widening)."""
    h = _widen(x)
    for layer in net.layers:
        if layer.kind == "affine":
            h = h @ _widen(layer.weight).T + _widen(layer.bias)
        else:
            h = np.where(h > 0, h, 0 * h)
    return h


def _log_softmax_hp(z):
    if EXTENDED:
        z = np.asarray(z, dtype=np.longdouble)
        s = z - z.max(axis=1, keepdims=True)
        return s - np.log(np.exp(s).sum(axis=1, keepdims=True))
    out = []
    for row in np.asarray(z, dtype=object):
        m = [mpmath.mpf(v) for v in row]
        lse = mpmath.log(mpmath.fsum(mpmath.exp(v) for v in m))
        out.append([v - lse for v in m])
    return np.array(out, dtype=object)


def ce_hp(z, target):
    ls = _log_softmax_hp(z)
    return -(np.asarray(target) * ls).sum() / len(ls)


def kl_hp(student, teacher, t=1.0):
    lp = _log_softmax_hp(np.asarray(teacher) / t)
    lq = _log_softmax_hp(np.asarray(student) / t)
    p = np.exp(lp) if EXTENDED else np.vectorize(mpmath.exp, otypes=[object])(lp)
    return (p * (lp - lq)).sum() / len(lp)


def mix_hp(z, labels_a, labels_b, lam):
    w = np.asarray(lam, dtype=float)
    w = w[:, None] if w.ndim else w
    ls = _log_softmax_hp(z)
    target = w * np.asarray(labels_a) + (1 - w) * np.asarray(labels_b)
    return -(target * ls).sum() / len(ls)
