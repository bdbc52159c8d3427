"""Pure-Python implementations of the hot loops.

These mirror ``_ckernels.pyx`` operation for operation (same summation
order, same RNG) so the two backends agree to the last bit on the
dimensions used here. They are selected automatically when the compiled
extension is not importable.
"""
from __future__ import annotations

import numpy as np

NAME = "python"

MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def splitmix64(state):
    """Advance a SplitMix64 state; returns ``(new_state, output)``."""
    state = (state + _GOLDEN) & MASK64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return state, z ^ (z >> 31)


def shuffled_range(n, state):
    """Fisher-Yates permutation of ``range(n)`` driven by SplitMix64."""
    order = list(range(n))
    for i in range(n - 1, 0, -1):
        state, r = splitmix64(state)
        j = r % (i + 1)
        order[i], order[j] = order[j], order[i]
    return order, state


def dot(a, b):
    s = 0.0
    for u, v in zip(a, b):
        s += u * v
    return s


def dcd_solve(X, y, qdiag, cbox, alpha, w, b, max_epochs, tol, rng_state):
    """Dual coordinate descent on the offset-augmented hinge SVM.

    ``alpha`` and ``w`` are updated in place. Returns
    ``(b, epochs_run, last_sweep_violation, rng_state)``.
    """
    n = len(y)
    rows = X.tolist()
    ys = y.tolist()
    qs = qdiag.tolist()
    cs = cbox.tolist()
    al = alpha.tolist()
    wl = w.tolist()
    epochs = 0
    viol = np.inf
    while epochs < max_epochs:
        order, rng_state = shuffled_range(n, rng_state)
        viol = 0.0
        for i in order:
            xi = rows[i]
            yi = ys[i]
            ai = al[i]
            ci = cs[i]
            g = yi * (dot(wl, xi) + b) - 1.0
            if ai == 0.0:
                pg = g if g < 0.0 else 0.0
            elif ai >= ci:
                pg = g if g > 0.0 else 0.0
            else:
                pg = g
            if pg < 0.0:
                pg = -pg
            if pg > viol:
                viol = pg
            # coordinates already within tolerance are left alone, so a
            # converged warm start is a zero-update sweep
            if pg >= tol:
                a_new = ai - g / qs[i]
                if a_new < 0.0:
                    a_new = 0.0
                elif a_new > ci:
                    a_new = ci
                d = (a_new - ai) * yi
                if d != 0.0:
                    for k in range(len(wl)):
                        wl[k] += d * xi[k]
                    b += d
                al[i] = a_new
        epochs += 1
        if viol < tol:
            break
    alpha[:] = al
    w[:] = wl
    return b, epochs, viol, rng_state


def run_stream(state, X, y, arrival, threshold, stride):
    """Prequential test-then-train loop over an ``OnlineState``.

    Predicts each sample with the current model and the frozen threshold,
    then hands the revealed sample to ``state.process_sample``. Returns
    ``(counts, trajectory)`` where counts is ``[tp, fn, tn, fp]``.
    """
    from .basket import process_sample
    from .model import Sample
    from .prequential import running_ba

    tp = fn = tn = fp = 0
    trajectory = []
    X = np.asarray(X, dtype=float)
    for t in range(len(y)):
        x = X[t]
        yt = int(y[t])
        f = dot(state.model.w.tolist(), x.tolist()) + state.model.b
        pred = 1 if f >= threshold else -1
        if yt == 1:
            if pred == 1:
                tp += 1
            else:
                fn += 1
        else:
            if pred == -1:
                tn += 1
            else:
                fp += 1
        if (t + 1) % stride == 0:
            trajectory.append((int(arrival[t]), running_ba(tp, fn, tn, fp)))
        process_sample(state, Sample(x, yt, int(arrival[t])))
    return [tp, fn, tn, fp], trajectory
