"""Independent reference implementations used as test oracles."""

import itertools

import numpy as np

from tasnet.model import build, forward_batch
from tasnet.tensor import Tape, Tensor, mul, sum_all
from tasnet.training import upit_loss_tensor


def projected_loss(fn, inputs, proj):
    """sum(fn(*inputs) * proj) as a taped scalar."""
    out = fn(*inputs)
    return sum_all(mul(out, Tensor(proj)))


def grad_check(fn, arrays, step=1e-3, seed=0):
    """Analytic vs central-difference gradients of sum(fn(...) * R) for random R.

    Returns the norm-wise relative error per input.
    """
    rng = np.random.default_rng(seed)
    arrays = [np.asarray(a, dtype=np.float64) for a in arrays]
    probe = fn(*[Tensor(a) for a in arrays])
    proj = rng.standard_normal(probe.shape)

    leaves = [Tensor(a.copy(), requires_grad=True) for a in arrays]
    with Tape() as tape:
        loss = projected_loss(fn, leaves, proj)
    tape.backward(loss)

    def value(arrs):
        return float((fn(*[Tensor(a) for a in arrs]).data * proj).sum())

    errors = []
    for i, a in enumerate(arrays):
        num = np.zeros_like(a)
        for idx in np.ndindex(a.shape):
            plus = [x.copy() for x in arrays]
            minus = [x.copy() for x in arrays]
            plus[i][idx] += step
            minus[i][idx] -= step
            num[idx] = (value(plus) - value(minus)) / (2 * step)
        ana = leaves[i].grad if leaves[i].grad is not None else np.zeros_like(a)
        scale = max(np.linalg.norm(num), np.linalg.norm(ana), 1e-12)
        errors.append(float(np.linalg.norm(ana - num) / scale))
    return errors


def brute_conv1d(x, w, b=None, stride=1, dilation=1, pad_left=0, pad_right=0, groups=1):
    """Direct loop over output channel, time and tap."""
    x = np.asarray(x, dtype=np.float64)
    cin, t = x.shape
    cout, cg, p = w.shape
    xp = np.concatenate([np.zeros((cin, pad_left)), x, np.zeros((cin, pad_right))], axis=1)
    tout = (xp.shape[1] - (p - 1) * dilation - 1) // stride + 1
    out = np.zeros((cout, tout))
    opg = cout // groups
    for o in range(cout):
        g = o // opg
        for j in range(tout):
            acc = 0.0
            for c in range(cg):
                for k in range(p):
                    acc += w[o, c, k] * xp[g * cg + c, j * stride + k * dilation]
            out[o, j] = acc + (0.0 if b is None else b[o])
    return out


def naive_overlap_add(frames, hop):
    """frames [F, L] -> signal of (F - 1) * hop + L samples."""
    f, length = frames.shape
    out = np.zeros((f - 1) * hop + length)
    for i in range(f):
        out[i * hop : i * hop + length] += frames[i]
    return out


def naive_upgma(rows):
    """O(N^3) average-linkage clustering; returns the leaf order.

    Each merge lists the lower-id cluster first, original points having ids
    0..N-1 and the cluster made at step s having id N + s.
    """
    rows = np.asarray(rows, dtype=np.float64)
    n = rows.shape[0]
    d = np.sqrt(((rows[:, None, :] - rows[None, :, :]) ** 2).sum(-1))
    clusters = {i: [i] for i in range(n)}
    order = {i: [i] for i in range(n)}
    next_id = n
    while len(clusters) > 1:
        best = None
        for a, b in itertools.combinations(sorted(clusters), 2):
            dist = np.mean([d[i, j] for i in clusters[a] for j in clusters[b]])
            if best is None or dist < best[0]:
                best = (dist, a, b)
        _, a, b = best
        clusters[next_id] = clusters.pop(a) + clusters.pop(b)
        order[next_id] = order.pop(a) + order.pop(b)
        next_id += 1
    return np.array(next(iter(order.values())))


def batch_loss(params, mix, refs):
    return upit_loss_tensor(forward_batch(params, Tensor(mix[:, None, :])), refs)[0]


def end_to_end_fd_error(config, step=1e-3, seed=0):
    """Relative error of the full-model loss gradient against central differences."""
    r = np.random.default_rng(seed)
    p = build(config, seed=seed, dtype=np.float64)
    refs = r.standard_normal((2, 2, 40))
    mix = refs.sum(axis=1)
    p.requires_grad_(True)
    with Tape() as tape:
        loss = batch_loss(p, mix, refs)
    tape.backward(loss)
    p.requires_grad_(False)
    ana, num = [], []
    for name, t in p:
        g = np.zeros(t.shape) if t.grad is None else t.grad
        ana.append(g.ravel())
        for idx in np.ndindex(t.shape):
            orig = t.data[idx]
            t.data[idx] = orig + step
            lp = batch_loss(p, mix, refs).item()
            t.data[idx] = orig - step
            lm = batch_loss(p, mix, refs).item()
            t.data[idx] = orig
            num.append((lp - lm) / (2 * step))
    ana = np.concatenate(ana)
    num = np.array(num)
    return float(np.linalg.norm(ana - num) / np.linalg.norm(num))
