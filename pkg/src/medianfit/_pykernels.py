"""Pure-numpy kernels.

This is the reference implementation of every hot kernel and the fallback
used when the compiled ``_kernels`` extension is unavailable. The compiled
module exposes the same four functions with the same signatures:

``train_step``
    one fused minibatch update (forward, regularised MAE backward, optimizer)
``nondominated_mask``
    boolean mask of the points no other point dominates
``eps_indicator``
    pairwise additive-epsilon indicator matrix
``ibea_truncate``
    iterative worst-fitness removal used for IBEA environmental selection

Parameters of a network live in one flat float64 vector. Layer ``l`` owns a
row-major ``(sizes[l], sizes[l + 1])`` weight block followed by its bias.
"""

import numpy as np

BACKEND = "python"

# activation codes
RELU, SIGMOID, SOFTMAX, SOFTPLUS, SOFTSIGN, TANH, SELU, ELU = range(8)
# optimizer codes
SGD, ADAM, NADAM, RMSPROP, ADAGRAD, ADADELTA, ADAMAX = range(7)

SELU_ALPHA = 1.6732632423543772
SELU_SCALE = 1.0507009873554805

# hyper vector slots
LR, BETA1, BETA2, EPS, RHO = range(5)


def param_slices(sizes):
    """Return ``(w_start, b_start, end)`` offsets for each layer."""
    out = []
    off = 0
    for k, n in zip(sizes[:-1], sizes[1:]):
        out.append((off, off + k * n, off + k * n + n))
        off += k * n + n
    return out


def n_params(sizes):
    return sum(k * n + n for k, n in zip(sizes[:-1], sizes[1:]))


def unpack(theta, sizes):
    """Views ``[(W, b), ...]`` into the flat vector."""
    layers = []
    for (ws, bs, end), k, n in zip(param_slices(sizes), sizes[:-1], sizes[1:]):
        layers.append((theta[ws:bs].reshape(k, n), theta[bs:end]))
    return layers


def activate(kind, z):
    if kind == RELU:
        return np.maximum(z, 0.0)
    if kind == SIGMOID:
        return 0.5 * (1.0 + np.tanh(0.5 * z))
    if kind == SOFTMAX:
        e = np.exp(z - z.max(axis=-1, keepdims=True))
        return e / e.sum(axis=-1, keepdims=True)
    if kind == SOFTPLUS:
        return np.logaddexp(0.0, z)
    if kind == SOFTSIGN:
        return z / (1.0 + np.abs(z))
    if kind == TANH:
        return np.tanh(z)
    if kind == SELU:
        return SELU_SCALE * np.where(z > 0, z, SELU_ALPHA * np.expm1(np.minimum(z, 0.0)))
    if kind == ELU:
        return np.where(z > 0, z, np.expm1(np.minimum(z, 0.0)))
    raise ValueError(f"unknown activation code {kind}")


def activate_backward(kind, z, a, upstream):
    """Chain ``upstream`` (dL/da) through the activation to get dL/dz."""
    if kind == RELU:
        return upstream * (z > 0)
    if kind == SIGMOID:
        return upstream * a * (1.0 - a)
    if kind == SOFTMAX:
        return a * (upstream - (upstream * a).sum(axis=-1, keepdims=True))
    if kind == SOFTPLUS:
        return upstream * (0.5 * (1.0 + np.tanh(0.5 * z)))
    if kind == SOFTSIGN:
        d = 1.0 + np.abs(z)
        return upstream / (d * d)
    if kind == TANH:
        return upstream * (1.0 - a * a)
    if kind == SELU:
        return upstream * np.where(z > 0, SELU_SCALE, a + SELU_SCALE * SELU_ALPHA)
    if kind == ELU:
        return upstream * np.where(z > 0, 1.0, a + 1.0)
    raise ValueError(f"unknown activation code {kind}")


def forward_cache(theta, sizes, X, act, masks=None):
    """Forward pass keeping pre-activations and (masked) activations."""
    layers = unpack(theta, sizes)
    acts = [X]
    pres = []
    h = X
    col = 0
    for W, b in layers[:-1]:
        z = h @ W + b
        a = activate(act, z)
        pres.append((z, a))
        if masks is not None:
            a = a * masks[:, col:col + W.shape[1]]
            col += W.shape[1]
        acts.append(a)
        h = a
    W, b = layers[-1]
    out = h @ W + b
    return out, acts, pres


def predict(theta, sizes, X, act):
    """Inference-mode network output, shape (rows, outputs)."""
    return forward_cache(theta, sizes, X, act)[0]


def penalty(theta, sizes, l1, l2):
    total = 0.0
    for ws, bs, _ in param_slices(sizes):
        w = theta[ws:bs]
        if l1:
            total += l1 * np.abs(w).sum()
        if l2:
            total += l2 * (w * w).sum()
    return total


def loss_and_grad(theta, sizes, X, y, act, masks, l1, l2):
    out, acts, pres = forward_cache(theta, sizes, X, act, masks)
    resid = out - y.reshape(out.shape)
    loss = np.abs(resid).mean() + penalty(theta, sizes, l1, l2)
    grad = np.empty_like(theta)
    dz = np.sign(resid) / resid.size
    slices = param_slices(sizes)
    col = sum(sizes[1:-1])
    for l in range(len(slices) - 1, -1, -1):
        ws, bs, end = slices[l]
        k, n = sizes[l], sizes[l + 1]
        gw = grad[ws:bs].reshape(k, n)
        np.matmul(acts[l].T, dz, out=gw)
        grad[bs:end] = dz.sum(axis=0)
        w = theta[ws:bs]
        if l1:
            grad[ws:bs] += l1 * np.sign(w)
        if l2:
            grad[ws:bs] += (2.0 * l2) * w
        if l > 0:
            da = dz @ theta[ws:bs].reshape(k, n).T
            if masks is not None:
                col -= k
                da = da * masks[:, col:col + k]
            z, a = pres[l - 1]
            dz = activate_backward(act, z, a, da)
    return loss, grad


def optimizer_update(opt, p, g, state, hyper, t):
    """In-place update of ``p`` (and ``state``) for step index ``t`` (1-based)."""
    lr = hyper[LR]
    eps = hyper[EPS]
    if opt == SGD:
        p -= lr * g
    elif opt in (ADAM, NADAM):
        b1, b2 = hyper[BETA1], hyper[BETA2]
        m, v = state[0], state[1]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        mhat = m / (1.0 - b1 ** t)
        vhat = v / (1.0 - b2 ** t)
        if opt == NADAM:
            mhat = b1 * mhat + (1.0 - b1) * g / (1.0 - b1 ** t)
        p -= lr * mhat / (np.sqrt(vhat) + eps)
    elif opt == RMSPROP:
        rho = hyper[RHO]
        v = state[0]
        v *= rho
        v += (1.0 - rho) * (g * g)
        p -= lr * g / (np.sqrt(v) + eps)
    elif opt == ADAGRAD:
        acc = state[0]
        acc += g * g
        p -= lr * g / np.sqrt(acc + eps)
    elif opt == ADADELTA:
        rho = hyper[RHO]
        acc_g, acc_dx = state[0], state[1]
        acc_g *= rho
        acc_g += (1.0 - rho) * (g * g)
        dx = -np.sqrt(acc_dx + eps) / np.sqrt(acc_g + eps) * g
        acc_dx *= rho
        acc_dx += (1.0 - rho) * (dx * dx)
        p += lr * dx
    elif opt == ADAMAX:
        b1, b2 = hyper[BETA1], hyper[BETA2]
        m, u = state[0], state[1]
        m *= b1
        m += (1.0 - b1) * g
        np.maximum(b2 * u, np.abs(g), out=u)
        p -= (lr / (1.0 - b1 ** t)) * m / (u + eps)
    else:
        raise ValueError(f"unknown optimizer code {opt}")


def workspace_size(sizes, rows):
    """Scratch length the compiled ``train_step`` needs; unused here."""
    return 4 * rows * int(sum(sizes[1:])) + n_params(sizes)


def train_step(theta, sizes, X, y, act, keep, scale, l1, l2, opt, state, hyper, t, work=None):
    """One minibatch update in place; returns the pre-update batch loss.

    ``keep`` is a 0/1 dropout mask over all hidden units (or None); kept
    units are multiplied by ``scale``.
    """
    masks = None if keep is None else keep * scale
    loss, grad = loss_and_grad(theta, sizes, X, y, act, masks, l1, l2)
    optimizer_update(opt, theta, grad, state, hyper, t)
    return loss


def nondominated_mask(F):
    F = np.asarray(F, dtype=float)
    if len(F) == 0:
        return np.zeros(0, dtype=bool)
    le = (F[:, None, :] <= F[None, :, :]).all(axis=-1)
    lt = (F[:, None, :] < F[None, :, :]).any(axis=-1)
    return ~(le & lt).any(axis=0)


def eps_indicator(F):
    F = np.asarray(F, dtype=float)
    return (F[:, None, :] - F[None, :, :]).max(axis=-1)


def ibea_truncate(F, kappa, n_survivors):
    """Remove worst-fitness points one at a time; return sorted survivor indices.

    ``F`` must already be normalised. Fitness of ``j`` is
    ``-sum_{i != j} exp(-I(i, j) / (c * kappa))`` with ``c = max |I|``.
    """
    F = np.asarray(F, dtype=float)
    n = len(F)
    if n_survivors >= n:
        return np.arange(n)
    ind = eps_indicator(F)
    c = np.abs(ind).max()
    if c == 0.0:
        c = 1.0
    E = np.exp(-ind / (c * kappa))
    np.fill_diagonal(E, 0.0)
    fitness = -E.sum(axis=0)
    alive = np.ones(n, dtype=bool)
    for _ in range(n - n_survivors):
        cand = np.where(alive, fitness, np.inf)
        worst = int(np.argmin(cand))
        alive[worst] = False
        fitness += E[worst]
    return np.flatnonzero(alive)
