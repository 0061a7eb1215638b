import numpy as np
import pytest

from subdetector import gradcore as gc


def finite_diff(loss_fn, tensor, step=1e-5, entries=None, rng=None):
    """Central finite differences of a scalar-valued loss w.r.t. one tensor.

    ``loss_fn`` must recompute the loss from current tensor data. Returns
    (indices, fd_grads) for the probed entries; probes every entry unless
    ``entries`` caps the count (sampled with ``rng``).
    """
    flat = tensor.data.reshape(-1)
    n = flat.size
    if entries is not None and entries < n:
        idx = np.sort(rng.choice(n, size=entries, replace=False))
    else:
        idx = np.arange(n)
    grads = np.empty(idx.size)
    for pos, i in enumerate(idx):
        orig = flat[i]
        flat[i] = orig + step
        up = float(loss_fn())
        flat[i] = orig - step
        down = float(loss_fn())
        flat[i] = orig
        grads[pos] = (up - down) / (2.0 * step)
    return idx, grads


def rel_err(a, b):
    """|a - b| / max(1, |a|, |b|), elementwise."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    denom = np.maximum(1.0, np.maximum(np.abs(a), np.abs(b)))
    return np.abs(a - b) / denom


def check_grad(build_loss, params, tol=1e-4, step=1e-5, entries=None, rng=None):
    """Assert reverse-mode gradients match central differences for all params."""
    loss = build_loss()
    for p in params:
        p.zero_grad()
    gc.backward(loss)
    for p in params:
        got = p.grad.reshape(-1).copy()
        idx, fd = finite_diff(lambda: build_loss().data, p,
                              step=step, entries=entries, rng=rng)
        err = rel_err(got[idx], fd)
        assert err.max() < tol, (
            f"gradient mismatch on {p.name}: max rel err {err.max():.3e}")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
