"""Independent oracles shared by the test modules.

Everything here is deliberately naive (direct loops over the defining
formulas) so it stays independent of the library's fast paths.
"""
from __future__ import annotations

import numpy as np

from ivfnet import tensor as T


def naive_dft(frame: np.ndarray) -> np.ndarray:
    """O(N^2) DFT of one real frame, keeping the nonnegative-frequency bins."""
    n = len(frame)
    k = np.arange(n // 2 + 1)[:, None]
    t = np.arange(n)[None, :]
    basis = np.exp(-2j * np.pi * k * t / n)
    return basis @ frame.astype(np.float64)


def naive_stft(samples, fft_size, hop_size, window) -> np.ndarray:
    n_frames = 1 + (len(samples) - fft_size) // hop_size
    out = np.zeros((n_frames, fft_size // 2 + 1), dtype=complex)
    for t in range(n_frames):
        frame = samples[t * hop_size : t * hop_size + fft_size] * window
        out[t] = naive_dft(frame)
    return out


def naive_dct2_ortho(vec: np.ndarray) -> np.ndarray:
    """O(F^2) orthonormal DCT-II of one frame:
    X_k = s_k * sum_n x_n cos(pi * k * (n + 1/2) / F), s_0 = sqrt(1/F),
    s_k = sqrt(2/F) for k > 0."""
    f = len(vec)
    out = np.zeros(f)
    for k in range(f):
        s = 0.0
        for n in range(f):
            s += vec[n] * np.cos(np.pi * k * (n + 0.5) / f)
        out[k] = s * (np.sqrt(1.0 / f) if k == 0 else np.sqrt(2.0 / f))
    return out


def naive_conv2d(x, k, stride=1, padding="same"):
    """Nested-loop cross-correlation matching tensor.conv2d semantics."""
    b, cin, h, w = x.shape
    cout, _, kh, kw = k.shape
    if padding == "same":
        out_h = -(-h // stride)
        out_w = -(-w // stride)
        total_h = max((out_h - 1) * stride + kh - h, 0)
        total_w = max((out_w - 1) * stride + kw - w, 0)
        pt, pl = total_h // 2, total_w // 2
        xp = np.pad(x, ((0, 0), (0, 0), (pt, total_h - pt), (pl, total_w - pl)))
    else:
        out_h = (h - kh) // stride + 1
        out_w = (w - kw) // stride + 1
        xp = x
    out = np.zeros((b, cout, out_h, out_w))
    for bi in range(b):
        for oc in range(cout):
            for oi in range(out_h):
                for oj in range(out_w):
                    acc = 0.0
                    for ic in range(cin):
                        for di in range(kh):
                            for dj in range(kw):
                                acc += (
                                    xp[bi, ic, oi * stride + di, oj * stride + dj]
                                    * k[oc, ic, di, dj]
                                )
                    out[bi, oc, oi, oj] = acc
    return out


def directional_fd(fn, inputs, direction_rng, h=1e-5):
    """Central finite difference of a scalar fn along one random direction.

    `inputs` is a list of float64 numpy arrays; fn maps arrays of the same
    shapes to a python float. Returns (fd_value, directions).
    """
    dirs = [direction_rng.standard_normal(x.shape) for x in inputs]
    plus = fn(*[x + h * d for x, d in zip(inputs, dirs)])
    minus = fn(*[x - h * d for x, d in zip(inputs, dirs)])
    return (plus - minus) / (2.0 * h), dirs


def check_grads_fd(build_loss, arrays, rng, h=1e-5, rtol=1e-4, atol=1e-6):
    """Compare engine gradients with a directional central finite difference.

    build_loss takes engine Tensors (float64 leaves made from `arrays`) and
    returns a scalar Tensor. The difference is evaluated on a ladder of
    shrinking steps: at a point where the function is differentiable the
    mismatch vanishes as h shrinks, while a genuinely wrong gradient fails at
    every step size. (Piecewise-linear ops such as leaky_relu occasionally
    place a kink inside the widest window; the narrower steps disambiguate.)
    """
    leaves = [T.parameter(a.astype(np.float64)) for a in arrays]
    loss = build_loss(*leaves)
    grads = T.grad(loss, leaves)

    def scalar_fn(*xs):
        consts = [T.tensor(x) for x in xs]
        return float(build_loss(*consts).data)

    f64 = [a.astype(np.float64) for a in arrays]
    dirs = [rng.standard_normal(x.shape) for x in f64]
    analytic = 0.0
    for g, d in zip(grads, dirs):
        analytic += float(np.sum(g.data * d))

    best_gap, best_fd = None, None
    for step in (h, h / 10.0, h / 30.0):
        plus = scalar_fn(*[x + step * d for x, d in zip(f64, dirs)])
        minus = scalar_fn(*[x - step * d for x, d in zip(f64, dirs)])
        fd = (plus - minus) / (2.0 * step)
        gap = abs(fd - analytic)
        if best_gap is None or gap < best_gap:
            best_gap, best_fd = gap, fd
        if gap <= max(rtol * max(abs(fd), abs(analytic)), atol):
            return
    tol = max(rtol * max(abs(best_fd), abs(analytic)), atol)
    raise AssertionError(
        f"finite difference {best_fd!r} vs analytic {analytic!r} (tol {tol!r})"
    )
