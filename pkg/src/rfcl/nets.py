"""Ensemble MLPs with hand-rolled backprop, layer norm, orthogonal init, and Adam.

Parameters live in flat dicts of arrays with a leading ensemble axis (E=1 for a
single network), so a 10-critic update is a handful of batched BLAS calls; the
memory-bound elementwise steps (layer norm, Adam, Polyak) use fused kernels.
Reductions accumulate in float64 even when parameters are stored in float32.
"""

from __future__ import annotations

import numpy as np

from ._kernels import adam_step, ln_backward, ln_forward, polyak_step

LN_EPS = 1e-6
_KERNEL_MIN_SIZE = 4096  # below this, plain numpy beats the JIT dispatch


def orthogonal(rng: np.random.Generator, shape, gain: float, dtype) -> np.ndarray:
    """Orthogonal (rows, cols) matrix scaled by gain."""
    rows, cols = shape
    a = rng.standard_normal((max(rows, cols), min(rows, cols)))
    q, r = np.linalg.qr(a)
    q = q * np.sign(np.diag(r))
    if rows < cols:
        q = q.T
    return (gain * q[:rows, :cols]).astype(dtype)


class EnsembleMLP:
    """Fully-connected net, ReLU hidden layers, optional pre-activation layer norm."""

    def __init__(self, sizes, ensemble: int = 1, layer_norm: bool = False,
                 rng: np.random.Generator = None, dtype=np.float32,
                 final_scale: float = 1e-2):
        self.sizes = list(sizes)
        self.ensemble = ensemble
        self.layer_norm = layer_norm
        self.dtype = dtype
        self.n_layers = len(sizes) - 1
        self.params = {}
        for l in range(self.n_layers):
            fan_in, fan_out = sizes[l], sizes[l + 1]
            last = l == self.n_layers - 1
            gain = final_scale if last else np.sqrt(2.0)
            self.params[f"W{l}"] = np.stack(
                [orthogonal(rng, (fan_in, fan_out), gain, dtype) for _ in range(ensemble)])
            self.params[f"b{l}"] = np.zeros((ensemble, 1, fan_out), dtype=dtype)
            if layer_norm and not last:
                self.params[f"g{l}"] = np.ones((ensemble, 1, fan_out), dtype=dtype)
                self.params[f"beta{l}"] = np.zeros((ensemble, 1, fan_out), dtype=dtype)

    def copy(self) -> "EnsembleMLP":
        dup = object.__new__(EnsembleMLP)
        dup.sizes, dup.ensemble, dup.layer_norm = self.sizes, self.ensemble, self.layer_norm
        dup.dtype, dup.n_layers = self.dtype, self.n_layers
        dup.params = {k: v.copy() for k, v in self.params.items()}
        return dup

    def forward(self, x, want_cache: bool = False, members=None):
        """x: (B, in) shared across the ensemble, or (E, B, in). Returns (E, B, out).

        members: optional index array restricting the pass to a subset of the
        ensemble (e.g. the 2 subsampled target critics).
        """
        x = np.ascontiguousarray(x, dtype=self.dtype)
        p = self.params
        pick = (lambda k: p[k]) if members is None else (lambda k: p[k][members])
        cache = {"x": x}
        h = x
        for l in range(self.n_layers):
            z = h @ pick(f"W{l}") + pick(f"b{l}")
            if l == self.n_layers - 1:
                h = z
                break
            if self.layer_norm:
                z, xhat, inv_std = ln_forward(z, pick(f"g{l}"), pick(f"beta{l}"),
                                              self.dtype(LN_EPS))
                if want_cache:
                    cache[f"xhat{l}"], cache[f"inv_std{l}"] = xhat, inv_std
            if want_cache:
                cache[f"pre{l}"] = z
            h = np.maximum(z, 0.0)
            if want_cache:
                cache[f"h{l}"] = h
        return (h, cache) if want_cache else h

    def backward(self, cache, dout, want_input_grad: bool = False, want_param_grads: bool = True):
        """Backprop dL/dout through the cached forward pass.

        Returns (grads, dx); grads is a dict mirroring params (or None),
        dx is dL/d(input) summed over the ensemble axis (or None).
        """
        p = self.params
        grads = {} if want_param_grads else None
        g = np.ascontiguousarray(dout, dtype=self.dtype)
        for l in range(self.n_layers - 1, -1, -1):
            h_prev = cache["x"] if l == 0 else cache[f"h{l-1}"]
            if want_param_grads:
                if h_prev.ndim == 2:   # shared input across ensemble
                    grads[f"W{l}"] = np.matmul(h_prev.T, g)
                else:
                    grads[f"W{l}"] = np.matmul(h_prev.transpose(0, 2, 1), g)
                grads[f"b{l}"] = g.sum(axis=1, keepdims=True, dtype=np.float64).astype(self.dtype)
            if l == 0 and not want_input_grad:
                return grads, None
            g = np.matmul(g, p[f"W{l}"].transpose(0, 2, 1))
            if l == 0:
                return grads, g.sum(axis=0, dtype=np.float64).astype(self.dtype)
            g = np.ascontiguousarray(g * (cache[f"pre{l-1}"] > 0))
            if self.layer_norm:
                g, dg, dbeta = ln_backward(g, cache[f"xhat{l-1}"], cache[f"inv_std{l-1}"],
                                           p[f"g{l-1}"])
                if want_param_grads:
                    grads[f"g{l-1}"] = dg
                    grads[f"beta{l-1}"] = dbeta
        return grads, None


class Adam:
    """Standard first/second-moment adaptive optimizer with bias correction."""

    def __init__(self, params: dict, lr: float = 3e-4, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, params: dict, grads: dict):
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for k, g in grads.items():
            m = self.m[k]
            v = self.v[k]
            if m.size >= _KERNEL_MIN_SIZE:
                adam_step(params[k], np.ascontiguousarray(g, dtype=m.dtype), m, v,
                          self.lr, self.beta1, self.beta2, self.eps, bc1, bc2)
            else:
                m += (1.0 - self.beta1) * (g - m)
                v += (1.0 - self.beta2) * (g * g - v)
                params[k] -= self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)


def polyak(target: EnsembleMLP, online: EnsembleMLP, tau: float):
    """target <- (1 - tau) * target + tau * online, elementwise."""
    for k, tp in target.params.items():
        if tp.size >= _KERNEL_MIN_SIZE:
            polyak_step(tp, online.params[k], tau)
        else:
            tp += tau * (online.params[k] - tp)
