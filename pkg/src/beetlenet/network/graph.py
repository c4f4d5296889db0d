"""A small reverse-mode tape for the convolutional network.

Nodes are integer handles into ``Graph.values``. Each op appends one tape
entry ``(out, inputs, backward)`` where ``backward(grad_out)`` returns one
gradient (or ``None``) per input. Parameters enter the graph through
:meth:`Graph.param` and their gradients come back keyed by name.
"""
import numpy as np

from .. import kernels

BN_EPS = 1e-5


class Graph:
    def __init__(self, store, record=True, dtype=None):
        self.store = store
        self.record = record
        self.dtype = dtype
        self.values = []
        self.tape = []
        self._param_nodes = {}
        # piecewise-linear switch states (ReLU masks, max-pool winners) in
        # op order; lets callers tell whether two nearby inputs share a
        # linear region
        self.switches = []

    # -- plumbing -------------------------------------------------------
    def _push(self, value):
        self.values.append(value)
        return len(self.values) - 1

    def _op(self, value, inputs, backward):
        out = self._push(value)
        if self.record:
            self.tape.append((out, inputs, backward))
        return out

    def input(self, array):
        arr = np.asarray(array)
        if self.dtype is not None:
            arr = arr.astype(self.dtype, copy=False)
        return self._push(arr)

    def param(self, name):
        node = self._param_nodes.get(name)
        if node is None:
            node = self._push(self.store[name])
            self._param_nodes[name] = node
        return node

    def __getitem__(self, node):
        return self.values[node]

    def backward(self, node, grad):
        """Propagate ``grad`` from ``node``; return {param name: gradient}."""
        grads = {node: grad}
        for out, inputs, fn in reversed(self.tape):
            g = grads.pop(out, None)
            if g is None:
                continue
            for inp, gi in zip(inputs, fn(g)):
                if gi is None:
                    continue
                if inp in grads:
                    grads[inp] = grads[inp] + gi
                else:
                    grads[inp] = gi
        return {name: grads[n] for name, n in self._param_nodes.items()
                if n in grads and self.store.trainable(name)}

    # -- ops ------------------------------------------------------------
    def conv(self, x, w, b=None, stride=1, pad=0):
        X, W = self.values[x], self.values[w]
        n, c, h, wd = X.shape
        f, cw, kh, kw = W.shape
        if cw != c:
            raise ValueError(f"conv expects {cw} input channels, got {c}")
        ho = (h + 2 * pad - kh) // stride + 1
        wo = (wd + 2 * pad - kw) // stride + 1
        pointwise = kh == 1 and kw == 1 and pad == 0
        if pointwise:
            xs = X[:, :, ::stride, ::stride]
            cols = xs.transpose(1, 0, 2, 3).reshape(c, -1)
        else:
            xp = np.pad(X, ((0, 0), (0, 0), (pad, pad), (pad, pad))) if pad else X
            cols = kernels.im2col(np.ascontiguousarray(xp), kh, kw, stride, ho, wo)
        W2 = W.reshape(f, -1)
        out = (W2 @ cols).reshape(f, n, ho, wo).transpose(1, 0, 2, 3)
        if b is not None:
            out = out + self.values[b][None, :, None, None]
        out = np.ascontiguousarray(out)

        def backward(g):
            g2 = g.transpose(1, 0, 2, 3).reshape(f, -1)
            dW = (g2 @ cols.T).reshape(W.shape)
            dcols = W2.T @ g2
            if pointwise:
                dx = np.zeros_like(X)
                dx[:, :, ::stride, ::stride] = dcols.reshape(c, n, ho, wo).transpose(1, 0, 2, 3)
            else:
                dxp = kernels.col2im(np.ascontiguousarray(dcols), n, c, h + 2 * pad, wd + 2 * pad,
                                     kh, kw, stride, ho, wo)
                dx = dxp[:, :, pad:pad + h, pad:pad + wd] if pad else dxp
            if b is None:
                return dx, dW
            return dx, dW, g2.sum(axis=1)

        inputs = (x, w) if b is None else (x, w, b)
        return self._op(out, inputs, backward)

    def frozen_bn(self, x, prefix):
        """Batch norm with stored statistics: y = (x - mean)/sqrt(var+eps)*w + b.
        Only the affine weight and bias receive gradients."""
        w, b = self.param(prefix + ".weight"), self.param(prefix + ".bias")
        rm, rv = self.param(prefix + ".running_mean"), self.param(prefix + ".running_var")
        X = self.values[x]
        inv = 1.0 / np.sqrt(self.values[rv] + BN_EPS)
        xhat = (X - self.values[rm][None, :, None, None]) * inv[None, :, None, None]
        out = xhat * self.values[w][None, :, None, None] + self.values[b][None, :, None, None]

        def backward(g):
            scale = (self.values[w] * inv)[None, :, None, None]
            return g * scale, (g * xhat).sum(axis=(0, 2, 3)), g.sum(axis=(0, 2, 3)), None, None

        return self._op(out, (x, w, b, rm, rv), backward)

    def relu(self, x):
        X = self.values[x]
        mask = X > 0
        self.switches.append(mask)
        return self._op(X * mask, (x,), lambda g: (g * mask,))

    def maxpool(self, x, k=3, stride=2, pad=1):
        X = self.values[x]
        n, c, h, w = X.shape
        ho = (h + 2 * pad - k) // stride + 1
        wo = (w + 2 * pad - k) // stride + 1
        xp = np.pad(X, ((0, 0), (0, 0), (pad, pad), (pad, pad)), constant_values=-np.inf)
        out, arg = kernels.maxpool_forward(np.ascontiguousarray(xp), k, stride, ho, wo)
        self.switches.append(arg)

        def backward(g):
            dxp = kernels.maxpool_backward(np.ascontiguousarray(g), arg, h + 2 * pad, w + 2 * pad, k, stride)
            return (dxp[:, :, pad:pad + h, pad:pad + w],)

        return self._op(out, (x,), backward)

    def add(self, a, b):
        return self._op(self.values[a] + self.values[b], (a, b), lambda g: (g, g))

    def upsample_nearest(self, x, size):
        """Nearest-neighbour resize to ``size`` = (H, W); source index is
        floor(dst * in / out)."""
        X = self.values[x]
        h, w = X.shape[2:]
        H, W = size
        ri = (np.arange(H) * h) // H
        ci = (np.arange(W) * w) // W
        out = X[:, :, ri][:, :, :, ci]
        ur = np.zeros((H, h), dtype=X.dtype)
        ur[np.arange(H), ri] = 1.0
        uc = np.zeros((W, w), dtype=X.dtype)
        uc[np.arange(W), ci] = 1.0
        return self._op(out, (x,), lambda g: (np.einsum("ih,ncij,jw->nchw", ur, g, uc),))

    def global_avg_pool(self, x):
        X = self.values[x]
        hw = X.shape[2] * X.shape[3]
        return self._op(X.mean(axis=(2, 3)), (x,),
                        lambda g: (np.broadcast_to(g[:, :, None, None] / hw, X.shape).copy(),))

    def mean(self, nodes):
        vals = [self.values[n] for n in nodes]
        k = len(vals)
        out = sum(vals[1:], vals[0]) / k
        return self._op(out, tuple(nodes), lambda g: tuple(g / k for _ in range(k)))
