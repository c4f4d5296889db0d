"""Hot inner loops, each in two flavours.

Every kernel has a loop version (compiled with numba when available) and a
vectorized numpy version with identical semantics. The public name binds to
one of them according to :data:`beetlenet._jit.USE_NUMBA`; both remain
importable so tests can check them against each other and
``benchmarks/bench_kernels.py`` can time them.
"""
import numpy as np

from ._jit import USE_NUMBA, njit

SMO_TAU = 1e-12


# ---------------------------------------------------------------- im2col ----

@njit
def _im2col_loops(xp, kh, kw, stride, ho, wo):
    n, c = xp.shape[0], xp.shape[1]
    cols = np.empty((c * kh * kw, n * ho * wo), dtype=xp.dtype)
    for ci in range(c):
        for i in range(kh):
            for j in range(kw):
                row = (ci * kh + i) * kw + j
                for b in range(n):
                    for y in range(ho):
                        base = (b * ho + y) * wo
                        sy = i + y * stride
                        for x in range(wo):
                            cols[row, base + x] = xp[b, ci, sy, j + x * stride]
    return cols


def _im2col_numpy(xp, kh, kw, stride, ho, wo):
    n, c = xp.shape[:2]
    cols = np.empty((c, kh, kw, n, ho, wo), dtype=xp.dtype)
    for i in range(kh):
        for j in range(kw):
            win = xp[:, :, i:i + stride * ho:stride, j:j + stride * wo:stride]
            cols[:, i, j] = win.transpose(1, 0, 2, 3)
    return cols.reshape(c * kh * kw, n * ho * wo)


@njit
def _col2im_loops(cols, n, c, hp, wp, kh, kw, stride, ho, wo):
    xp = np.zeros((n, c, hp, wp), dtype=cols.dtype)
    for ci in range(c):
        for i in range(kh):
            for j in range(kw):
                row = (ci * kh + i) * kw + j
                for b in range(n):
                    for y in range(ho):
                        base = (b * ho + y) * wo
                        sy = i + y * stride
                        for x in range(wo):
                            xp[b, ci, sy, j + x * stride] += cols[row, base + x]
    return xp


def _col2im_numpy(cols, n, c, hp, wp, kh, kw, stride, ho, wo):
    xp = np.zeros((n, c, hp, wp), dtype=cols.dtype)
    cols = cols.reshape(c, kh, kw, n, ho, wo)
    for i in range(kh):
        for j in range(kw):
            xp[:, :, i:i + stride * ho:stride, j:j + stride * wo:stride] += cols[:, i, j].transpose(1, 0, 2, 3)
    return xp


# --------------------------------------------------------------- maxpool ----

@njit
def _maxpool_forward_loops(xp, k, stride, ho, wo):
    n, c = xp.shape[0], xp.shape[1]
    out = np.empty((n, c, ho, wo), dtype=xp.dtype)
    arg = np.empty((n, c, ho, wo), dtype=np.int64)
    for b in range(n):
        for ci in range(c):
            for y in range(ho):
                for x in range(wo):
                    best = -np.inf
                    best_k = 0
                    for i in range(k):
                        for j in range(k):
                            v = xp[b, ci, y * stride + i, x * stride + j]
                            if v > best:
                                best = v
                                best_k = i * k + j
                    out[b, ci, y, x] = best
                    arg[b, ci, y, x] = best_k
    return out, arg


def _maxpool_forward_numpy(xp, k, stride, ho, wo):
    wins = np.stack([xp[:, :, i:i + stride * ho:stride, j:j + stride * wo:stride]
                     for i in range(k) for j in range(k)], axis=0)
    arg = wins.argmax(axis=0)
    out = np.take_along_axis(wins, arg[None], axis=0)[0]
    return out, arg.astype(np.int64)


@njit
def _maxpool_backward_loops(dout, arg, hp, wp, k, stride):
    n, c, ho, wo = dout.shape
    dxp = np.zeros((n, c, hp, wp), dtype=dout.dtype)
    for b in range(n):
        for ci in range(c):
            for y in range(ho):
                for x in range(wo):
                    a = arg[b, ci, y, x]
                    dxp[b, ci, y * stride + a // k, x * stride + a % k] += dout[b, ci, y, x]
    return dxp


def _maxpool_backward_numpy(dout, arg, hp, wp, k, stride):
    n, c, ho, wo = dout.shape
    dxp = np.zeros((n, c, hp, wp), dtype=dout.dtype)
    for i in range(k):
        for j in range(k):
            sel = np.where(arg == i * k + j, dout, 0)
            dxp[:, :, i:i + stride * ho:stride, j:j + stride * wo:stride] += sel
    return dxp


# -------------------------------------------------------------- bilinear ----

@njit
def _warp_bilinear_loops(img, inv, out_h, out_w):
    h, w, ch = img.shape
    out = np.zeros((out_h, out_w, ch), dtype=np.float64)
    for y in range(out_h):
        for x in range(out_w):
            sx = inv[0, 0] * x + inv[0, 1] * y + inv[0, 2]
            sy = inv[1, 0] * x + inv[1, 1] * y + inv[1, 2]
            x0 = int(np.floor(sx))
            y0 = int(np.floor(sy))
            fx = sx - x0
            fy = sy - y0
            for dy in range(2):
                yy = y0 + dy
                if yy < 0 or yy >= h:
                    continue
                wy = fy if dy == 1 else 1.0 - fy
                for dx in range(2):
                    xx = x0 + dx
                    if xx < 0 or xx >= w:
                        continue
                    wgt = wy * (fx if dx == 1 else 1.0 - fx)
                    if wgt == 0.0:
                        continue
                    for c in range(ch):
                        out[y, x, c] += wgt * img[yy, xx, c]
    return out


def _warp_bilinear_numpy(img, inv, out_h, out_w):
    h, w, ch = img.shape
    ys, xs = np.mgrid[0:out_h, 0:out_w].astype(np.float64)
    sx = inv[0, 0] * xs + inv[0, 1] * ys + inv[0, 2]
    sy = inv[1, 0] * xs + inv[1, 1] * ys + inv[1, 2]
    x0 = np.floor(sx).astype(np.int64)
    y0 = np.floor(sy).astype(np.int64)
    fx = sx - x0
    fy = sy - y0
    out = np.zeros((out_h, out_w, ch), dtype=np.float64)
    for dy in (0, 1):
        yy = y0 + dy
        wy = fy if dy == 1 else 1.0 - fy
        for dx in (0, 1):
            xx = x0 + dx
            wgt = wy * (fx if dx == 1 else 1.0 - fx)
            ok = (yy >= 0) & (yy < h) & (xx >= 0) & (xx < w) & (wgt != 0.0)
            vals = img[np.clip(yy, 0, h - 1), np.clip(xx, 0, w - 1)]
            out += np.where(ok[..., None], wgt[..., None] * vals, 0.0)
    return out


# ----------------------------------------------------------------- t-SNE ----

@njit
def _tsne_gradient_loops(Y, P):
    n, d = Y.shape
    num = np.zeros((n, n))
    total = 0.0
    for i in range(n):
        for j in range(i + 1, n):
            s = 0.0
            for k in range(d):
                diff = Y[i, k] - Y[j, k]
                s += diff * diff
            v = 1.0 / (1.0 + s)
            num[i, j] = v
            num[j, i] = v
            total += 2.0 * v
    grad = np.zeros((n, d))
    kl = 0.0
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            q = max(num[i, j] / total, 1e-12)
            p = P[i, j]
            if p > 0.0:
                kl += p * np.log(p / q)
            mult = 4.0 * (p - q) * num[i, j]
            for k in range(d):
                grad[i, k] += mult * (Y[i, k] - Y[j, k])
    return grad, kl


def _tsne_gradient_numpy(Y, P):
    sq = np.sum(Y * Y, axis=1)
    d2 = np.maximum(sq[:, None] + sq[None, :] - 2.0 * (Y @ Y.T), 0.0)
    num = 1.0 / (1.0 + d2)
    np.fill_diagonal(num, 0.0)
    q = np.maximum(num / num.sum(), 1e-12)
    np.fill_diagonal(q, 0.0)
    mask = P > 0
    kl = float(np.sum(P[mask] * np.log(P[mask] / q[mask])))
    mult = 4.0 * (P - q) * num
    grad = mult.sum(axis=1)[:, None] * Y - mult @ Y
    return grad, kl


# ------------------------------------------------------------- distances ----

@njit
def _sq_distances_loops(A, B):
    na, nb, d = A.shape[0], B.shape[0], A.shape[1]
    out = np.empty((na, nb))
    for i in range(na):
        for j in range(nb):
            s = 0.0
            for k in range(d):
                diff = A[i, k] - B[j, k]
                s += diff * diff
            out[i, j] = s
    return out


def _sq_distances_numpy(A, B, max_elements=1 << 22):
    # explicit differences (not the |a|^2 + |b|^2 - 2ab expansion) so that
    # equal distances compare equal, which neighbour tie-breaking relies on
    out = np.empty((A.shape[0], B.shape[0]))
    chunk = max(1, max_elements // max(1, B.shape[0] * A.shape[1]))
    for start in range(0, A.shape[0], chunk):
        diff = A[start:start + chunk, None, :] - B[None, :, :]
        out[start:start + chunk] = np.einsum("ijk,ijk->ij", diff, diff)
    return out


# ------------------------------------------------------------------- SMO ----

@njit
def _smo_solve_loops(K, y, C, tol, max_iter):
    n = y.shape[0]
    alpha = np.zeros(n)
    G = -np.ones(n)
    it = 0
    gap = np.inf
    while it < max_iter:
        gmax = -np.inf
        i = -1
        for t in range(n):
            if (y[t] > 0 and alpha[t] < C) or (y[t] < 0 and alpha[t] > 0):
                v = -y[t] * G[t]
                if v > gmax:
                    gmax = v
                    i = t
        if i < 0:
            gap = 0.0
            break
        gmin = np.inf
        j = -1
        obj_min = np.inf
        for t in range(n):
            if (y[t] > 0 and alpha[t] > 0) or (y[t] < 0 and alpha[t] < C):
                v = -y[t] * G[t]
                if v < gmin:
                    gmin = v
                b = gmax - v
                if b > 0:
                    a = K[i, i] + K[t, t] - 2.0 * K[i, t]
                    if a <= 0:
                        a = SMO_TAU
                    o = -(b * b) / a
                    if o < obj_min:
                        obj_min = o
                        j = t
        gap = gmax - gmin
        if gap < tol or j < 0:
            break
        ai_old = alpha[i]
        aj_old = alpha[j]
        quad = K[i, i] + K[j, j] - 2.0 * K[i, j]
        if quad <= 0:
            quad = SMO_TAU
        if y[i] != y[j]:
            delta = (-G[i] - G[j]) / quad
            diff = ai_old - aj_old
            alpha[i] = ai_old + delta
            alpha[j] = aj_old + delta
            if diff > 0:
                if alpha[j] < 0:
                    alpha[j] = 0.0
                    alpha[i] = diff
            else:
                if alpha[i] < 0:
                    alpha[i] = 0.0
                    alpha[j] = -diff
            if diff > 0:
                if alpha[i] > C:
                    alpha[i] = C
                    alpha[j] = C - diff
            else:
                if alpha[j] > C:
                    alpha[j] = C
                    alpha[i] = C + diff
        else:
            delta = (G[i] - G[j]) / quad
            total = ai_old + aj_old
            alpha[i] = ai_old - delta
            alpha[j] = aj_old + delta
            if total > C:
                if alpha[i] > C:
                    alpha[i] = C
                    alpha[j] = total - C
            else:
                if alpha[j] < 0:
                    alpha[j] = 0.0
                    alpha[i] = total
            if total > C:
                if alpha[j] > C:
                    alpha[j] = C
                    alpha[i] = total - C
            else:
                if alpha[i] < 0:
                    alpha[i] = 0.0
                    alpha[j] = total
        dai = alpha[i] - ai_old
        daj = alpha[j] - aj_old
        yi = y[i]
        yj = y[j]
        for t in range(n):
            G[t] += y[t] * yi * K[t, i] * dai + y[t] * yj * K[t, j] * daj
        it += 1
    return alpha, G, it, gap


def _smo_solve_numpy(K, y, C, tol, max_iter):
    n = y.shape[0]
    alpha = np.zeros(n)
    G = -np.ones(n)
    diag = np.diag(K).copy()
    pos = y > 0
    it = 0
    gap = np.inf
    while it < max_iter:
        up = (pos & (alpha < C)) | (~pos & (alpha > 0))
        low = (pos & (alpha > 0)) | (~pos & (alpha < C))
        v = -y * G
        if not up.any():
            gap = 0.0
            break
        i = int(np.argmax(np.where(up, v, -np.inf)))
        gmax = v[i]
        gmin = np.where(low, v, np.inf).min()
        b = gmax - v
        cand = low & (b > 0)
        a = diag[i] + diag - 2.0 * K[i]
        a = np.where(a <= 0, SMO_TAU, a)
        obj = np.where(cand, -(b * b) / a, np.inf)
        gap = gmax - gmin
        if gap < tol or not cand.any():
            break
        j = int(np.argmin(obj))
        ai_old, aj_old = alpha[i], alpha[j]
        quad = K[i, i] + K[j, j] - 2.0 * K[i, j]
        if quad <= 0:
            quad = SMO_TAU
        if y[i] != y[j]:
            delta = (-G[i] - G[j]) / quad
            diff = ai_old - aj_old
            ai, aj = ai_old + delta, aj_old + delta
            if diff > 0:
                if aj < 0:
                    aj, ai = 0.0, diff
            elif ai < 0:
                ai, aj = 0.0, -diff
            if diff > 0:
                if ai > C:
                    ai, aj = C, C - diff
            elif aj > C:
                aj, ai = C, C + diff
        else:
            delta = (G[i] - G[j]) / quad
            total = ai_old + aj_old
            ai, aj = ai_old - delta, aj_old + delta
            if total > C:
                if ai > C:
                    ai, aj = C, total - C
            elif aj < 0:
                aj, ai = 0.0, total
            if total > C:
                if aj > C:
                    aj, ai = C, total - C
            elif ai < 0:
                ai, aj = 0.0, total
        alpha[i], alpha[j] = ai, aj
        G += y * y[i] * K[:, i] * (ai - ai_old) + y * y[j] * K[:, j] * (aj - aj_old)
        it += 1
    return alpha, G, it, gap


# ------------------------------------------------------------ Gini split ----

@njit
def _best_split_loops(X, y, features, n_classes, min_leaf):
    """Return (feature, threshold, score); score is n times the weighted
    child Gini impurity, feature is -1 when no valid split exists."""
    n = X.shape[0]
    total = np.zeros(n_classes)
    for k in range(n):
        total[y[k]] += 1.0
    best_score = np.inf
    best_f = -1
    best_thr = 0.0
    left = np.zeros(n_classes)
    right = np.zeros(n_classes)
    for f in features:
        col = X[:, f]
        order = np.argsort(col, kind="mergesort")
        for c in range(n_classes):
            left[c] = 0.0
            right[c] = total[c]
        for k in range(n - 1):
            cls = y[order[k]]
            left[cls] += 1.0
            right[cls] -= 1.0
            xv = col[order[k]]
            xn = col[order[k + 1]]
            if xv == xn:
                continue
            nl = k + 1.0
            nr = n - nl
            if nl < min_leaf or nr < min_leaf:
                continue
            sl = 0.0
            sr = 0.0
            for c in range(n_classes):
                sl += left[c] * left[c]
                sr += right[c] * right[c]
            score = (nl - sl / nl) + (nr - sr / nr)
            if score < best_score:
                best_score = score
                best_f = f
                thr = xv + (xn - xv) / 2.0
                best_thr = xv if thr >= xn else thr
    return best_f, best_thr, best_score


def _best_split_numpy(X, y, features, n_classes, min_leaf):
    n = X.shape[0]
    onehot = np.zeros((n, n_classes))
    onehot[np.arange(n), y] = 1.0
    total = onehot.sum(axis=0)
    nl = np.arange(1, n, dtype=np.float64)
    nr = n - nl
    best_score, best_f, best_thr = np.inf, -1, 0.0
    for f in features:
        col = X[:, f]
        order = np.argsort(col, kind="mergesort")
        xs = col[order]
        left = np.cumsum(onehot[order], axis=0)[:-1]
        right = total - left
        sl = np.zeros(n - 1)
        sr = np.zeros(n - 1)
        for c in range(n_classes):
            sl += left[:, c] * left[:, c]
            sr += right[:, c] * right[:, c]
        score = (nl - sl / nl) + (nr - sr / nr)
        valid = (xs[:-1] != xs[1:]) & (nl >= min_leaf) & (nr >= min_leaf)
        if not valid.any():
            continue
        score = np.where(valid, score, np.inf)
        k = int(np.argmin(score))
        if score[k] < best_score:
            best_score = score[k]
            best_f = int(f)
            xv, xn = xs[k], xs[k + 1]
            thr = xv + (xn - xv) / 2.0
            best_thr = xv if thr >= xn else thr
    return best_f, float(best_thr), float(best_score)


# ------------------------------------------------------------- dispatch -----

KERNELS = {
    "im2col": (_im2col_loops, _im2col_numpy),
    "col2im": (_col2im_loops, _col2im_numpy),
    "maxpool_forward": (_maxpool_forward_loops, _maxpool_forward_numpy),
    "maxpool_backward": (_maxpool_backward_loops, _maxpool_backward_numpy),
    "warp_bilinear": (_warp_bilinear_loops, _warp_bilinear_numpy),
    "tsne_gradient": (_tsne_gradient_loops, _tsne_gradient_numpy),
    "sq_distances": (_sq_distances_loops, _sq_distances_numpy),
    "smo_solve": (_smo_solve_loops, _smo_solve_numpy),
    "best_split": (_best_split_loops, _best_split_numpy),
}

_pick = 0 if USE_NUMBA else 1
im2col = KERNELS["im2col"][_pick]
col2im = KERNELS["col2im"][_pick]
maxpool_forward = KERNELS["maxpool_forward"][_pick]
maxpool_backward = KERNELS["maxpool_backward"][_pick]
warp_bilinear = KERNELS["warp_bilinear"][_pick]
tsne_gradient = KERNELS["tsne_gradient"][_pick]
sq_distances = KERNELS["sq_distances"][_pick]
smo_solve = KERNELS["smo_solve"][_pick]
best_split = KERNELS["best_split"][_pick]
