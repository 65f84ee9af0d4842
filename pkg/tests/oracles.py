"""Independent reference implementations used as test oracles.

Everything here is written directly from first principles (brute-force
enumeration, direct formula transcription, Monte-Carlo estimation) and
deliberately shares no code with the library paths it checks.
"""

from __future__ import annotations

import math

import numpy as np


# --- classic SLIC (color + pixel position only) -------------------------

def classic_slic(lab, n_superpixels, m=10.0, max_iters=10):
    """Reference SLIC: grid seeds, gradient perturbation, 2S windows,
    distance ||dlab||/m + ||dpix||/S, mean updates."""
    h, w = lab.shape[:2]
    S = max(1, int(round(np.sqrt(h * w / n_superpixels))))
    ny = max(1, int(round(h / S)))
    nx = max(1, int(round(w / S)))
    seeds = [(int((i + 0.5) * h / ny), int((j + 0.5) * w / nx))
             for i in range(ny) for j in range(nx)]
    grad = np.zeros((h, w))
    for ch in range(lab.shape[2]):
        p = lab[..., ch]
        rp = np.vstack([p[1:], p[-1:]])
        rm = np.vstack([p[:1], p[:-1]])
        cp = np.hstack([p[:, 1:], p[:, -1:]])
        cm = np.hstack([p[:, :1], p[:, :-1]])
        grad += (rp - rm) ** 2 + (cp - cm) ** 2
    pert = []
    for (r, c) in seeds:
        best = None
        for rr in range(max(0, r - 1), min(h, r + 2)):
            for cc in range(max(0, c - 1), min(w, c + 2)):
                if best is None or grad[rr, cc] < best[0]:
                    best = (grad[rr, cc], rr, cc)
        pert.append((best[1], best[2]))
    c_lab = np.array([lab[r, c] for r, c in pert], dtype=float)
    c_pos = np.array(pert, dtype=float)
    rows = np.arange(h, dtype=float)
    cols = np.arange(w, dtype=float)
    labels = None
    for _ in range(max_iters):
        dist = np.full((h, w), np.inf)
        labels = np.full((h, w), -1, dtype=np.int64)
        for k in range(len(pert)):
            r0 = max(0, int(round(c_pos[k][0])) - S)
            r1 = min(h, int(round(c_pos[k][0])) + S + 1)
            c0 = max(0, int(round(c_pos[k][1])) - S)
            c1 = min(w, int(round(c_pos[k][1])) + S + 1)
            if r0 >= r1 or c0 >= c1:
                continue
            dlab = np.linalg.norm(lab[r0:r1, c0:c1] - c_lab[k], axis=-1)
            dr = rows[r0:r1, None] - c_pos[k][0]
            dc = cols[None, c0:c1] - c_pos[k][1]
            D = dlab / m + np.sqrt(dr * dr + dc * dc) / S
            win = dist[r0:r1, c0:c1]
            sel = D < win
            win[sel] = D[sel]
            labels[r0:r1, c0:c1][sel] = k
        if (labels < 0).any():
            miss = np.argwhere(labels < 0)
            d2 = ((miss[:, 0:1] - c_pos[None, :, 0].reshape(1, -1)) ** 2
                  + (miss[:, 1:2] - c_pos[None, :, 1].reshape(1, -1)) ** 2)
            labels[miss[:, 0], miss[:, 1]] = np.argmin(d2, axis=1)
        for k in range(len(pert)):
            sel = labels == k
            if sel.any():
                c_lab[k] = lab[sel].mean(axis=0)
                rr, cc = np.nonzero(sel)
                c_pos[k] = (rr.mean(), cc.mean())
    return labels


def classic_connectivity(labels):
    """Reference orphan-absorbing connectivity pass (same contract)."""
    h, w = labels.shape
    comp = -np.ones(h * w, dtype=np.int64)
    flat = labels.ravel()
    comps = []
    for s in range(h * w):
        if comp[s] >= 0:
            continue
        cid = len(comps)
        lab = int(flat[s])
        comp[s] = cid
        stack, pix = [s], [s]
        while stack:
            p = stack.pop()
            r, c = divmod(p, w)
            for q in ((p - w) if r else -1, (p + w) if r + 1 < h else -1,
                      (p - 1) if c else -1, (p + 1) if c + 1 < w else -1):
                if q >= 0 and comp[q] < 0 and flat[q] == lab:
                    comp[q] = cid
                    stack.append(q)
                    pix.append(q)
        comps.append((lab, pix))
    keep = {}
    for cid, (lab, pix) in enumerate(comps):
        if lab not in keep or len(pix) > len(comps[keep[lab]][1]):
            keep[lab] = cid
    out = flat.astype(np.int64).copy()
    sizes = {lab: len(comps[cid][1]) for lab, cid in keep.items()}
    for cid, (lab, pix) in enumerate(comps):
        if keep[lab] == cid:
            continue
        neigh = set()
        for p in pix:
            r, c = divmod(p, w)
            for q in ((p - w) if r else -1, (p + w) if r + 1 < h else -1,
                      (p - 1) if c else -1, (p + 1) if c + 1 < w else -1):
                if q >= 0 and comp[q] != cid:
                    neigh.add(int(out[q]))
        neigh.discard(lab)
        if not neigh:
            continue
        tgt = max(neigh, key=lambda l: (sizes.get(l, 0), -l))
        for p in pix:
            out[p] = tgt
        sizes[tgt] = sizes.get(tgt, 0) + len(pix)
    _, inv = np.unique(out, return_inverse=True)
    return inv.reshape(h, w)


def label_agreement(a, b):
    """Pixel agreement after greedy overlap-based label matching."""
    mapped = np.empty_like(np.asarray(a))
    for ia in np.unique(a):
        vals, cnts = np.unique(np.asarray(b)[a == ia], return_counts=True)
        mapped[a == ia] = vals[np.argmax(cnts)]
    return float((mapped == b).mean())


# --- GLCM brute force ----------------------------------------------------

def glcm_brute(gray, levels, offsets, mask=None):
    """Explicit double loop over pixel pairs; returns the six statistics
    in the library's field order."""
    gray = np.asarray(gray, dtype=np.float64)
    h, w = gray.shape
    q = np.clip((gray * levels / 256.0).astype(int), 0, levels - 1)
    if mask is None:
        mask = np.ones((h, w), dtype=bool)
    counts = np.zeros((levels, levels))
    for dr, dc in offsets:
        for r in range(h):
            for c in range(w):
                r2, c2 = r + dr, c + dc
                if 0 <= r2 < h and 0 <= c2 < w and mask[r, c] and mask[r2, c2]:
                    counts[q[r, c], q[r2, c2]] += 1
                    counts[q[r2, c2], q[r, c]] += 1
    total = counts.sum()
    if total == 0:
        raise ValueError("no pairs")
    p = counts / total
    i = np.arange(levels, dtype=float)
    px = p.sum(axis=1)
    py = p.sum(axis=0)
    mu_x = px @ i
    mu_y = py @ i
    var_x = px @ (i - mu_x) ** 2
    var_y = py @ (i - mu_y) ** 2
    energy = np.sum(p * p)
    dissimilarity = sum(p[a, b] * abs(a - b)
                        for a in range(levels) for b in range(levels))
    homogeneity = sum(p[a, b] / (1 + (a - b) ** 2)
                      for a in range(levels) for b in range(levels))
    entropy = -sum(p[a, b] * math.log(p[a, b])
                   for a in range(levels) for b in range(levels) if p[a, b] > 0)
    if var_x <= 0 or var_y <= 0:
        corr = 0.0
        imc1 = 0.0
    else:
        corr = sum(p[a, b] * (a - mu_x) * (b - mu_y)
                   for a in range(levels) for b in range(levels))
        corr /= math.sqrt(var_x * var_y)
        hxy1 = -sum(p[a, b] * math.log(px[a] * py[b])
                    for a in range(levels) for b in range(levels)
                    if p[a, b] > 0 and px[a] * py[b] > 0)
        hx = -sum(v * math.log(v) for v in px if v > 0)
        hy = -sum(v * math.log(v) for v in py if v > 0)
        denom = max(hx, hy)
        imc1 = (entropy - hxy1) / denom if denom > 0 else 0.0
    return np.array([corr, energy, imc1, homogeneity, dissimilarity, entropy])


# --- vMF sampling (Wood-style inversion on S^2) --------------------------

def sample_vmf(eta, kappa, n, rng):
    u = rng.random(n)
    if kappa < 1e-8:
        w = 2.0 * u - 1.0
    else:
        w = 1.0 + np.log(u + (1.0 - u) * np.exp(-2.0 * kappa)) / kappa
    phi = 2.0 * np.pi * rng.random(n)
    s = np.sqrt(np.maximum(0.0, 1.0 - w ** 2))
    local = np.stack([s * np.cos(phi), s * np.sin(phi), w], axis=1)
    z = np.array([0.0, 0.0, 1.0])
    eta = np.asarray(eta, dtype=float)
    eta = eta / np.linalg.norm(eta)
    v = np.cross(z, eta)
    c = float(z @ eta)
    if np.linalg.norm(v) < 1e-12:
        R = np.eye(3) if c > 0 else np.diag([1.0, -1.0, -1.0])
    else:
        vx = np.array([[0, -v[2], v[1]], [v[2], 0, -v[0]], [-v[1], v[0], 0]])
        R = np.eye(3) + vx + vx @ vx * ((1 - c) / (v @ v))
    return local @ R.T


def vmf_log_pdf_ref(v, eta, kappa):
    """Direct transcription: log kappa - log(4 pi sinh kappa) + kappa <eta, v>."""
    v = np.atleast_2d(v)
    if kappa < 1e-8:
        const = -math.log(4.0 * math.pi)
    elif kappa > 30:
        log_sinh = kappa - math.log(2.0) + math.log1p(-math.exp(-2 * kappa))
        const = math.log(kappa) - math.log(4 * math.pi) - log_sinh
    else:
        const = math.log(kappa) - math.log(4 * math.pi * math.sinh(kappa))
    return const + kappa * (v @ np.asarray(eta, dtype=float))


def gaussian_log_pdf_ref(x, mu, sigma):
    x = np.atleast_2d(x)
    diff = x - np.asarray(mu, dtype=float)
    inv = np.linalg.inv(sigma)
    quad = np.einsum("ni,ij,nj->n", diff, inv, diff)
    _, logdet = np.linalg.slogdet(sigma)
    return -0.5 * (3 * math.log(2 * math.pi) + logdet + quad)


# --- saliency metric references ------------------------------------------

def f_measure_brute(pred, gt, beta2=0.3):
    pred = np.asarray(pred, dtype=float)
    gt = np.asarray(gt).astype(bool)
    t = min(2.0 * pred.mean(), 1.0)
    tp = fp = fn = 0
    for r in range(pred.shape[0]):
        for c in range(pred.shape[1]):
            fg = pred[r, c] >= t
            if fg and gt[r, c]:
                tp += 1
            elif fg:
                fp += 1
            elif gt[r, c]:
                fn += 1
    p = tp / (tp + fp) if tp + fp else 0.0
    r_ = tp / (tp + fn) if tp + fn else 0.0
    if p + r_ == 0:
        return 0.0
    return (1 + beta2) * p * r_ / (beta2 * p + r_)


def mae_brute(pred, gt):
    pred = np.asarray(pred, dtype=float)
    gt = np.asarray(gt).astype(float)
    total = 0.0
    for r in range(pred.shape[0]):
        for c in range(pred.shape[1]):
            total += abs(pred[r, c] - gt[r, c])
    return total / pred.size


def s_measure_ref(pred, gt, alpha=0.5):
    """Independent transcription of the structure-measure pseudocode."""
    pred = np.asarray(pred, dtype=float)
    gt = np.asarray(gt).astype(bool)
    eps = np.spacing(1.0)
    y = gt.mean()
    if y == 0:
        return 1.0 - pred.mean()
    if y == 1:
        return float(pred.mean())

    def object_score(vals):
        if vals.size == 0:
            return 0.0
        x = vals.mean()
        sd = vals.std(ddof=1) if vals.size > 1 else 0.0
        return 2.0 * x / (x * x + 1.0 + sd + eps)

    fg = pred.copy()
    fg[~gt] = 0
    bg = 1.0 - pred
    bg[gt] = 0
    s_o = y * object_score(fg[gt]) + (1 - y) * object_score(bg[~gt])

    h, w = gt.shape
    total = gt.sum()
    cols = np.arange(1, w + 1)
    rows = np.arange(1, h + 1)
    X = int(round((gt.sum(axis=0) @ cols) / total))
    Y = int(round((gt.sum(axis=1) @ rows) / total))

    def ssim_ref(p, g):
        n = p.size
        if n == 0:
            return 1.0
        x = p.mean()
        yv = g.mean()
        if n > 1:
            sx = ((p - x) ** 2).sum() / (n - 1)
            sy = ((g - yv) ** 2).sum() / (n - 1)
            sxy = ((p - x) * (g - yv)).sum() / (n - 1)
        else:
            sx = sy = sxy = 0.0
        a = 4 * x * yv * sxy
        b = (x * x + yv * yv) * (sx + sy)
        if a != 0:
            return a / (b + eps)
        return 1.0 if b == 0 else 0.0

    gtf = gt.astype(float)
    quads = [(slice(None, Y), slice(None, X)), (slice(None, Y), slice(X, None)),
             (slice(Y, None), slice(None, X)), (slice(Y, None), slice(X, None))]
    weights = [X * Y / (w * h), (w - X) * Y / (w * h), X * (h - Y) / (w * h)]
    weights.append(1.0 - sum(weights))
    s_r = sum(wq * ssim_ref(pred[q], gtf[q]) for wq, q in zip(weights, quads))
    return max(alpha * s_o + (1 - alpha) * s_r, 0.0)


def e_measure_ref(pred, gt):
    pred = np.asarray(pred, dtype=float)
    gt = np.asarray(gt).astype(float)
    eps = np.spacing(1.0)
    t = min(2.0 * pred.mean(), 1.0)
    fm = (pred >= t).astype(float)
    if gt.sum() == 0:
        enhanced = 1.0 - fm
    elif gt.sum() == gt.size:
        enhanced = fm
    else:
        a_fm = fm - fm.mean()
        a_gt = gt - gt.mean()
        align = 2 * a_gt * a_fm / (a_gt ** 2 + a_fm ** 2 + eps)
        enhanced = (align + 1) ** 2 / 4
    return float(enhanced.mean())


def boundary_pixels_ref(labels):
    h, w = labels.shape
    out = []
    for r in range(h):
        for c in range(w):
            if c + 1 < w and labels[r, c] != labels[r, c + 1]:
                out.append((r, c))
            elif r + 1 < h and labels[r, c] != labels[r + 1, c]:
                out.append((r, c))
    return out


def bde_brute(seg, gt_seg):
    b1 = boundary_pixels_ref(np.asarray(seg))
    b2 = boundary_pixels_ref(np.asarray(gt_seg))
    if not b1 or not b2:
        raise ValueError("empty boundary")

    def mean_min(src, dst):
        total = 0.0
        for (r, c) in src:
            best = min(math.hypot(r - r2, c - c2) for (r2, c2) in dst)
            total += best
        return total / len(src)

    return 0.5 * (mean_min(b1, b2) + mean_min(b2, b1))


def voi_brute(seg, gt_seg):
    seg = np.asarray(seg).ravel()
    gt = np.asarray(gt_seg).ravel()
    n = seg.size
    from collections import Counter

    joint = Counter(zip(seg.tolist(), gt.tolist()))
    ps = Counter(seg.tolist())
    pg = Counter(gt.tolist())
    h_joint = -sum((v / n) * math.log(v / n) for v in joint.values())
    h_s = -sum((v / n) * math.log(v / n) for v in ps.values())
    h_g = -sum((v / n) * math.log(v / n) for v in pg.values())
    return (h_joint - h_g) + (h_joint - h_s)


# --- geometry -------------------------------------------------------------

def point_in_hull(points, hull_vertices, tol=1e-9):
    """Exhaustive check: every point inside (or on) the hull of the given
    vertices, via the hull's facet half-spaces."""
    from scipy.spatial import ConvexHull

    hull = ConvexHull(hull_vertices)
    eq = hull.equations
    pts = np.asarray(points, dtype=float)
    vals = pts @ eq[:, :3].T + eq[:, 3]
    return np.all(vals <= tol, axis=1)


def five_term_distance_ref(pixel, center, m, S, a, b, d):
    """Direct transcription of the modified SLIC distance."""
    dc = math.dist(pixel["lab"], center["lab"])
    dp = math.dist(pixel["pixel"], center["pixel"])
    ds = math.dist(pixel["pos"], center["pos"])
    dth = abs(pixel["theta"] - center["theta"])
    dth = min(dth, 2 * math.pi - dth)
    dal = abs(pixel["alpha"] - center["alpha"])
    return dc / m + dp / S + ds / a + dth / b + dal / d


# --- misc baselines -------------------------------------------------------

def depth_saliency_mask(depth, quantile=0.2):
    """Foreground-biased baseline: keep the nearest fraction of pixels."""
    depth = np.asarray(depth, dtype=float)
    valid = depth > 0
    thr = np.quantile(depth[valid], quantile)
    return valid & (depth <= thr)


def random_mask(shape, rng, n_rects=3):
    mask = np.zeros(shape, dtype=bool)
    h, w = shape
    for _ in range(n_rects):
        r0 = int(rng.integers(0, max(1, h - 40)))
        c0 = int(rng.integers(0, max(1, w - 50)))
        mask[r0:r0 + int(rng.integers(20, 40)),
             c0:c0 + int(rng.integers(25, 50))] = True
    return mask
