"""Starting values: least-squares superposition and a best-scoring monotone matching.

The sampler can start from any matching; a good start shortens burn-in. The
search here superposes short fragment pairs, scores each superposition by how
many points land near a partner, then alternates an affine-gap dynamic program
with refitting the superposition on its pairs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .domain import Matching


def kabsch(x: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Proper rotation R and translation t minimizing sum |x_i - R y_i - t|^2."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 2 or x.shape[1] != 3 or x.shape[0] < 1:
        raise ValueError("kabsch needs two (n, 3) arrays of equal shape")
    cx, cy = x.mean(axis=0), y.mean(axis=0)
    cov = (x - cx).T @ (y - cy)
    u, _, vt = np.linalg.svd(cov)
    flip = np.sign(np.linalg.det(u @ vt)) or 1.0
    rot = u @ np.diag([1.0, 1.0, flip]) @ vt
    return rot, cx - rot @ cy


def _batched_kabsch(xs: np.ndarray, ys: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Kabsch over a stack of fragment pairs; also returns each fragment's RMSD."""
    cx = xs.mean(axis=1, keepdims=True)
    cy = ys.mean(axis=1, keepdims=True)
    xc, yc = xs - cx, ys - cy
    cov = np.einsum("bia,bic->bac", xc, yc)
    u, _, vt = np.linalg.svd(cov)
    d = np.sign(np.linalg.det(u @ vt))
    d[d == 0] = 1.0
    u[:, :, 2] *= d[:, None]
    rot = u @ vt
    tau = cx[:, 0] - np.einsum("bac,bc->ba", rot, cy[:, 0])
    res = xc - np.einsum("bac,bic->bia", rot, yc)
    rmsd = np.sqrt((res**2).sum(axis=(1, 2)) / xs.shape[1])
    return rot, tau, rmsd


def pair_scores(x: np.ndarray, ty: np.ndarray, v: float, sigma: float) -> np.ndarray:
    """Log-likelihood gain of each candidate pair under the hidden-point model."""
    d2 = ((x[:, None, :] - ty[None, :, :]) ** 2).sum(axis=2)
    return math.log(v) - 1.5 * math.log(4.0 * math.pi * sigma**2) - d2 / (4.0 * sigma**2)


def best_matching(w: np.ndarray, g: float, h: float) -> tuple[list, float]:
    """Monotone matching maximizing sum of w[j, k] minus the affine gap penalty.

    Same lattice and sentinels as the normalizer recursion, in max-plus form.
    Returns 1-based pairs and the optimal score.
    """
    m, n = w.shape
    width = n + 2
    ninf = -np.inf
    wpad = np.zeros((m + 2, width))
    wpad[1:m + 1, 1:n + 1] = w
    wpad[1:m + 1, [0, n + 1]] = ninf
    wpad[m + 1, 1:n + 1] = ninf
    F = np.full((m + 2, width), ninf)
    F[0, 0] = 0.0
    c_prev = F[0].copy()
    c_pp = np.full(width, ninf)
    ramp = np.arange(width) * h
    for j in range(1, m + 2):
        grow = np.maximum(F[j - 1], c_pp - g)
        dacc = np.maximum.accumulate(grow + ramp) - ramp
        row = np.full(width, ninf)
        row[1:] = grow[:-1]
        row[2:] = np.maximum(row[2:], dacc[:-2] - g)
        F[j] = row + wpad[j]
        F[j, 0] = ninf
        c_row = np.maximum(F[j], c_prev - h)
        c_pp, c_prev = c_prev, c_row
    best = F[m + 1, n + 1]
    # trace back by searching for the predecessor that attains each score
    pairs = []
    j, k = m + 1, n + 1
    jr = np.arange(m + 2)
    kr = np.arange(width)
    while (j, k) != (0, 0):
        target = F[j, k] - wpad[j, k]
        rj = j - jr[:j]
        rk = k - kr[:k]
        fj = np.where(rj == 1, 0.0, g + (rj - 2) * h)
        fk = np.where(rk == 1, 0.0, g + (rk - 2) * h)
        cand = F[:j, :k] - fj[:, None] - fk[None, :]
        idx = np.unravel_index(int(np.argmax(cand)), cand.shape)
        if not np.isclose(cand[idx], target, rtol=1e-9, atol=1e-9):
            raise RuntimeError("traceback failed to find a predecessor")
        j, k = int(idx[0]), int(idx[1])
        if j:
            pairs.append((j, k))
    return pairs[::-1], float(best)


@dataclass(frozen=True)
class Seed:
    matching: Matching
    rotation: np.ndarray
    tau: np.ndarray
    score: float


def initial_alignment(x: np.ndarray, y: np.ndarray, v: float = 5000.0, g: float = 4.0,
                      h: float = 0.1, sigma: float = 1.0, fragment: int = 4,
                      n_seeds: int = 20, rounds: int = 6, radius: float = 3.0) -> Seed:
    """Best refined superposition among the most promising fragment seeds."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    m, n = len(x), len(y)
    frag = min(fragment, m, n)
    if frag < 3:
        return Seed(Matching.empty(m, n), np.eye(3), x.mean(0) - y.mean(0), -math.inf)
    ix = np.arange(m - frag + 1)[:, None] + np.arange(frag)
    iy = np.arange(n - frag + 1)[:, None] + np.arange(frag)
    a, b = np.meshgrid(np.arange(len(ix)), np.arange(len(iy)), indexing="ij")
    a, b = a.ravel(), b.ravel()
    rot, tau, frmsd = _batched_kabsch(x[ix[a]], y[iy[b]])
    keep = np.argsort(frmsd)[: max(n_seeds * 25, 200)]
    tree = cKDTree(x)
    counts = np.empty(len(keep))
    for i, c in enumerate(keep):
        counts[i] = sum(1 for hits in tree.query_ball_point(y @ rot[c].T + tau[c], radius) if hits)
    order = keep[np.argsort(-counts, kind="stable")[:n_seeds]]
    best = None
    for c in order:
        r, t = rot[c], tau[c]
        pairs, score = [], -math.inf
        for _ in range(rounds):
            new_pairs, new_score = best_matching(pair_scores(x, y @ r.T + t, v, sigma), g, h)
            if len(new_pairs) < 3 or new_pairs == pairs:
                pairs, score = new_pairs, new_score
                break
            pairs, score = new_pairs, new_score
            arr = np.asarray(pairs) - 1
            r, t = kabsch(x[arr[:, 0]], y[arr[:, 1]])
        if best is None or score > best.score:
            best = Seed(Matching(tuple(pairs), m, n), r, t, score)
    return best
