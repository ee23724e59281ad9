"""PAM substitution matrices, the sequence likelihood and the prior on PAM distance.

Residue codes are 1..20 in the alphabetical one-letter order ACDEFGHIKLMNPQRSTVWY.
Row a, column b of a transition matrix is the probability that a becomes b.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.special import log_ndtr

from .domain import AMINO_ACIDS, Matching

N_STATES = 20


@dataclass(frozen=True, eq=False)
class SubstitutionChain:
    """One-step amino-acid transition matrix ``p1`` and stationary abundances ``q``."""

    p1: np.ndarray
    q: np.ndarray

    def __post_init__(self):
        p1 = np.array(self.p1, dtype=float)
        q = np.array(self.q, dtype=float)
        if p1.shape != (N_STATES, N_STATES) or q.shape != (N_STATES,):
            raise ValueError("expected a 20x20 transition matrix and 20 abundances")
        if (p1 < 0).any() or (q < 0).any():
            raise ValueError("probabilities must be non-negative")
        if not np.allclose(p1.sum(axis=1), 1.0, rtol=0, atol=1e-10):
            raise ValueError("rows of p1 must sum to 1")
        if abs(q.sum() - 1.0) > 1e-10:
            raise ValueError("abundances must sum to 1")
        p1.setflags(write=False)
        q.setflags(write=False)
        object.__setattr__(self, "p1", p1)
        object.__setattr__(self, "q", q)

    def is_reversible(self, tol: float = 1e-12) -> bool:
        flow = self.q[:, None] * self.p1
        return bool(np.allclose(flow, flow.T, rtol=0, atol=tol))


def chain_power(chain: SubstitutionChain, l: int) -> np.ndarray:
    """l-step transition matrix (numpy's matrix_power squares and multiplies)."""
    if l < 1:
        raise ValueError(f"PAM distance must be >= 1, got {l}")
    return np.linalg.matrix_power(chain.p1, int(l))


@dataclass(frozen=True, eq=False)
class PamMatrix:
    """Odds ratios psi[a, b] = q_a p^(l)[a, b] / (q_a q_b) = p^(l)[a, b] / q_b."""

    l: int
    psi: np.ndarray = field(repr=False)
    log_psi: np.ndarray = field(repr=False)


def build_pam(chain: SubstitutionChain, l: int) -> PamMatrix:
    if (chain.q <= 0).any():
        raise ValueError("zero abundances make the odds ratio undefined")
    psi = chain_power(chain, l) / chain.q[None, :]
    with np.errstate(divide="ignore"):
        log_psi = np.log(psi)
    psi.setflags(write=False)
    log_psi.setflags(write=False)
    return PamMatrix(int(l), psi, log_psi)


def log_seq_likelihood(sx: Sequence[int], sy: Sequence[int], mt: Matching, pam: PamMatrix,
                       chain: SubstitutionChain) -> float:
    """log p(Sx, Sy | M, l): matched odds ratios times the abundance of every residue."""
    sx = np.asarray(sx, dtype=int)
    sy = np.asarray(sy, dtype=int)
    for seq in (sx, sy):
        if seq.size and (seq.min() < 1 or seq.max() > N_STATES):
            raise ValueError("residue codes must lie in 1..20")
    if sx.size != mt.m or sy.size != mt.n:
        raise ValueError("sequence lengths do not match the matching")
    jj, kk = mt.indices()
    log_q = np.log(chain.q)
    matched = pam.log_psi[sx[jj] - 1, sy[kk] - 1].sum() if jj.size else 0.0
    return float(matched + log_q[sx - 1].sum() + log_q[sy - 1].sum())


def _half_widths(distances: Sequence[int]) -> tuple[np.ndarray, np.ndarray]:
    ls = np.asarray(distances, dtype=float)
    if ls.size == 1:
        return np.array([5.0]), np.array([5.0])
    gaps = np.diff(ls) / 2.0
    lower = np.concatenate([[gaps[0]], gaps])
    upper = np.concatenate([gaps, [gaps[-1]]])
    return lower, upper


def log_pam_prior_weights(distances: Sequence[int], mu_l: float, sigma_l: float) -> np.ndarray:
    """log of the discretized-normal prior weights (unnormalized)."""
    if sigma_l <= 0:
        raise ValueError("sigma_l must be positive")
    ls = np.asarray(distances, dtype=float)
    lower, upper = _half_widths(distances)
    a = (ls - lower - mu_l) / sigma_l
    b = (ls + upper - mu_l) / sigma_l
    # Phi(b) - Phi(a), evaluated in whichever tail keeps precision
    flip = a > 0
    hi = np.where(flip, -a, b)
    lo = np.where(flip, -b, a)
    log_hi = log_ndtr(hi)
    log_lo = log_ndtr(lo)
    return log_hi + np.log1p(-np.exp(log_lo - log_hi))


def pam_prior_weights(distances: Sequence[int], mu_l: float, sigma_l: float) -> np.ndarray:
    return np.exp(log_pam_prior_weights(distances, mu_l, sigma_l))


@dataclass(frozen=True)
class PamPrior:
    distances: tuple
    weights: tuple
    mu_l: float
    sigma_l: float

    @classmethod
    def discretized_normal(cls, distances: Sequence[int], mu_l: float, sigma_l: float) -> "PamPrior":
        w = pam_prior_weights(distances, mu_l, sigma_l)
        return cls(tuple(int(l) for l in distances), tuple(float(x) for x in w), mu_l, sigma_l)


class PamLibrary:
    """Precomputed log odds for every distance in a run, shared read-only."""

    def __init__(self, chain: SubstitutionChain, distances: Sequence[int],
                 mu_l: float = 250.0, sigma_l: float = 100.0):
        self.chain = chain
        self.distances = tuple(int(l) for l in distances)
        self.index = {l: i for i, l in enumerate(self.distances)}
        self.matrices = [build_pam(chain, l) for l in self.distances]
        self.log_psi = np.stack([p.log_psi for p in self.matrices])
        self.log_psi.setflags(write=False)
        self.log_prior = log_pam_prior_weights(self.distances, mu_l, sigma_l)
        self.log_q = np.log(chain.q)

    def __getitem__(self, l: int) -> PamMatrix:
        return self.matrices[self.index[l]]


def synthetic_chain(seed: int = 20, mutation_rate: float = 0.01) -> SubstitutionChain:
    """A reversible 20-state chain with a PAM-1-like 1% expected change per step.

    Built from random symmetric exchangeabilities so that q_a p_ab = q_b p_ba.
    """
    rng = np.random.default_rng(seed)
    q = rng.dirichlet(np.full(N_STATES, 8.0))
    s = rng.exponential(1.0, size=(N_STATES, N_STATES))
    s = (s + s.T) / 2.0
    np.fill_diagonal(s, 0.0)
    rate = s * q[None, :]
    np.fill_diagonal(rate, -rate.sum(axis=1))
    rate /= -(q * np.diag(rate)).sum()
    p1 = np.eye(N_STATES) + mutation_rate * rate
    p1 /= p1.sum(axis=1, keepdims=True)
    return SubstitutionChain(p1, q)


def parse_pam1(text: str, transpose: bool = False) -> SubstitutionChain:
    """Parse 400 transition probabilities (row-major) followed by 20 abundances.

    Lines starting with ``#`` are comments. Rows and abundances are renormalized
    if the printed values were rounded (relative error up to 1e-3).
    """
    values = []
    for line in text.splitlines():
        line = line.split("#", 1)[0].strip()
        if line:
            values.extend(float(tok) for tok in line.split())
    if len(values) != N_STATES * N_STATES + N_STATES:
        raise ValueError(f"expected 420 numbers in a PAM-1 file, found {len(values)}")
    p1 = np.array(values[: N_STATES * N_STATES]).reshape(N_STATES, N_STATES)
    q = np.array(values[N_STATES * N_STATES:])
    if transpose:
        p1 = p1.T
    rows = p1.sum(axis=1)
    if rows.min() <= 0 or not np.allclose(rows, rows.mean(), rtol=1e-3, atol=0):
        raise ValueError("PAM-1 rows do not sum to a common total")
    if q.sum() <= 0 or abs(q.sum() - 1.0) > 1e-3:
        raise ValueError("abundances must sum to 1")
    return SubstitutionChain(p1 / rows[:, None], q / q.sum())


def load_pam1(path) -> SubstitutionChain:
    return parse_pam1(Path(path).read_text())


def format_pam1(chain: SubstitutionChain) -> str:
    lines = ["# PAM-1 transition matrix, rows/columns in order " + " ".join(AMINO_ACIDS)]
    for row in chain.p1:
        lines.append(" ".join(repr(float(v)) for v in row))
    lines.append("# amino-acid abundances")
    lines.append(" ".join(repr(float(v)) for v in chain.q))
    return "\n".join(lines) + "\n"


def bundled_chain() -> SubstitutionChain:
    """The synthetic reversible chain shipped in ``data/synthetic_pam1.txt``."""
    text = resources.files("bayesalign").joinpath("data/synthetic_pam1.txt").read_text()
    return parse_pam1(text)


def log_odds_scores(pam: PamMatrix, scale: float = 10.0 / math.log(10.0)) -> np.ndarray:
    """Classic PAM score table C log psi (for display only; sampling uses psi)."""
    return scale * pam.log_psi
