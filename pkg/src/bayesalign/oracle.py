"""Brute-force ground truth for small instances, and synthetic data with known truth."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.spatial.transform import Rotation

from .domain import Configuration, GapParams, Matching, ModelConfig, TransformState
from .model import AlignmentModel, State
from .pam import SubstitutionChain, chain_power

MAX_ENUMERATION = 10**7


def count_matchings(m: int, n: int) -> int:
    """Number of monotone matchings: choose L indices on each side, pair them in order."""
    return sum(math.comb(m, L) * math.comb(n, L) for L in range(min(m, n) + 1))


def enumerate_matchings(m: int, n: int) -> list[Matching]:
    """Every monotone matching of 1..m with 1..n, sorted lexicographically by pair list."""
    total = count_matchings(m, n)
    if total > MAX_ENUMERATION:
        raise ValueError(f"{total} matchings exceeds the enumeration limit {MAX_ENUMERATION}")
    out = []
    for L in range(min(m, n) + 1):
        for js in itertools.combinations(range(1, m + 1), L):
            for ks in itertools.combinations(range(1, n + 1), L):
                out.append(tuple(zip(js, ks)))
    out.sort()
    return [Matching(p, m, n) for p in out]


@dataclass(frozen=True)
class ExactPosterior:
    matchings: tuple
    probs: np.ndarray

    def marginal(self, m: int, n: int) -> np.ndarray:
        """m x n array of P((j, k) matched), 0-based."""
        out = np.zeros((m, n))
        for mt, p in zip(self.matchings, self.probs):
            for j, k in mt.pairs:
                out[j - 1, k - 1] += p
        return out

    def length_distribution(self) -> np.ndarray:
        top = max(mt.L for mt in self.matchings)
        out = np.zeros(top + 1)
        for mt, p in zip(self.matchings, self.probs):
            out[mt.L] += p
        return out


def exact_posterior_over_M(model: AlignmentModel, transform: TransformState,
                           gap: Optional[GapParams] = None, pam_l: Optional[int] = None) -> ExactPosterior:
    """Posterior over matchings with every other unknown held fixed, by direct summation."""
    cfg = model.cfg
    gap = gap if gap is not None else GapParams(cfg.g, cfg.h)
    mts = enumerate_matchings(model.m, model.n)
    logp = np.array([model.log_joint(State(mt, transform, gap, pam_l)).total for mt in mts])
    w = np.exp(logp - logp.max())
    return ExactPosterior(tuple(mts), w / w.sum())


@dataclass(frozen=True)
class SyntheticInstance:
    x: Configuration
    y: Configuration
    truth: Matching
    transform: TransformState
    sigma_true: float
    box: float


def make_synthetic(m: int, n: int, L_true: int, sigma_true: float, box: float = 30.0,
                   seed: int = 0, chain: Optional[SubstitutionChain] = None,
                   pam_l: int = 250) -> SyntheticInstance:
    """Two noisy views of L_true shared hidden points plus uniform decoys.

    Hidden points are uniform in a cube of side ``box``. x_j = mu + e and
    y_k = A^T (mu + e' - tau) with e, e' ~ N(0, sigma_true^2 I), so that
    x_j - A y_k - tau has variance 2 sigma_true^2 per coordinate. With a chain,
    residues are drawn from its abundances and matched y residues are mutated
    ``pam_l`` steps from their partners.
    """
    if not 0 <= L_true <= min(m, n):
        raise ValueError("L_true must lie in 0..min(m, n)")
    rng = np.random.default_rng(seed)
    rot = Rotation.random(random_state=rng).as_matrix()
    tau = rng.uniform(-box / 2, box / 2, size=3)
    js = np.sort(rng.choice(m, size=L_true, replace=False))
    ks = np.sort(rng.choice(n, size=L_true, replace=False))
    hidden = rng.uniform(0.0, box, size=(L_true, 3))
    x = rng.uniform(0.0, box, size=(m, 3))
    world_y = rng.uniform(0.0, box, size=(n, 3))
    x[js] = hidden + sigma_true * rng.standard_normal((L_true, 3))
    world_y[ks] = hidden + sigma_true * rng.standard_normal((L_true, 3))
    y = (world_y - tau) @ rot  # A^T (w - tau) for each row
    sx = sy = None
    if chain is not None:
        sx = rng.choice(20, size=m, p=chain.q) + 1
        sy = rng.choice(20, size=n, p=chain.q) + 1
        pl = chain_power(chain, pam_l)
        for j, k in zip(js, ks):
            sy[k] = rng.choice(20, p=pl[sx[j] - 1]) + 1
    truth = Matching(tuple(zip((js + 1).tolist(), (ks + 1).tolist())), m, n)
    transform = TransformState.from_rotation(rot, tau, max(sigma_true, 1e-12))
    return SyntheticInstance(Configuration(x, sx, "synthetic-x"), Configuration(y, sy, "synthetic-y"),
                             truth, transform, sigma_true, box)


@dataclass(frozen=True)
class Fixture:
    """A small instance with the fixed nuisance values and settings used against the oracle."""

    instance: SyntheticInstance
    cfg: ModelConfig
    transform: TransformState

    def model(self, **changes) -> AlignmentModel:
        cfg = self.cfg.replace(**changes) if changes else self.cfg
        return AlignmentModel(self.instance.x, self.instance.y, cfg)


def small4() -> Fixture:
    """m = n = 4 with three true pairs; the posterior over M is spread, not degenerate.

    The translation and rotation priors are centred on the truth so that a full
    run (all blocks sampled) stays near the generating superposition.
    """
    inst = make_synthetic(4, 4, 3, sigma_true=1.0, box=5.0, seed=11)
    truth = inst.transform
    cfg = ModelConfig(v=50.0, g=1.0, h=0.5, sweeps=20_000, burn_in=2_000, thin=10, seed=7,
                      alpha=10.0, beta=10.0,
                      haar=False, mu_tau=tuple(truth.tau), sigma_tau=0.5,
                      prior_F0=tuple(map(tuple, 50.0 * truth.rotation)))
    t = inst.transform
    return Fixture(inst, cfg, t)


FIXTURES = {"small4": small4}
