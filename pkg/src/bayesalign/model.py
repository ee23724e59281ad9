"""Log densities: structural likelihood, parameter priors and the joint posterior."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .domain import Configuration, GapParams, Matching, ModelConfig, TransformState
from .gapmodel import (
    LogNormalizerCache,
    MarginalGapPrior,
    build_grid,
    gap_counts,
)
from .pam import PamLibrary, SubstitutionChain, bundled_chain

D = 3
LOG_2PI = math.log(2.0 * math.pi)


class UndefinedRMSD(ValueError):
    """RMSD requested for an empty matching."""


def _residuals(x: Configuration, y: Configuration, mt: Matching, t: TransformState) -> np.ndarray:
    jj, kk = mt.indices()
    return x.points[jj] - t.apply(y.points[kk])


def log_structural_likelihood(x: Configuration, y: Configuration, mt: Matching,
                              t: TransformState, v: float) -> float:
    """Hidden-point likelihood: v^-(m+n-L) |A|^n prod phi(e / (sigma sqrt 2)) / (sigma sqrt 2)^3."""
    m, n, L = len(x), len(y), mt.L
    log_det = math.log(abs(np.linalg.det(t.rotation)))
    out = -(m + n - L) * math.log(v) + n * log_det
    if L:
        scale = t.sigma * math.sqrt(2.0)
        ssd = float(np.sum(_residuals(x, y, mt, t) ** 2))
        out += L * (-0.5 * D * LOG_2PI - D * math.log(scale)) - 0.5 * ssd / scale**2
    return out


def log_prior_rotation(t: TransformState, F0) -> float:
    """Matrix-Fisher log density tr(F0^T A), unnormalized."""
    return float(np.trace(np.asarray(F0, dtype=float).T @ t.rotation))


def log_haar_jacobian(euler) -> float:
    """Density of Haar measure in the angle coordinates, up to a constant.

    With A = R12 R13 R23 the invariant measure is |cos theta13| dtheta12 dtheta13 dtheta23.
    """
    c = abs(math.cos(euler[1]))
    return math.log(c) if c > 0 else -math.inf


def log_prior_translation(tau, mu_tau, sigma_tau: float) -> float:
    diff = np.asarray(tau, dtype=float) - np.asarray(mu_tau, dtype=float)
    return float(-0.5 * D * math.log(2.0 * math.pi * sigma_tau**2) - diff @ diff / (2.0 * sigma_tau**2))


def log_prior_precision(sigma: float, alpha: float, beta: float) -> float:
    """Gamma(alpha, rate beta) log density of sigma^-2, without the normalizing constant."""
    if not sigma > 0 or not math.isfinite(sigma):
        raise ValueError("sigma must be positive and finite")
    prec = sigma**-2
    if prec <= 0:
        raise ValueError("precision is outside the gamma support")
    return (alpha - 1.0) * math.log(prec) - beta * prec


def log_gamma_kernel(x: float, a: float, b: float) -> float:
    """log of x^(a-1) exp(-b x)."""
    if x <= 0:
        return -math.inf
    return (a - 1.0) * math.log(x) - b * x


def rmsd(x: Configuration, y: Configuration, mt: Matching, t: TransformState) -> float:
    if mt.L == 0:
        raise UndefinedRMSD("RMSD is undefined without matched pairs")
    res = _residuals(x, y, mt, t)
    return float(math.sqrt(np.sum(res**2) / mt.L))


@dataclass(frozen=True)
class State:
    """Every sampled unknown: matching, transform, gap penalties and PAM distance."""

    matching: Matching
    transform: TransformState
    gap: GapParams
    pam_l: Optional[int] = None


@dataclass(frozen=True)
class LogDensityReport:
    log_lik_struct: float
    log_prior_M: float
    log_prior_params: float
    log_lik_seq: Optional[float]
    total: float


class AlignmentModel:
    """The posterior for one (x, y) pair under one configuration.

    Holds the shared read-only tables: log Z(g, h) memo, the marginal gap prior
    grid and the PAM library.
    """

    def __init__(self, x: Configuration, y: Configuration, cfg: ModelConfig,
                 chain: Optional[SubstitutionChain] = None,
                 grid=None):
        self.x, self.y, self.cfg = x, y, cfg
        self.m, self.n = len(x), len(y)
        self.mu_tau = cfg.resolve_mu_tau(x, y)
        self.F0 = cfg.F0
        self.log_z = LogNormalizerCache(self.m, self.n)
        self.marginal_prior: Optional[MarginalGapPrior] = None
        if cfg.gap_mode == "integrated":
            if grid is None:
                grid = build_grid(self.m, self.n, cfg.grid_g_max, cfg.grid_h_max, cfg.grid_n)
            self.marginal_prior = MarginalGapPrior(grid, cfg.a_g, cfg.b_g, cfg.a_h, cfg.b_h)
            self.marginal_prior.check_shape(self.m, self.n)
        self.pam: Optional[PamLibrary] = None
        if cfg.seq_mode != "off":
            if x.residues is None or y.residues is None:
                raise ValueError("sequence modes need residue labels on both configurations")
            chain = chain if chain is not None else bundled_chain()
            distances = cfg.pam_distances if cfg.seq_mode == "sampled_pam" else (cfg.pam_l,)
            self.pam = PamLibrary(chain, distances, cfg.mu_l, cfg.sigma_l)

    @property
    def uses_sequences(self) -> bool:
        return self.pam is not None

    def check_state(self, state: State):
        cfg = self.cfg
        mt = state.matching
        if (mt.m, mt.n) != (self.m, self.n):
            raise ValueError("matching dimensions do not match the configurations")
        if cfg.seq_mode == "sampled_pam":
            if state.pam_l not in self.pam.index:
                raise ValueError(f"PAM distance {state.pam_l} is not in the candidate set")
        elif cfg.seq_mode == "fixed_pam" and state.pam_l not in (None, cfg.pam_l):
            raise ValueError("fixed PAM mode does not sample the distance")
        if cfg.gap_mode == "fixed" and (state.gap.g, state.gap.h) != (cfg.g, cfg.h):
            raise ValueError("fixed gap mode does not sample g and h")

    def log_gap_prior(self, s: int, ext: int, gap: GapParams) -> float:
        mode = self.cfg.gap_mode
        if mode == "integrated":
            return self.marginal_prior(s, ext)
        lp = -(gap.g * s + gap.h * ext)
        if mode == "sampled":
            lp += self.log_z(gap.g, gap.h)
        return lp

    def log_gap_hyperprior(self, gap: GapParams) -> float:
        cfg = self.cfg
        return log_gamma_kernel(gap.g, cfg.a_g, cfg.b_g) + log_gamma_kernel(gap.h, cfg.a_h, cfg.b_h)

    def log_seq(self, mt: Matching, pam_l: int) -> float:
        sx, sy = self.x.residues, self.y.residues
        jj, kk = mt.indices()
        lp = self.pam.log_psi[self.pam.index[pam_l]]
        out = float(self.pam.log_q[sx - 1].sum() + self.pam.log_q[sy - 1].sum())
        if jj.size:
            out += float(lp[sx[jj] - 1, sy[kk] - 1].sum())
        return out

    def log_joint(self, state: State) -> LogDensityReport:
        cfg = self.cfg
        self.check_state(state)
        mt, t = state.matching, state.transform
        ll = log_structural_likelihood(self.x, self.y, mt, t, cfg.v)
        s, ext = gap_counts(mt.pairs, self.m, self.n)
        lpm = self.log_gap_prior(s, ext, state.gap)
        lpp = (log_prior_rotation(t, self.F0)
               + log_prior_translation(t.tau, self.mu_tau, cfg.sigma_tau)
               + log_prior_precision(t.sigma, cfg.alpha, cfg.beta))
        if cfg.haar:
            lpp += log_haar_jacobian(t.euler)
        if cfg.gap_mode == "sampled":
            lpp += self.log_gap_hyperprior(state.gap)
        seq = None
        if self.uses_sequences:
            pam_l = cfg.pam_l if cfg.seq_mode == "fixed_pam" else state.pam_l
            seq = self.log_seq(mt, pam_l)
            if cfg.seq_mode == "sampled_pam":
                lpp += float(self.pam.log_prior[self.pam.index[pam_l]])
        total = ll + lpm + lpp + (seq if seq is not None else 0.0)
        return LogDensityReport(ll, lpm, lpp, seq, total)


def log_joint(state: State, model: AlignmentModel) -> LogDensityReport:
    return model.log_joint(state)
