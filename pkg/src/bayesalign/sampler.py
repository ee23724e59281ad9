"""Metropolis-within-Gibbs sampler over matchings, rigid transforms, gap penalties and PAM distance.

One sweep proposes ``moves_per_sweep`` local changes to the matching (add, delete
or switch a single pair), then updates the rotation, translation and noise
precision, then g and h (sampled-gap mode), then the PAM distance (sampled-PAM
mode). Randomness comes from numpy's PCG64 generator seeded through
``SeedSequence(seed, spawn_key=(replica,))``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Iterator, Optional, Sequence

import numpy as np

from .domain import GapParams, Matching, ModelConfig, TransformState, euler_to_rotation, wrap_angle
from .gapmodel import gap_change, gap_counts
from .model import AlignmentModel, State, log_haar_jacobian, log_gamma_kernel

logger = logging.getLogger(__name__)

ADD, DELETE, SWITCH = "add", "delete", "switch"
ALL_BLOCKS = frozenset({"match", "rotation", "translation", "precision", "gaps", "pam"})
SWAP_STREAM = 2**32 - 1


def make_rng(seed: int, replica: int = 0) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(replica,))))


@dataclass(frozen=True)
class MatchProposal:
    """A proposed change to the matching.

    ``log_target`` is the change in the log posterior, ``log_q`` the log ratio
    of reverse to forward proposal probabilities. For a switch, ``old`` is the
    pair being replaced. ``on_x`` records which configuration the selected
    point belongs to.
    """

    kind: str
    j: int
    k: int
    old: Optional[tuple]
    ds: int
    dext: int
    log_target: float
    log_q: float
    on_x: bool = True

    @property
    def log_ratio(self) -> float:
        return self.log_target + self.log_q


@dataclass(frozen=True)
class ParamProposal:
    value: object
    log_target: float
    log_q: float = 0.0

    @property
    def log_ratio(self) -> float:
        return self.log_target + self.log_q


@dataclass(frozen=True)
class PosteriorSample:
    sweep: int
    log_post: float
    L: int
    rmsd: float
    s: int
    ext: int
    g: float
    h: float
    pam_l: Optional[int]
    pairs: tuple
    euler: tuple
    tau: tuple
    sigma: float

    @property
    def rotation(self) -> np.ndarray:
        return euler_to_rotation(*self.euler)


def _accept(log_alpha: float, u: float) -> bool:
    return log_alpha >= 0.0 or u < math.exp(log_alpha)


class Sampler:
    """One MCMC chain targeting ``posterior ** beta``.

    Parameters
    ----------
    model : AlignmentModel
    state : State
        Starting values.
    rng : numpy.random.Generator
    beta : float
        Inverse temperature; 1 for the target posterior.
    blocks : set of str, optional
        Updates to perform each sweep; defaults to everything the mode allows.
    structure_weight : bool
        If False the pairwise structural terms are dropped from matching moves,
        so the matching chain targets its prior (used for testing).
    """

    def __init__(self, model: AlignmentModel, state: State, rng: np.random.Generator,
                 beta: float = 1.0, blocks=None, structure_weight: bool = True):
        self.model = model
        self.cfg: ModelConfig = model.cfg
        self.rng = rng
        self.beta = float(beta)
        self.blocks = ALL_BLOCKS if blocks is None else frozenset(blocks)
        self.structure_weight = structure_weight
        self.m, self.n = model.m, model.n
        self.moves_per_sweep = self.cfg.resolve_moves(self.m, self.n)
        self.p_star = self.cfg.p_star
        self.log_p_star = math.log(self.p_star)
        self.log_v = math.log(self.cfg.v)
        self._xs = [None] + [tuple(p) for p in model.x.points.tolist()]
        self._ypts = model.y.points
        self._xpts = model.x.points
        self.integrated = self.cfg.gap_mode == "integrated"
        if model.uses_sequences:
            self._sx = [None] + [int(a) - 1 for a in model.x.residues]
            self._sy = [None] + [int(b) - 1 for b in model.y.residues]
        self.accepted = dict.fromkeys(("match", "rotation", "g", "h", "pam", "swap"), 0)
        self.proposed = dict.fromkeys(self.accepted, 0)
        self.load_state(state)

    # ------------------------------------------------------------------ state
    def load_state(self, state: State):
        self.model.check_state(state)
        mt = state.matching.validate()
        self.xm = [0] * (self.m + 2)
        self.ym = [0] * (self.n + 2)
        for j, k in mt.pairs:
            self.xm[j] = k
            self.ym[k] = j
        self.L = mt.L
        self.s, self.ext = gap_counts(mt.pairs, self.m, self.n)
        self.euler = tuple(state.transform.euler)
        self.rot = np.array(state.transform.rotation)
        self.tau = np.array(state.transform.tau)
        self.sigma = state.transform.sigma
        self.g, self.h = state.gap.g, state.gap.h
        if self.cfg.seq_mode == "sampled_pam":
            self.pam_l = state.pam_l
        elif self.cfg.seq_mode == "fixed_pam":
            self.pam_l = self.cfg.pam_l
        else:
            self.pam_l = None
        self._refresh_transform()
        self._refresh_sigma()
        self._refresh_pam()

    def _refresh_transform(self):
        ty = self._ypts @ self.rot.T + self.tau
        self._ty = [None] + [tuple(p) for p in ty.tolist()]

    def _refresh_sigma(self):
        s2 = self.sigma * self.sigma
        self._c0 = self.log_v - 1.5 * math.log(4.0 * math.pi * s2)
        self._inv4s2 = 1.0 / (4.0 * s2)

    def _refresh_pam(self):
        if self.pam_l is None:
            self._lpsi = None
        else:
            lib = self.model.pam
            self._lpsi = lib.log_psi[lib.index[self.pam_l]].tolist()

    def pairs(self) -> list:
        xm = self.xm
        return [(j, xm[j]) for j in range(1, self.m + 1) if xm[j]]

    def matched_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        prs = self.pairs()
        if not prs:
            return np.zeros(0, dtype=int), np.zeros(0, dtype=int)
        arr = np.asarray(prs, dtype=int)
        return arr[:, 0] - 1, arr[:, 1] - 1

    def transform(self) -> TransformState:
        return TransformState(self.euler, self.tau, self.sigma)

    def state(self) -> State:
        return State(Matching(tuple(self.pairs()), self.m, self.n), self.transform(),
                     GapParams(self.g, self.h), self.pam_l)

    def check_cache(self):
        """Compare incrementally tracked counts with a fresh recomputation."""
        prs = self.pairs()
        s, ext = gap_counts(prs, self.m, self.n)
        if (s, ext, len(prs)) != (self.s, self.ext, self.L):
            raise RuntimeError(
                f"cached gap counts {(self.s, self.ext, self.L)} != fresh {(s, ext, len(prs))}")
        for k in range(1, self.n + 1):
            j = self.ym[k]
            if j and self.xm[j] != k:
                raise RuntimeError("match tables disagree")

    # -------------------------------------------------------- matching moves
    def pair_log_lik(self, j: int, k: int) -> float:
        """Log-posterior gain from matching x_j with y_k, apart from the gap prior."""
        out = 0.0
        if self.structure_weight:
            a = self._xs[j]
            b = self._ty[k]
            dx = a[0] - b[0]
            dy = a[1] - b[1]
            dz = a[2] - b[2]
            out = self._c0 - (dx * dx + dy * dy + dz * dz) * self._inv4s2
        if self._lpsi is not None:
            out += self._lpsi[self._sx[j]][self._sy[k]]
        return out

    def gap_log_delta(self, ds: int, dext: int) -> float:
        if self.integrated:
            prior = self.model.marginal_prior
            return prior(self.s + ds, self.ext + dext) - prior(self.s, self.ext)
        return -(self.g * ds + self.h * dext)

    def propose_match_move(self, u_point: float, u_case: float, u_index: float) -> Optional[MatchProposal]:
        """Build the proposal selected by three uniforms; ``None`` when there is no room."""
        m = self.m
        sel = int(u_point * (m + self.n))
        if sel < m:
            on_x = True
            ia, am, na, nb = sel + 1, self.xm, m, self.n
        else:
            on_x = False
            ia, am, na, nb = sel - m + 1, self.ym, self.n, m
        lo = ia - 1
        while lo > 0 and am[lo] == 0:
            lo -= 1
        hi = ia + 1
        while hi <= na and am[hi] == 0:
            hi += 1
        b_lo = am[lo] if lo > 0 else 0
        b_hi = am[hi] if hi <= na else nb + 1
        width = b_hi - b_lo - 1
        ib = am[ia]
        if ib == 0:
            if width <= 0:
                return None
            ib = b_lo + 1 + int(u_index * width)
            dsa, dea = gap_change(ia, lo, hi)
            dsb, deb = gap_change(ib, b_lo, b_hi)
            ds, dext = dsa + dsb, dea + deb
            j, k = (ia, ib) if on_x else (ib, ia)
            log_target = self.gap_log_delta(ds, dext) + self.pair_log_lik(j, k)
            return MatchProposal(ADD, j, k, None, ds, dext, log_target,
                                 self.log_p_star + math.log(width), on_x)
        dsa, dea = gap_change(ia, lo, hi)
        dsb, deb = gap_change(ib, b_lo, b_hi)
        j, k = (ia, ib) if on_x else (ib, ia)
        if u_case < self.p_star:
            ds, dext = -(dsa + dsb), -(dea + deb)
            log_target = self.gap_log_delta(ds, dext) - self.pair_log_lik(j, k)
            return MatchProposal(DELETE, j, k, None, ds, dext, log_target,
                                 -self.log_p_star - math.log(width), on_x)
        if width == 1:
            return None
        ib2 = b_lo + 1 + int(u_index * (width - 1))
        if ib2 >= ib:
            ib2 += 1
        dsb2, deb2 = gap_change(ib2, b_lo, b_hi)
        ds, dext = dsb2 - dsb, deb2 - deb
        j2, k2 = (ia, ib2) if on_x else (ib2, ia)
        log_target = (self.gap_log_delta(ds, dext) + self.pair_log_lik(j2, k2)
                      - self.pair_log_lik(j, k))
        return MatchProposal(SWITCH, j2, k2, (j, k), ds, dext, log_target, 0.0, on_x)

    def apply_match(self, prop: MatchProposal):
        if prop.kind == ADD:
            self.xm[prop.j] = prop.k
            self.ym[prop.k] = prop.j
            self.L += 1
        elif prop.kind == DELETE:
            self.xm[prop.j] = 0
            self.ym[prop.k] = 0
            self.L -= 1
        else:
            jo, ko = prop.old
            self.xm[jo] = 0
            self.ym[ko] = 0
            self.xm[prop.j] = prop.k
            self.ym[prop.k] = prop.j
        self.s += prop.ds
        self.ext += prop.dext

    def match_moves(self, n_moves: int):
        draws = self.rng.random((n_moves, 4)).tolist()
        beta = self.beta
        accepted = 0
        for u0, u1, u2, u3 in draws:
            prop = self.propose_match_move(u0, u1, u2)
            if prop is None:
                continue
            if _accept(beta * prop.log_target + prop.log_q, u3):
                self.apply_match(prop)
                accepted += 1
        self.proposed["match"] += n_moves
        self.accepted["match"] += accepted

    # --------------------------------------------------- registration updates
    def _ssd(self, rot: np.ndarray, tau: np.ndarray, jj: np.ndarray, kk: np.ndarray) -> float:
        if jj.size == 0:
            return 0.0
        res = self._xpts[jj] - self._ypts[kk] @ rot.T - tau
        return float(np.einsum("ij,ij->", res, res))

    def propose_rotation(self, eps: Sequence[float]) -> ParamProposal:
        """Random-walk step on the angles.

        The translation is moved with the rotation so that the centroid of the
        matched y points stays put; the map is a shear in tau with unit Jacobian.
        The value is ``(euler, tau)``.
        """
        cfg = self.cfg
        new_euler = tuple(wrap_angle(a + e) for a, e in zip(self.euler, eps))
        new_rot = euler_to_rotation(*new_euler)
        jj, kk = self.matched_arrays()
        if jj.size:
            pivot = self._ypts[kk].mean(axis=0)
            new_tau = self.tau + (self.rot - new_rot) @ pivot
        else:
            new_tau = self.tau.copy()
        inv4s2 = 1.0 / (4.0 * self.sigma**2)
        log_target = -(self._ssd(new_rot, new_tau, jj, kk) - self._ssd(self.rot, self.tau, jj, kk)) * inv4s2
        f0 = self.model.F0
        log_target += float(np.sum(f0 * new_rot) - np.sum(f0 * self.rot))
        if cfg.haar:
            log_target += log_haar_jacobian(new_euler) - log_haar_jacobian(self.euler)
        mu = self.model.mu_tau
        d_new = new_tau - mu
        d_old = self.tau - mu
        log_target -= (d_new @ d_new - d_old @ d_old) / (2.0 * cfg.sigma_tau**2)
        return ParamProposal((new_euler, new_tau), float(log_target))

    def update_rotation(self):
        width = self.cfg.rotation_step
        eps = self.rng.uniform(-width, width, size=3)
        prop = self.propose_rotation(eps)
        self.proposed["rotation"] += 1
        if _accept(self.beta * prop.log_target, self.rng.random()):
            self.euler, tau = prop.value
            self.tau = np.asarray(tau)
            self.rot = euler_to_rotation(*self.euler)
            self._refresh_transform()
            self.accepted["rotation"] += 1

    def translation_conditional(self) -> tuple[np.ndarray, float]:
        """Mean and per-coordinate precision of tau given everything else."""
        cfg = self.cfg
        jj, kk = self.matched_arrays()
        data_prec = jj.size / (2.0 * self.sigma**2)
        prior_prec = 1.0 / cfg.sigma_tau**2
        total = np.zeros(3)
        if jj.size:
            total = (self._xpts[jj] - self._ypts[kk] @ self.rot.T).sum(axis=0)
        mean = (total / (2.0 * self.sigma**2) + self.model.mu_tau * prior_prec) / (data_prec + prior_prec)
        return mean, self.beta * (data_prec + prior_prec)

    def update_translation(self):
        mean, prec = self.translation_conditional()
        self.tau = mean + self.rng.standard_normal(3) / math.sqrt(prec)
        self._refresh_transform()

    def precision_conditional(self) -> tuple[float, float]:
        """Shape and rate of the gamma full conditional of sigma^-2."""
        cfg = self.cfg
        jj, kk = self.matched_arrays()
        ssd = self._ssd(self.rot, self.tau, jj, kk)
        shape = self.beta * (cfg.alpha - 1.0 + 1.5 * jj.size) + 1.0
        rate = self.beta * (cfg.beta + ssd / 4.0)
        return shape, rate

    def update_precision(self):
        shape, rate = self.precision_conditional()
        prec = self.rng.gamma(shape, 1.0 / rate)
        self.sigma = 1.0 / math.sqrt(prec)
        self._refresh_sigma()

    # ---------------------------------------------------- gap and PAM updates
    def propose_gap(self, which: str, u: float) -> ParamProposal:
        """Geometric random walk g' = g exp(u); the proposal ratio is g'/g."""
        cfg = self.cfg
        log_z = self.model.log_z
        if which == "g":
            old, new = self.g, self.g * math.exp(u)
            dz = log_z(new, self.h) - log_z(self.g, self.h)
            lt = dz - (new - old) * self.s
            lt += log_gamma_kernel(new, cfg.a_g, cfg.b_g) - log_gamma_kernel(old, cfg.a_g, cfg.b_g)
        else:
            old, new = self.h, self.h * math.exp(u)
            dz = log_z(self.g, new) - log_z(self.g, self.h)
            lt = dz - (new - old) * self.ext
            lt += log_gamma_kernel(new, cfg.a_h, cfg.b_h) - log_gamma_kernel(old, cfg.a_h, cfg.b_h)
        return ParamProposal(new, lt, u)

    def update_gaps(self):
        a = self.cfg.gap_step
        for which in ("g", "h"):
            prop = self.propose_gap(which, self.rng.uniform(-a, a))
            self.proposed[which] += 1
            if _accept(self.beta * prop.log_target + prop.log_q, self.rng.random()):
                setattr(self, which, prop.value)
                self.accepted[which] += 1

    def propose_pam(self, new_index: int) -> ParamProposal:
        lib = self.model.pam
        old_index = lib.index[self.pam_l]
        lt = float(lib.log_prior[new_index] - lib.log_prior[old_index])
        jj, kk = self.matched_arrays()
        if jj.size:
            a = self.model.x.residues[jj] - 1
            b = self.model.y.residues[kk] - 1
            lt += float(lib.log_psi[new_index][a, b].sum() - lib.log_psi[old_index][a, b].sum())
        return ParamProposal(lib.distances[new_index], lt)

    def update_pam(self):
        lib = self.model.pam
        prop = self.propose_pam(int(self.rng.integers(len(lib.distances))))
        self.proposed["pam"] += 1
        if _accept(self.beta * prop.log_target, self.rng.random()):
            if prop.value != self.pam_l:
                self.pam_l = prop.value
                self._refresh_pam()
            self.accepted["pam"] += 1

    # ------------------------------------------------------------- sweeping
    def sweep(self):
        blocks = self.blocks
        if "match" in blocks:
            self.match_moves(self.moves_per_sweep)
        if "rotation" in blocks:
            self.update_rotation()
        if "translation" in blocks:
            self.update_translation()
        if "precision" in blocks:
            self.update_precision()
        if "gaps" in blocks and self.cfg.gap_mode == "sampled":
            self.update_gaps()
        if "pam" in blocks and self.cfg.seq_mode == "sampled_pam":
            self.update_pam()

    def log_posterior(self) -> float:
        return self.model.log_joint(self.state()).total

    def sample(self, sweep: int) -> PosteriorSample:
        st = self.state()
        total = self.model.log_joint(st).total
        jj, kk = self.matched_arrays()
        r = math.sqrt(self._ssd(self.rot, self.tau, jj, kk) / jj.size) if jj.size else math.nan
        return PosteriorSample(sweep, total, self.L, r, self.s, self.ext, self.g, self.h,
                               self.pam_l, st.matching.pairs, tuple(self.euler),
                               tuple(float(a) for a in self.tau), self.sigma)


def _is_emitted(sweep: int, cfg: ModelConfig) -> bool:
    return sweep > cfg.burn_in and (sweep - cfg.burn_in) % cfg.thin == 0


def n_emitted(cfg: ModelConfig) -> int:
    return (cfg.sweeps - cfg.burn_in) // cfg.thin


CHECK_EVERY = 1000


def run_chain(model: AlignmentModel, init: State, raw: bool = False,
              sampler_kwargs: Optional[dict] = None) -> Iterator[PosteriorSample]:
    """Yield thinned post-burn-in samples (every sweep if ``raw``)."""
    cfg = model.cfg
    sampler = Sampler(model, init, make_rng(cfg.seed, 0), **(sampler_kwargs or {}))
    for sweep in range(1, cfg.sweeps + 1):
        sampler.sweep()
        if sweep % CHECK_EVERY == 0:
            sampler.check_cache()
        if raw or _is_emitted(sweep, cfg):
            yield sampler.sample(sweep)
    logger.info("acceptance: %s", acceptance_rates(sampler))


def acceptance_rates(sampler: Sampler) -> dict:
    return {k: sampler.accepted[k] / sampler.proposed[k]
            for k in sampler.proposed if sampler.proposed[k]}


def swap_log_ratio(beta_a: float, beta_b: float, log_post_a: float, log_post_b: float) -> float:
    """Log acceptance for exchanging the states of two tempered replicas."""
    return (beta_a - beta_b) * (log_post_b - log_post_a)


def run_tempered(model: AlignmentModel, init: State, ladder: Optional[Sequence[float]] = None,
                 raw: bool = False, sampler_kwargs: Optional[dict] = None) -> Iterator[PosteriorSample]:
    """Parallel tempering; yields samples from whichever replica holds the cold rung.

    Replicas are stepped in turn within a sweep and exchange states between
    adjacent rungs at the end of each sweep.
    """
    cfg = model.cfg
    ladder = tuple(ladder if ladder is not None else (cfg.temperatures or (1.0,)))
    if ladder[0] != 1.0:
        raise ValueError("the first rung must be the cold chain (inverse temperature 1)")
    replicas = [Sampler(model, init, make_rng(cfg.seed, r), beta=b, **(sampler_kwargs or {}))
                for r, b in enumerate(ladder)]
    swap_rng = make_rng(cfg.seed, SWAP_STREAM)
    # rung r is held by replicas[holder[r]]
    holder = list(range(len(ladder)))
    for sweep in range(1, cfg.sweeps + 1):
        for rep in replicas:
            rep.sweep()
        if len(ladder) > 1:
            logps = [replicas[holder[r]].log_posterior() for r in range(len(ladder))]
            for r in range(len(ladder) - 1):
                a, b = holder[r], holder[r + 1]
                log_alpha = swap_log_ratio(ladder[r], ladder[r + 1], logps[r], logps[r + 1])
                replicas[a].proposed["swap"] += 1
                if _accept(log_alpha, swap_rng.random()):
                    holder[r], holder[r + 1] = b, a
                    replicas[a].beta, replicas[b].beta = ladder[r + 1], ladder[r]
                    logps[r], logps[r + 1] = logps[r + 1], logps[r]
                    replicas[a].accepted["swap"] += 1
        if sweep % CHECK_EVERY == 0:
            for rep in replicas:
                rep.check_cache()
        if raw or _is_emitted(sweep, cfg):
            yield replicas[holder[0]].sample(sweep)


def initial_state(model: AlignmentModel, matching: Optional[Matching] = None,
                  transform: Optional[TransformState] = None) -> State:
    """Starting values; fits the transform to the initial pairs when there are at least three."""
    from .seeding import kabsch

    cfg = model.cfg
    matching = matching if matching is not None else Matching.empty(model.m, model.n)
    if transform is None:
        if matching.L >= 3:
            jj, kk = matching.indices()
            rot, tau = kabsch(model.x.points[jj], model.y.points[kk])
            res = model.x.points[jj] - model.y.points[kk] @ rot.T - tau
            sigma = max(math.sqrt(np.mean(np.sum(res**2, axis=1)) / 6.0), 0.1)
            transform = TransformState.from_rotation(rot, tau, sigma)
        else:
            transform = TransformState((0.0, 0.0, 0.0), model.mu_tau, 1.0)
    pam_l = cfg.pam_l if cfg.seq_mode == "sampled_pam" else None
    return State(matching, transform, GapParams(cfg.g, cfg.h), pam_l)
