"""Shared checks for the sampler tests and the acceptance suite."""

import math

import numpy as np

from bayesalign.domain import GapParams, Matching, TransformState
from bayesalign.model import State
from bayesalign.oracle import enumerate_matchings
from bayesalign.sampler import Sampler


def joint(sampler, snapshot=None, **override):
    st = snapshot if snapshot is not None else sampler.state()
    if override:
        st = State(override.get("matching", st.matching), override.get("transform", st.transform),
                   override.get("gap", st.gap), override.get("pam_l", st.pam_l))
    return sampler.model.log_joint(st).total


def match_ratio_errors(sampler, rng, n):
    """Worst |internal log ratio - log joint difference| over n match proposals."""
    worst, seen = 0.0, set()
    while n > 0:
        prop = sampler.propose_match_move(*rng.random(3))
        if prop is None:
            continue
        n -= 1
        before = joint(sampler)
        saved = sampler.state()
        sampler.apply_match(prop)
        after = joint(sampler)
        worst = max(worst, abs((after - before) - prop.log_target))
        seen.add(prop.kind)
        if rng.random() > 0.5:
            sampler.load_state(saved)
    return worst, seen


def rotation_ratio_errors(sampler, rng, n, width=0.3):
    st = sampler.state()
    worst, base = 0.0, joint(sampler, st)
    for _ in range(n):
        prop = sampler.propose_rotation(rng.uniform(-width, width, 3))
        euler, tau = prop.value
        t = TransformState(euler, tau, sampler.sigma)
        worst = max(worst, abs(joint(sampler, st, transform=t) - base - prop.log_target))
    return worst


def gap_ratio_errors(sampler, rng, which, n):
    st = sampler.state()
    worst, base = 0.0, joint(sampler, st)
    for _ in range(n):
        u = rng.uniform(-0.5, 0.5)
        prop = sampler.propose_gap(which, u)
        gap = GapParams(prop.value, sampler.h) if which == "g" else GapParams(sampler.g, prop.value)
        worst = max(worst, abs(joint(sampler, st, gap=gap) - base - prop.log_target))
        assert prop.log_q == u
    return worst


def pam_ratio_errors(sampler, rng, n):
    st = sampler.state()
    worst, base = 0.0, joint(sampler, st)
    lib = sampler.model.pam
    for _ in range(n):
        idx = int(rng.integers(len(lib.distances)))
        prop = sampler.propose_pam(idx)
        worst = max(worst, abs(joint(sampler, st, pam_l=prop.value) - base - prop.log_target))
    return worst


def random_matching(rng, m, n, L=None):
    L = int(rng.integers(0, min(m, n) + 1)) if L is None else L
    js = np.sort(rng.choice(np.arange(1, m + 1), L, replace=False))
    ks = np.sort(rng.choice(np.arange(1, n + 1), L, replace=False))
    return Matching(tuple(zip(js.tolist(), ks.tolist())), m, n)


def match_kernel(model, transform, gap, grid=60):
    """Exact transition matrix of one match move, built from the proposal mechanics.

    Every discrete choice is reached through uniforms at cell midpoints; ``grid``
    must be divisible by every interval width that can occur.
    """
    mts = enumerate_matchings(model.m, model.n)
    index = {mt.pairs: i for i, mt in enumerate(mts)}
    size = len(mts)
    P = np.zeros((size, size))
    p_star = model.cfg.p_star
    cases = [(p_star / 2, p_star), ((1 + p_star) / 2, 1 - p_star)]
    total = model.m + model.n
    sampler = Sampler(model, State(mts[0], transform, gap), np.random.default_rng(0))
    for i, mt in enumerate(mts):
        sampler.load_state(State(mt, transform, gap))
        for sel in range(total):
            for u_case, w_case in cases:
                if w_case == 0:
                    continue
                for c in range(grid):
                    w = w_case / (total * grid)
                    prop = sampler.propose_match_move((sel + 0.5) / total, u_case, (c + 0.5) / grid)
                    if prop is None:
                        P[i, i] += w
                        continue
                    acc = min(1.0, math.exp(min(prop.log_ratio, 0.0)))
                    saved = sampler.state()
                    sampler.apply_match(prop)
                    j = index[tuple(sampler.pairs())]
                    sampler.load_state(saved)
                    P[i, j] += w * acc
                    P[i, i] += w * (1 - acc)
    return mts, P
