"""Core value types: configurations, matchings, rigid transforms and run settings."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

# One-letter codes in alphabetical order; residue code i (1-based) is AMINO_ACIDS[i - 1].
AMINO_ACIDS = "ACDEFGHIKLMNPQRSTVWY"

GAP_MODES = ("fixed", "sampled", "integrated")
SEQ_MODES = ("off", "fixed_pam", "sampled_pam")


class ConfigError(ValueError):
    """Invalid run configuration."""


class MatchingError(ValueError):
    """A matching violates the order or uniqueness constraints."""


@dataclass(frozen=True, eq=False)
class Configuration:
    """An ordered set of 3-D points, optionally labelled with residue codes 1-20."""

    points: np.ndarray
    residues: Optional[np.ndarray] = None
    id: str = ""

    def __post_init__(self):
        pts = np.array(self.points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 3:
            raise ValueError(f"points must have shape (n, 3), got {pts.shape}")
        if pts.shape[0] == 0:
            raise ValueError("configuration must contain at least one point")
        if not np.all(np.isfinite(pts)):
            raise ValueError("configuration coordinates must be finite")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)
        if self.residues is not None:
            res = np.array(self.residues, dtype=int)
            if res.shape != (pts.shape[0],):
                raise ValueError(
                    f"residues length {res.shape} does not match {pts.shape[0]} points"
                )
            if res.size and (res.min() < 1 or res.max() > 20):
                raise ValueError("residue codes must lie in 1..20")
            res.setflags(write=False)
            object.__setattr__(self, "residues", res)

    def __len__(self) -> int:
        return self.points.shape[0]

    @property
    def sequence(self) -> Optional[str]:
        if self.residues is None:
            return None
        return "".join(AMINO_ACIDS[r - 1] for r in self.residues)

    def centroid(self) -> np.ndarray:
        return self.points.mean(axis=0)


@dataclass(frozen=True)
class Violation:
    """First violated matching invariant, with the 1-based position in the pair list."""

    message: str
    position: int

    def __str__(self) -> str:
        return f"{self.message} at position {self.position}"


@dataclass(frozen=True)
class Matching:
    """Monotone matching stored as an ordered tuple of 1-based (j, k) pairs."""

    pairs: tuple
    m: int
    n: int

    def __post_init__(self):
        object.__setattr__(self, "pairs", tuple((int(j), int(k)) for j, k in self.pairs))

    @classmethod
    def empty(cls, m: int, n: int) -> "Matching":
        return cls((), m, n)

    @property
    def L(self) -> int:
        return len(self.pairs)

    def __len__(self) -> int:
        return len(self.pairs)

    def __iter__(self):
        return iter(self.pairs)

    def indices(self) -> tuple[np.ndarray, np.ndarray]:
        """0-based index arrays into the x and y configurations."""
        if not self.pairs:
            return np.zeros(0, dtype=int), np.zeros(0, dtype=int)
        arr = np.asarray(self.pairs, dtype=int)
        return arr[:, 0] - 1, arr[:, 1] - 1

    def transpose(self) -> "Matching":
        return Matching(tuple((k, j) for j, k in self.pairs), self.n, self.m)

    def validate(self) -> "Matching":
        report = validate_matching(self)
        if report is not None:
            raise MatchingError(str(report))
        return self


def validate_matching(mt: Matching) -> Optional[Violation]:
    """Return ``None`` if ``mt`` is a valid monotone matching, else the first violation."""
    if mt.m < 1 or mt.n < 1:
        return Violation("configuration sizes must be positive", 0)
    if len(mt.pairs) > min(mt.m, mt.n):
        return Violation("more pairs than min(m, n)", min(mt.m, mt.n) + 1)
    prev_j, prev_k = 0, 0
    seen_j: set = set()
    seen_k: set = set()
    for pos, (j, k) in enumerate(mt.pairs, start=1):
        if not 1 <= j <= mt.m:
            return Violation(f"j index {j} out of range 1..{mt.m}", pos)
        if not 1 <= k <= mt.n:
            return Violation(f"k index {k} out of range 1..{mt.n}", pos)
        if j in seen_j:
            return Violation("duplicate j index", pos)
        if k in seen_k:
            return Violation("duplicate k index", pos)
        if j <= prev_j or k <= prev_k:
            return Violation("non-monotone", pos)
        seen_j.add(j)
        seen_k.add(k)
        prev_j, prev_k = j, k
    return None


def euler_to_rotation(theta12: float, theta13: float, theta23: float) -> np.ndarray:
    """Rotation R12(theta12) @ R13(theta13) @ R23(theta23).

    ``Rab(t)`` rotates the (a, b) coordinate plane by ``t``, sending e_a to
    ``cos t e_a + sin t e_b``.
    """
    c1, s1 = math.cos(theta12), math.sin(theta12)
    c2, s2 = math.cos(theta13), math.sin(theta13)
    c3, s3 = math.cos(theta23), math.sin(theta23)
    r12 = np.array([[c1, -s1, 0.0], [s1, c1, 0.0], [0.0, 0.0, 1.0]])
    r13 = np.array([[c2, 0.0, -s2], [0.0, 1.0, 0.0], [s2, 0.0, c2]])
    r23 = np.array([[1.0, 0.0, 0.0], [0.0, c3, -s3], [0.0, s3, c3]])
    return r12 @ r13 @ r23


def rotation_to_euler(rotation: np.ndarray) -> tuple[float, float, float]:
    """Inverse of :func:`euler_to_rotation` with theta13 in [-pi/2, pi/2]."""
    r = np.asarray(rotation, dtype=float)
    theta13 = math.asin(max(-1.0, min(1.0, r[2, 0])))
    if abs(r[2, 0]) < 1.0 - 1e-12:
        theta12 = math.atan2(r[1, 0], r[0, 0])
        theta23 = math.atan2(r[2, 1], r[2, 2])
    else:
        # gimbal lock: only theta12 -/+ theta23 is determined
        theta12 = math.atan2(-r[0, 1], r[1, 1])
        theta23 = 0.0
    return theta12, theta13, theta23


def wrap_angle(theta: float) -> float:
    """Map an angle onto (-pi, pi]."""
    wrapped = math.remainder(theta, 2.0 * math.pi)
    return math.pi if wrapped == -math.pi else wrapped


@dataclass(frozen=True, eq=False)
class TransformState:
    """Rigid transform ``y -> rotation @ y + tau`` plus the noise scale ``sigma``."""

    euler: tuple
    tau: np.ndarray
    sigma: float
    rotation: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        euler = tuple(float(a) for a in self.euler)
        if len(euler) != 3 or not all(math.isfinite(a) for a in euler):
            raise ValueError("euler must be three finite angles")
        tau = np.array(self.tau, dtype=float).reshape(3)
        if not (self.sigma > 0 and math.isfinite(self.sigma)):
            raise ValueError(f"sigma must be positive, got {self.sigma}")
        rot = euler_to_rotation(*euler)
        rot.setflags(write=False)
        tau.setflags(write=False)
        object.__setattr__(self, "euler", euler)
        object.__setattr__(self, "tau", tau)
        object.__setattr__(self, "sigma", float(self.sigma))
        object.__setattr__(self, "rotation", rot)

    @classmethod
    def identity(cls, sigma: float = 1.0) -> "TransformState":
        return cls((0.0, 0.0, 0.0), np.zeros(3), sigma)

    @classmethod
    def from_rotation(cls, rotation, tau, sigma: float) -> "TransformState":
        return cls(rotation_to_euler(rotation), tau, sigma)

    def replace(self, *, euler=None, tau=None, sigma=None) -> "TransformState":
        return TransformState(
            self.euler if euler is None else euler,
            self.tau if tau is None else tau,
            self.sigma if sigma is None else sigma,
        )

    def apply(self, y: np.ndarray) -> np.ndarray:
        """Transform one point or an (n, 3) array of points."""
        y = np.asarray(y, dtype=float)
        return y @ self.rotation.T + self.tau


def apply_transform(t: TransformState, y) -> np.ndarray:
    return t.apply(y)


@dataclass(frozen=True)
class GapParams:
    g: float
    h: float

    def __post_init__(self):
        if not (self.g >= 0 and self.h >= 0):
            raise ValueError(f"gap penalties must be non-negative, got g={self.g}, h={self.h}")


def default_pam_distances() -> tuple:
    return tuple(range(40, 401, 10))


@dataclass(frozen=True)
class ModelConfig:
    """All model, prior and sampler settings for one run.

    Defaults are the recommended settings for protein pairs: v = 5000, g = 4,
    h = 0.1, sigma_tau = 500, alpha = 1, beta = 8 and 4.8M sweeps with 0.8M
    burn-in thinned every 2000 sweeps.
    """

    v: float = 5000.0
    prior_F0: tuple = ((0.0, 0.0, 0.0), (0.0, 0.0, 0.0), (0.0, 0.0, 0.0))
    mu_tau: Optional[tuple] = None  # None: centroid(x) - centroid(y)
    sigma_tau: float = 500.0
    alpha: float = 1.0
    beta: float = 8.0
    gap_mode: str = "fixed"
    g: float = 4.0
    h: float = 0.1
    a_g: float = 2.0
    b_g: float = 0.5
    a_h: float = 2.0
    b_h: float = 20.0
    gap_step: float = 0.3
    grid_g_max: float = 20.0
    grid_h_max: float = 2.0
    grid_n: int = 100
    seq_mode: str = "off"
    pam_l: int = 250
    pam_distances: tuple = field(default_factory=default_pam_distances)
    mu_l: float = 250.0
    sigma_l: float = 100.0
    sweeps: int = 4_800_000
    burn_in: int = 800_000
    thin: int = 2000
    moves_per_sweep: Optional[int] = None  # None: m + n
    p_star: float = 0.5
    rotation_step: float = 0.05
    haar: bool = True
    temperatures: tuple = ()
    seed: int = 0

    def __post_init__(self):
        f0 = np.asarray(self.prior_F0, dtype=float)
        if f0.shape != (3, 3):
            raise ConfigError("prior_F0 must be a 3x3 matrix")
        object.__setattr__(self, "prior_F0", tuple(tuple(float(a) for a in row) for row in f0))
        if self.mu_tau is not None:
            mu = tuple(float(a) for a in self.mu_tau)
            if len(mu) != 3:
                raise ConfigError("mu_tau must have three components")
            object.__setattr__(self, "mu_tau", mu)
        object.__setattr__(self, "pam_distances", tuple(int(l) for l in self.pam_distances))
        object.__setattr__(self, "temperatures", tuple(float(b) for b in self.temperatures))
        self._check()

    def _check(self):
        positive = {
            "v": self.v, "sigma_tau": self.sigma_tau, "alpha": self.alpha, "beta": self.beta,
            "a_g": self.a_g, "b_g": self.b_g, "a_h": self.a_h, "b_h": self.b_h,
            "gap_step": self.gap_step, "grid_g_max": self.grid_g_max,
            "grid_h_max": self.grid_h_max, "sigma_l": self.sigma_l,
        }
        for name, value in positive.items():
            if not (value > 0 and math.isfinite(value)):
                raise ConfigError(f"{name} must be positive and finite, got {value}")
        if self.g < 0 or self.h < 0:
            raise ConfigError("g and h must be non-negative")
        if self.gap_mode not in GAP_MODES:
            raise ConfigError(f"gap_mode must be one of {GAP_MODES}, got {self.gap_mode!r}")
        if self.gap_mode == "sampled" and (self.g <= 0 or self.h <= 0):
            raise ConfigError("sampled gap mode needs strictly positive starting g and h")
        if self.gap_mode == "integrated" and (self.a_g < 1 or self.a_h < 1):
            raise ConfigError("integrated gap mode requires a_g >= 1 and a_h >= 1")
        if self.seq_mode not in SEQ_MODES:
            raise ConfigError(f"seq_mode must be one of {SEQ_MODES}, got {self.seq_mode!r}")
        if self.grid_n < 2:
            raise ConfigError("grid_n must be at least 2")
        ls = self.pam_distances
        if not ls or any(l < 1 for l in ls) or any(b <= a for a, b in zip(ls, ls[1:])):
            raise ConfigError("pam_distances must be a non-empty ascending list of positive integers")
        if self.pam_l < 1:
            raise ConfigError("pam_l must be positive")
        if self.seq_mode == "sampled_pam" and self.pam_l not in ls:
            raise ConfigError(f"starting pam_l {self.pam_l} is not in pam_distances")
        for name in ("sweeps", "thin"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be a positive integer")
        if not 0 <= self.burn_in < self.sweeps:
            raise ConfigError("burn_in must satisfy 0 <= burn_in < sweeps")
        if self.moves_per_sweep is not None and self.moves_per_sweep < 1:
            raise ConfigError("moves_per_sweep must be positive")
        if not 0.0 < self.p_star <= 1.0:
            raise ConfigError("p_star must lie in (0, 1]")
        if self.rotation_step < 0:
            raise ConfigError("rotation_step must be non-negative")
        if any(not 0.0 < b <= 1.0 for b in self.temperatures):
            raise ConfigError("inverse temperatures must lie in (0, 1]")
        if self.temperatures and self.temperatures[0] != 1.0:
            raise ConfigError("the first rung of the temperature ladder must be 1 (the cold chain)")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must be a 64-bit unsigned integer")

    @property
    def F0(self) -> np.ndarray:
        return np.asarray(self.prior_F0, dtype=float)

    def replace(self, **changes) -> "ModelConfig":
        from dataclasses import replace

        return replace(self, **changes)

    def resolve_mu_tau(self, x: Configuration, y: Configuration) -> np.ndarray:
        if self.mu_tau is not None:
            return np.asarray(self.mu_tau, dtype=float)
        return x.centroid() - y.centroid()

    def resolve_moves(self, m: int, n: int) -> int:
        return self.moves_per_sweep if self.moves_per_sweep is not None else m + n


def default_ladder(rungs: int = 4, ratio: float = 0.7) -> tuple:
    """Geometric ladder of inverse temperatures starting at the cold chain."""
    return tuple(ratio**r for r in range(rungs))


def as_pairs(pairs: Sequence) -> tuple:
    return tuple((int(j), int(k)) for j, k in pairs)
