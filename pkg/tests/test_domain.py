import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.spatial.transform import Rotation

from bayesalign.domain import (
    ConfigError,
    Configuration,
    GapParams,
    Matching,
    MatchingError,
    ModelConfig,
    TransformState,
    default_ladder,
    euler_to_rotation,
    rotation_to_euler,
    validate_matching,
    wrap_angle,
)

angle = st.floats(-math.pi, math.pi, allow_nan=False)


def test_configuration_rejects_bad_shapes():
    with pytest.raises(ValueError):
        Configuration(np.zeros((3, 2)))
    with pytest.raises(ValueError):
        Configuration(np.array([[0.0, np.nan, 1.0]]))
    with pytest.raises(ValueError):
        Configuration(np.zeros((2, 3)), residues=[1, 21])


def test_configuration_sequence_letters():
    conf = Configuration(np.zeros((3, 3)), residues=[1, 2, 20])
    assert conf.sequence == "ACY"
    assert not conf.points.flags.writeable


@pytest.mark.parametrize("pairs, message, pos", [
    (((1, 1), (1, 2)), "duplicate j index", 2),
    (((1, 2), (2, 2)), "duplicate k index", 2),
    (((2, 2), (1, 3)), "non-monotone", 2),
    (((1, 5),), "k index 5 out of range", 1),
])
def test_validate_reports_first_violation(pairs, message, pos):
    report = validate_matching(Matching(pairs, 4, 4))
    assert report is not None
    assert report.message.startswith(message)
    assert report.position == pos


def test_validate_accepts_monotone_and_raises_through_method():
    assert validate_matching(Matching(((1, 2), (3, 4)), 3, 4)) is None
    with pytest.raises(MatchingError):
        Matching(((2, 1), (1, 2)), 2, 2).validate()


def test_transpose_round_trip():
    mt = Matching(((1, 2), (3, 4)), 3, 5)
    assert mt.transpose() == Matching(((2, 1), (4, 3)), 5, 3)
    assert mt.transpose().transpose() == mt


@given(angle, st.floats(-1.5, 1.5), angle)
def test_euler_round_trip(a, b, c):
    rot = euler_to_rotation(a, b, c)
    assert np.allclose(rot @ rot.T, np.eye(3), atol=1e-12)
    assert np.isclose(np.linalg.det(rot), 1.0)
    back = euler_to_rotation(*rotation_to_euler(rot))
    assert np.allclose(back, rot, atol=1e-9)


def test_euler_convention_matches_intrinsic_zyx():
    # R12(a) R13(b) R23(c) equals Rz(a) Ry(-b) Rx(c)
    a, b, c = 0.3, -0.7, 1.1
    ref = Rotation.from_euler("ZYX", [a, -b, c]).as_matrix()
    assert np.allclose(euler_to_rotation(a, b, c), ref, atol=1e-12)


def test_gimbal_lock_inverse():
    rot = euler_to_rotation(0.4, math.pi / 2, 0.0)
    assert np.allclose(euler_to_rotation(*rotation_to_euler(rot)), rot, atol=1e-9)


@given(st.floats(-50, 50))
def test_wrap_angle_range(theta):
    w = wrap_angle(theta)
    assert -math.pi < w <= math.pi
    assert math.isclose(math.cos(w), math.cos(theta), abs_tol=1e-9)


def test_transform_apply():
    t = TransformState((0.5, 0.1, -0.2), [1.0, 2.0, 3.0], 1.0)
    y = np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 2.0]])
    assert np.allclose(t.apply(y), (t.rotation @ y.T).T + t.tau)
    with pytest.raises(ValueError):
        TransformState((0, 0, 0), [0, 0, 0], 0.0)


def test_gap_params_non_negative():
    with pytest.raises(ValueError):
        GapParams(-1.0, 0.1)


def test_config_defaults_and_validation():
    cfg = ModelConfig()
    assert (cfg.v, cfg.g, cfg.h, cfg.sigma_tau, cfg.alpha, cfg.beta) == (5000, 4, 0.1, 500, 1, 8)
    assert (cfg.sweeps, cfg.burn_in, cfg.thin) == (4_800_000, 800_000, 2000)
    assert cfg.pam_distances[0] == 40 and cfg.pam_distances[-1] == 400 and len(cfg.pam_distances) == 37
    for bad in ({"v": 0}, {"gap_mode": "nope"}, {"burn_in": 5_000_000}, {"p_star": 0.0},
                {"temperatures": (0.7, 1.0)}, {"gap_mode": "integrated", "a_g": 0.5},
                {"seq_mode": "sampled_pam", "pam_l": 255}):
        with pytest.raises(ConfigError):
            ModelConfig(**bad)


def test_default_ladder():
    assert default_ladder() == pytest.approx((1.0, 0.7, 0.49, 0.343))
