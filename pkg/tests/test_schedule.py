import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from focalfuse.errors import ConfigError
from focalfuse.schedule import GammaSchedule, constant, gamma_at, gamma_trajectory

# 2 * 0.05**0.5 and 0.1 * 20**0.5, evaluated with mpmath at 30 digits
SQRT_MID = 0.447213595499957939


def test_exp_decay_endpoints_and_midpoint():
    s = GammaSchedule("exp_decay", 2.0, 0.1, 20)
    assert gamma_at(s, 0) == 2.0
    assert gamma_at(s, 20) == 0.1
    assert gamma_at(s, 10) == pytest.approx(SQRT_MID, abs=1e-12)


def test_linear_decay_midpoint():
    assert gamma_at(GammaSchedule("linear_decay", 2.0, 0.1, 20), 10) == pytest.approx(1.05, abs=1e-15)


def test_exp_growth_midpoint():
    assert gamma_at(GammaSchedule("exp_growth", 0.1, 2.0, 20), 10) == pytest.approx(SQRT_MID, abs=1e-12)


def test_constant_ignores_fin():
    s = GammaSchedule("constant", 1.5, 0.0, 5)
    assert [gamma_at(s, z) for z in range(6)] == [1.5] * 6


def test_exp_with_equal_endpoints_is_flat():
    s = GammaSchedule("exp_decay", 0.7, 0.7, 9)
    assert all(gamma_at(s, z) == 0.7 for z in range(10))


def test_trajectory_covers_training_epochs():
    s = GammaSchedule()
    traj = gamma_trajectory(s)
    assert len(traj) == 20
    assert traj[0] == 2.0
    assert traj[-1] > 0.1


@pytest.mark.parametrize("z", [-1, 21])
def test_out_of_range(z):
    with pytest.raises(ValueError):
        gamma_at(GammaSchedule(), z)


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(mode="exp_decay", gamma_init=0.0, gamma_fin=0.0),
        dict(mode="exp_growth", gamma_init=0.0, gamma_fin=2.0),
        dict(mode="linear_decay", gamma_init=0.1, gamma_fin=2.0),
        dict(mode="linear_growth", gamma_init=2.0, gamma_fin=0.1),
        dict(mode="exp_decay", total_epochs=0),
        dict(mode="cosine"),
        dict(mode="constant", gamma_init=-1.0),
    ],
)
def test_invalid_schedules_rejected(kwargs):
    with pytest.raises(ConfigError):
        GammaSchedule(**kwargs)


def test_round_trip_dict():
    s = GammaSchedule("linear_growth", 0.1, 2.0, 7)
    assert GammaSchedule.from_dict(s.to_dict()) == s
    assert constant(0.0).mode == "constant"


pos = st.floats(0.01, 10.0, allow_nan=False)


@st.composite
def schedules(draw):
    a, b = sorted((draw(pos), draw(pos)))
    mode = draw(st.sampled_from(["linear_decay", "linear_growth", "exp_decay", "exp_growth"]))
    Z = draw(st.integers(1, 60))
    if mode.endswith("decay"):
        a, b = b, a
    return GammaSchedule(mode, a, b, Z)


@settings(max_examples=200, deadline=None)
@given(schedules())
def test_monotone_exact_endpoints_and_in_range(s):
    vals = [gamma_at(s, z) for z in range(s.total_epochs + 1)]
    assert abs(vals[0] - s.gamma_init) <= 1e-12
    assert abs(vals[-1] - s.gamma_fin) <= 1e-12
    lo, hi = min(s.gamma_init, s.gamma_fin), max(s.gamma_init, s.gamma_fin)
    assert all(lo <= v <= hi for v in vals)
    pairs = list(zip(vals, vals[1:]))
    if s.mode.endswith("decay"):
        assert all(b <= a for a, b in pairs)
    else:
        assert all(b >= a for a, b in pairs)


@settings(max_examples=200, deadline=None)
@given(pos, pos, st.integers(1, 50), st.data())
def test_exp_profiles_mirror_each_other(x, y, Z, data):
    a, b = max(x, y), min(x, y)
    z = data.draw(st.integers(0, Z))
    dec = gamma_at(GammaSchedule("exp_decay", a, b, Z), z)
    grow = gamma_at(GammaSchedule("exp_growth", b, a, Z), Z - z)
    assert math.isclose(dec, grow, rel_tol=0, abs_tol=1e-12 * max(1.0, a))
