import math

import numpy as np
import pytest

from gridforge import cartpole as cp
from gridforge import nn, novelty
from gridforge.errors import ParamError, SimulationError

import oracles


def _random_state(rng):
    return cp.CartPoleState(*(float(v) for v in rng.uniform([-2, -2, -1.2, -3], [2, 2, 1.2, 3])))


def test_dynamics_matches_oracle():
    rng = np.random.default_rng(0)
    for _ in range(200):
        s = _random_state(rng)
        a = int(rng.integers(0, 2))
        got = cp.dynamics_step(s, a).as_tuple()
        np.testing.assert_allclose(got, oracles.cartpole_step(s.as_tuple(), a), rtol=0, atol=1e-12)


def test_dynamics_mirror_symmetry():
    rng = np.random.default_rng(1)
    for _ in range(50):
        s = _random_state(rng)
        m = cp.CartPoleState(*(-v for v in s.as_tuple()))
        for a in (0, 1):
            assert cp.dynamics_step(m, 1 - a).as_tuple() == tuple(-v for v in cp.dynamics_step(s, a).as_tuple())


def test_alternating_actions_stay_upright():
    s = cp.CartPoleState()
    for a in (1, 0):
        s = cp.dynamics_step(s, a)
    assert abs(s.theta) < 0.01 and s.step == 2


def test_push_right_moves_cart_right():
    s = cp.dynamics_step(cp.CartPoleState(), 1)
    assert s.x_dot > 0 and s.theta_dot < 0


def test_nonfinite_state_raises():
    with pytest.raises(SimulationError):
        cp.dynamics_step(cp.CartPoleState(theta_dot=float("inf")), 1)


def _max_energy_drift(dt, horizon=0.5):
    phys = cp.Physics(dt=dt)
    s = cp.CartPoleState(theta=0.05)
    e0, worst = cp.energy(s, phys), 0.0
    for _ in range(int(round(horizon / dt))):
        s = cp.dynamics_step(s, 1, phys, force=0.0)
        e1 = cp.energy(s, phys)
        worst = max(worst, abs(e1 - e0))
        e0 = e1
    return worst


def test_energy_drift_converges():
    d = [_max_energy_drift(0.02 / 2 ** i) for i in range(3)]
    assert d[0] < 1e-3
    assert d[0] > d[1] > d[2]
    # Euler: local error is second order in dt
    assert d[1] / d[2] > 3.0


def test_render_upright_column():
    img = cp.render(cp.CartPoleState())[:, :, 0]
    assert img.shape == (64, 64)
    assert img.min() == 0.0 and img.max() == 1.0
    g = cp.Geometry()
    cart_top = int(g.track_row * 64 - g.cart_height * 64)
    above = img[:cart_top - 1]
    inked = np.nonzero((above < 1.0).any(axis=0))[0]
    assert inked.size > 0
    # centred on the cart and symmetric about the frame middle
    assert inked.min() + inked.max() == 63
    assert inked.size <= 6
    for col in inked:
        rows = np.nonzero(above[:, col] < 1.0)[0]
        assert np.all(np.diff(rows) == 1)


def test_render_deterministic_and_mirrored():
    s = cp.CartPoleState(theta=0.2)
    a = cp.render(s)
    assert np.array_equal(a, cp.render(s))
    b = cp.render(cp.CartPoleState(theta=-0.2))
    assert np.array_equal(a, b[:, ::-1])
    assert not np.array_equal(a, b)


def test_render_clamps_cart_and_checks_size():
    img = cp.render(cp.CartPoleState(x=100.0))
    assert (img[40:54, -1, 0] == 0.0).any()
    with pytest.raises(ParamError):
        cp.render(cp.CartPoleState(), 16, 64)


def test_pid_zero_and_proportional():
    p = cp.PidState(2.0, 1.0, 0.5)
    u, _ = cp.pid_step(p, 0.0)
    assert u == 0.0
    p = cp.PidState(3.0, 0.0, 0.0, setpoint=0.2)
    u, _ = cp.pid_step(p, -0.1)
    assert u == 3.0 * (0.2 - -0.1)


def test_pid_matches_recursion():
    rng = np.random.default_rng(3)
    meas = rng.normal(size=60)
    meas[20:] += 0.5
    p = cp.PidState(1.3, 0.7, 0.25, n_filter=15.0, setpoint=0.1, dt=0.02)
    got = []
    for m in meas:
        u, p = cp.pid_step(p, m)
        got.append(u)
    want = oracles.pid_sequence(0.1 - meas, 1.3, 0.7, 0.25, 15.0, 0.02)
    np.testing.assert_allclose(got, want, rtol=0, atol=1e-12)


def test_pid_rejects_bad_params():
    with pytest.raises(ParamError):
        cp.PidState(1, 0, 0, dt=0.0)
    with pytest.raises(ParamError):
        cp.PidState(1, 0, 0, n_filter=-1.0)


def test_actuate():
    assert cp.actuate(-0.3) == 0
    assert cp.actuate(0.3) == 1
    assert cp.actuate(0.0) == 1


def test_scenario_validation():
    assert cp.Scenario().onset == 150
    with pytest.raises(ParamError):
        cp.Scenario("smoke")
    with pytest.raises(ParamError):
        cp.Scenario(onset=-1)


@pytest.mark.parametrize("seed", range(5))
def test_true_state_pid_keeps_pole_up(seed):
    tr = cp.run_episode(cp.Scenario(seed=seed), cp.TrueStateSensor(), cp.default_pid())
    assert tr.terminated_at is None and len(tr) == 500
    assert max(abs(t) for t in tr.theta) < 0.1


def test_episode_terminates_when_pole_falls():
    tr = cp.run_episode(cp.Scenario(steps=300), cp.TrueStateSensor(), cp.PidState(1.0, 0.0, 0.0))
    assert tr.terminated_at is not None and len(tr) == tr.terminated_at


class _PeekingSensor:
    """Uses the frame path but returns the true angle."""

    needs_frame = True

    def measure(self, frame, state):
        assert frame.shape == (64, 64, 1)
        return state.theta


def test_oracle_sensor_reproduces_true_state_trace():
    sc = cp.Scenario("fog", onset=20, steps=40, seed=4)
    a = cp.run_episode(sc, cp.TrueStateSensor(), cp.default_pid())
    b = cp.run_episode(sc, _PeekingSensor(), cp.default_pid())
    assert list(a.rows()) == list(b.rows())


def _tiny_sensor():
    spec = nn.NetworkSpec([nn.Conv2D(4, 5, 5), nn.Activation("relu"), nn.MaxPool((4, 4)),
                           nn.Flatten(), nn.Dense(1)], (64, 64, 1), "sse")
    return cp.CnnSensor(spec, nn.init_params(spec, 0))


def test_cnn_episode_deterministic_and_cutout_flags_after_onset():
    sensor = _tiny_sensor()
    sc = cp.Scenario("cutout", onset=30, steps=45, seed=2)
    first = cp.run_episode(sc, sensor, cp.default_pid(), keep_frames=True)
    pre = np.stack(first.frames[:sc.onset])
    det = novelty.calibrate(novelty.extract_refined_batch(sensor.spec, sensor.params, pre), k=3, quantile=1.0)
    tr = cp.run_episode(sc, sensor, cp.default_pid(), det)
    again = cp.run_episode(sc, sensor, cp.default_pid(), det)
    assert list(tr.rows()) == list(again.rows())
    assert tr.theta == first.theta
    assert not any(tr.novelty_flag[:sc.onset])
    assert tr.first_flag() is None or tr.first_flag() >= sc.onset


def test_detector_needs_cnn_sensor():
    det = novelty.NoveltyModel(np.zeros((3, 4)), 0.0, 1)
    with pytest.raises(ParamError):
        cp.run_episode(cp.Scenario(steps=2), cp.TrueStateSensor(), cp.default_pid(), det)


def test_trace_rows_in_degrees():
    tr = cp.run_episode(cp.Scenario(steps=3), cp.TrueStateSensor(), cp.default_pid())
    rows = list(tr.rows())
    assert len(rows) == 3 and len(rows[0]) == len(cp.Trace.CSV_HEADER)
    assert float(rows[1][3]) == math.degrees(tr.theta[1])
    assert rows[0][7] == "" and rows[0][8] == 0


def test_sensor_dataset_clean_matches_render():
    ds = cp.make_sensor_dataset(2, (), seed=5, steps=30, stride=5)
    assert len(ds) == len(ds.states) == 12
    for img, s in zip(ds.images, ds.states):
        assert np.array_equal(img, cp.render(s))
    tensor, target = next(iter(ds))
    assert tensor.shape == [64, 64, 1] and target == ds.targets[0]


def test_sensor_dataset_fog_doubles_and_is_deterministic():
    clean = cp.make_sensor_dataset(2, (), seed=5, steps=30, stride=5)
    fog = cp.make_sensor_dataset(2, ("fog",), seed=5, steps=30, stride=5)
    assert len(fog) == 2 * len(clean)
    assert fog.kinds[:2] == ["clean", "fog"]
    again = cp.make_sensor_dataset(2, ("fog",), seed=5, steps=30, stride=5)
    assert np.array_equal(fog.images, again.images)


def test_sensor_dataset_replays_through_physics():
    ds = cp.make_sensor_dataset(3, (), seed=6, steps=40, stride=1)
    i = 0
    for start, actions in ds.episodes:
        s, o = start, start.as_tuple()
        for a in actions:
            assert ds.targets[i] == s.theta
            assert abs(o[2] - s.theta) <= 1e-12
            s = cp.dynamics_step(s, a)
            o = oracles.cartpole_step(o, a)
            i += 1
    assert i == len(ds)


def test_sensor_dataset_x_range_reaches_clamped_edge():
    ds = cp.make_sensor_dataset(12, (), seed=2, steps=10, stride=10, x_range=3.0)
    starts = np.array([start.x for start, _ in ds.episodes])
    assert np.all(np.abs(starts) <= 3.0) and np.abs(starts).max() > 2.0
    base = cp.make_sensor_dataset(12, (), seed=2, steps=10, stride=10)
    for (a, _), (b, _) in zip(ds.episodes, base.episodes):
        assert (a.x_dot, a.theta, a.theta_dot) == (b.x_dot, b.theta, b.theta_dot)
