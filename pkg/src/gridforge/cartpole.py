"""Image-in-the-loop cart-pole control.

Physics follow the classic cart-pole benchmark (explicit Euler, bang-bang
force).  Each step renders a grayscale frame, optionally perturbs it,
converts it to an angle estimate with a sensor, runs a PID controller with
a filtered derivative and turns the control signal into a left/right push.
"""

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .encode import perturb
from .errors import ParamError, SimulationError
from .nn.train import predict_batch
from .novelty import extract_refined_batch

ALIVE_LIMIT = math.pi / 2
DEGREES = 180.0 / math.pi


@dataclass(frozen=True)
class Physics:
    gravity: float = 9.8
    masscart: float = 1.0
    masspole: float = 0.1
    half_length: float = 0.5
    force_mag: float = 10.0
    dt: float = 0.02


@dataclass(frozen=True)
class CartPoleState:
    x: float = 0.0
    x_dot: float = 0.0
    theta: float = 0.0
    theta_dot: float = 0.0
    step: int = 0

    def as_tuple(self):
        return (self.x, self.x_dot, self.theta, self.theta_dot)

    @property
    def alive(self):
        return abs(self.theta) < ALIVE_LIMIT


def dynamics_step(s, action, physics=Physics(), force=None):
    """One Euler step; action 1 pushes right, 0 pushes left.

    ``force`` overrides the pushed force (used to check free motion).
    """
    if force is None:
        force = physics.force_mag if action == 1 else -physics.force_mag
    total = physics.masscart + physics.masspole
    pml = physics.masspole * physics.half_length
    cos_t, sin_t = math.cos(s.theta), math.sin(s.theta)
    temp = (force + pml * s.theta_dot ** 2 * sin_t) / total
    theta_acc = (physics.gravity * sin_t - cos_t * temp) / (
        physics.half_length * (4.0 / 3.0 - physics.masspole * cos_t ** 2 / total))
    x_acc = temp - pml * theta_acc * cos_t / total
    dt = physics.dt
    new = CartPoleState(s.x + dt * s.x_dot, s.x_dot + dt * x_acc,
                        s.theta + dt * s.theta_dot, s.theta_dot + dt * theta_acc, s.step + 1)
    if not all(math.isfinite(v) for v in new.as_tuple()):
        raise SimulationError(f"non-finite state at step {new.step}")
    return new


def energy(s, physics=Physics()):
    """Total mechanical energy (pole as a uniform rod, pivot height zero)."""
    m, l = physics.masspole, physics.half_length
    kinetic = (0.5 * (physics.masscart + m) * s.x_dot ** 2
               + m * l * s.x_dot * s.theta_dot * math.cos(s.theta)
               + 0.5 * (4.0 / 3.0) * m * l * l * s.theta_dot ** 2)
    return kinetic + m * physics.gravity * l * math.cos(s.theta)


# -- rendering ---------------------------------------------------------------

@dataclass(frozen=True)
class Geometry:
    """Frame layout as fractions of the image size.

    ``world_width`` metres of track span the frame; the drawn cart is
    clamped to stay fully visible.  ``supersample`` > 1 anti-aliases edges
    by averaging that many sub-samples per axis.
    """
    world_width: float = 4.8
    track_row: float = 0.85
    cart_width: float = 0.22
    cart_height: float = 0.12
    pole_length: float = 0.6
    pole_thickness: float = 0.06
    supersample: int = 4


def render(s, width=64, height=64, geometry=Geometry()):
    """Rasterise a state into a ``height x width x 1`` image (white background)."""
    if width < 32 or height < 32:
        raise ParamError("frames must be at least 32 x 32")
    g = geometry
    ss = int(g.supersample)
    # sub-sample centres in pixel units
    offs = (np.arange(ss) + 0.5) / ss
    cols = (np.arange(width)[:, None] + offs[None, :]).ravel()
    rows = (np.arange(height)[:, None] + offs[None, :]).ravel()
    cc, rr = np.meshgrid(cols, rows)

    scale = width / g.world_width
    half_cart = 0.5 * g.cart_width * width
    u = width / 2.0 + s.x * scale
    u = min(max(u, half_cart), width - half_cart)
    track = g.track_row * height
    cart_top = track - g.cart_height * height

    ink = np.zeros(cc.shape, dtype=bool)
    ink |= np.abs(rr - track) <= 0.5
    ink |= (np.abs(cc - u) <= half_cart) & (rr >= cart_top) & (rr <= track)

    length = g.pole_length * height
    dx, dy = length * math.sin(s.theta), -length * math.cos(s.theta)
    px, py = cc - u, rr - cart_top
    t = np.clip((px * dx + py * dy) / (length * length), 0.0, 1.0)
    ex, ey = px - t * dx, py - t * dy
    ink |= ex * ex + ey * ey <= (0.5 * g.pole_thickness * height) ** 2

    cover = ink.reshape(height, ss, width, ss).mean(axis=(1, 3))
    return (1.0 - cover)[:, :, None]


# -- control -----------------------------------------------------------------

@dataclass(frozen=True)
class PidState:
    kp: float
    ki: float
    kd: float
    n_filter: float = 20.0
    setpoint: float = 0.0
    dt: float = 0.02
    integral: float = 0.0
    d: float = 0.0
    e_prev: float = 0.0

    def __post_init__(self):
        if not self.dt > 0 or not self.n_filter > 0:
            raise ParamError("PID needs dt > 0 and n_filter > 0")

    def reset(self):
        return replace(self, integral=0.0, d=0.0, e_prev=0.0)


def pid_step(p, measurement):
    """Returns ``(u, new_state)``; derivative is first-order filtered (backward Euler)."""
    e = p.setpoint - measurement
    integral = p.integral + e * p.dt
    d = (p.d + p.n_filter * (e - p.e_prev)) / (1.0 + p.n_filter * p.dt)
    u = p.kp * e + p.ki * integral + p.kd * d
    return u, replace(p, integral=integral, d=d, e_prev=e)


def actuate(u):
    return 1 if u >= 0 else 0


# -- sensors -----------------------------------------------------------------

class TrueStateSensor:
    """Reads the simulator's angle directly."""

    needs_frame = False

    def measure(self, frame, state):
        return state.theta


class CnnSensor:
    """CNN regressor from a frame to the pole angle.

    The network is trained on ``scale * theta`` (degrees by default) and
    its output is divided by ``scale`` to give radians.
    """

    needs_frame = True

    def __init__(self, spec, params, scale=DEGREES):
        self.spec = spec
        self.params = params
        self.scale = scale

    def measure(self, frame, state):
        return float(predict_batch(self.spec, self.params, frame[None])[0, 0]) / self.scale


# -- episodes ----------------------------------------------------------------

DISTURBANCES = ("none", "fog", "spatter", "cutout")


@dataclass(frozen=True)
class Scenario:
    disturbance: str = "none"
    onset: int = 150
    params: dict = field(default_factory=dict)
    steps: int = 500
    seed: int = 0

    def __post_init__(self):
        if self.disturbance not in DISTURBANCES:
            raise ParamError(f"unknown disturbance {self.disturbance!r}")
        if self.onset < 0 or self.steps < 1:
            raise ParamError("onset must be >= 0 and steps >= 1")


def frame_seed(seed, step):
    return int(np.random.SeedSequence([int(seed), int(step)]).generate_state(1)[0])


def initial_state(seed, spread=0.05):
    """Small random start, as in the classic environment."""
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 7]))
    return CartPoleState(*(float(v) for v in rng.uniform(-spread, spread, 4)))


@dataclass
class Trace:
    steps: list = field(default_factory=list)
    x: list = field(default_factory=list)
    x_dot: list = field(default_factory=list)
    theta: list = field(default_factory=list)
    theta_dot: list = field(default_factory=list)
    theta_hat: list = field(default_factory=list)
    u: list = field(default_factory=list)
    action: list = field(default_factory=list)
    novelty_score: list = field(default_factory=list)
    novelty_flag: list = field(default_factory=list)
    terminated_at: int = None
    frames: list = None

    def __len__(self):
        return len(self.steps)

    def first_flag(self):
        for step, flag in zip(self.steps, self.novelty_flag):
            if flag:
                return step
        return None

    def rows(self):
        """CSV rows: step, x, x_dot, theta_deg, theta_hat_deg, u, action, novelty_score, novelty_flag."""
        for i in range(len(self)):
            score = self.novelty_score[i]
            yield [self.steps[i], repr(self.x[i]), repr(self.x_dot[i]),
                   repr(math.degrees(self.theta[i])), repr(math.degrees(self.theta_hat[i])),
                   repr(self.u[i]), self.action[i],
                   "" if score is None else repr(score), int(bool(self.novelty_flag[i]))]

    CSV_HEADER = ["step", "x", "x_dot", "theta_deg", "theta_hat_deg", "u", "action",
                  "novelty_score", "novelty_flag"]


def run_episode(scenario, sensor, pid, detector=None, physics=Physics(), start=None,
                width=64, height=64, geometry=Geometry(), keep_frames=False):
    """Simulate one closed-loop episode and record a :class:`Trace`.

    Frames at or after ``scenario.onset`` get the scenario's perturbation.
    The episode stops early (``trace.terminated_at``) once the pole falls.
    """
    if detector is not None and not isinstance(sensor, CnnSensor):
        raise ParamError("novelty detection needs a CNN sensor")
    state = initial_state(scenario.seed) if start is None else start
    pid = pid.reset()
    trace = Trace(frames=[] if keep_frames else None)
    need_frame = sensor.needs_frame or keep_frames or detector is not None
    for step in range(scenario.steps):
        frame = None
        if need_frame:
            frame = render(state, width, height, geometry)
            if scenario.disturbance != "none" and step >= scenario.onset:
                frame = np.asarray(perturb(frame, scenario.disturbance, scenario.params,
                                           frame_seed(scenario.seed, step)))
            if keep_frames:
                trace.frames.append(frame)
        theta_hat = sensor.measure(frame, state)
        score, flag = None, False
        if detector is not None:
            feat = extract_refined_batch(sensor.spec, sensor.params, frame[None], detector.block_index)
            score = float(detector.score_batch(feat)[0])
            flag = score > detector.threshold
        u, pid = pid_step(pid, theta_hat)
        action = actuate(u)
        trace.steps.append(step)
        trace.x.append(state.x)
        trace.x_dot.append(state.x_dot)
        trace.theta.append(state.theta)
        trace.theta_dot.append(state.theta_dot)
        trace.theta_hat.append(theta_hat)
        trace.u.append(u)
        trace.action.append(action)
        trace.novelty_score.append(score)
        trace.novelty_flag.append(flag)
        state = dynamics_step(state, action, physics)
        if not state.alive:
            trace.terminated_at = step + 1
            break
    return trace


# -- sensor training data ----------------------------------------------------

@dataclass
class SensorDataset:
    """Rendered frames paired with the true angle (radians)."""
    images: np.ndarray
    targets: np.ndarray
    kinds: list
    states: list
    episodes: list  # (initial state, actions) per episode, for replay

    def __len__(self):
        return len(self.targets)

    def __iter__(self):
        from .tensor import Tensor
        for img, t in zip(self.images, self.targets):
            yield Tensor(img), float(t)


def make_sensor_dataset(n_episodes, perturbations=(), seed=0, pid=None, steps=200, stride=2,
                        explore=0.2, spread=0.15, perturb_params=None, physics=Physics(),
                        width=64, height=64, geometry=Geometry(), x_range=0.0):
    """Frames from true-state PID episodes plus perturbed copies.

    With probability ``explore`` a step takes a random action instead of
    the controller's, which widens the range of angles seen.  Every
    ``stride``-th frame is kept; each kept frame appears once clean and
    once per listed perturbation.

    ``x_range`` > 0 starts each episode at a cart position drawn from
    ``[-x_range, x_range]`` so frames near (and past) the image edge,
    where the cart is drawn clamped, are represented.
    """
    if n_episodes < 1:
        raise ParamError("need at least one episode")
    perturb_params = perturb_params or {}
    pid = pid if pid is not None else default_pid(physics.dt)
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 11]))
    images, targets, kinds, states, episodes = [], [], [], [], []
    for ep in range(n_episodes):
        state = initial_state(frame_seed(seed, ep), spread)
        if x_range > 0:
            x0 = np.random.default_rng(np.random.SeedSequence([int(seed), 13, ep])).uniform(-x_range, x_range)
            state = replace(state, x=float(x0))
        start, actions = state, []
        p = pid.reset()
        for step in range(steps):
            if step % stride == 0:
                frame = render(state, width, height, geometry)
                images.append(frame)
                targets.append(state.theta)
                kinds.append("clean")
                states.append(state)
                for j, kind in enumerate(perturbations):
                    fseed = frame_seed(seed, (ep * steps + step) * 16 + j)
                    images.append(np.asarray(perturb(frame, kind, perturb_params.get(kind, {}), fseed)))
                    targets.append(state.theta)
                    kinds.append(kind)
                    states.append(state)
            u, p = pid_step(p, state.theta)
            action = actuate(u)
            if rng.random() < explore:
                action = int(rng.integers(0, 2))
            actions.append(action)
            state = dynamics_step(state, action, physics)
            if not state.alive:
                break
        episodes.append((start, actions))
    return SensorDataset(np.stack(images), np.asarray(targets), kinds, states, episodes)


def default_pid(dt=0.02):
    """Reverse-acting PID on the angle: a positive lean demands a right push.

    With ``e = setpoint - theta`` a rightward lean gives ``e < 0``; the
    negative gains turn that into ``u > 0`` and hence action 1.  Since the
    actuator only looks at the sign of ``u``, only the gain ratios matter.
    The small integral term keeps the cart from wandering off the track.
    """
    return PidState(kp=-10.0, ki=-1.0, kd=-1.0, n_filter=20.0, setpoint=0.0, dt=dt)
