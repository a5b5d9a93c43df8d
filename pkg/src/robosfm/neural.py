"""Learned force fields: five small feed-forward networks, one per force
term, trained by mini-batch gradient descent on residual-force targets.

Goal, pedestrian, and group networks are twin-branched (two MLPs whose
2-vector outputs are summed); obstacle and robot networks are two-stage
(a distance-to-magnitude MLP feeding a magnitude-plus-direction MLP).
All hidden layers are tanh, outputs linear.  Inputs are normalized:
distances by the 3 m social zone, speeds by the 2.7 m/s walking cap.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Sequence, Union

import numpy as np

from robosfm.behavior import BehaviorLabel
from robosfm.forces import PedestrianAgent, ForceBreakdown, SfmParams
from robosfm.geometry import Vec2, ZERO, nearest_obstacle_point
from robosfm.records import SceneFrame

DIST_SCALE = 3.0  # m, social zone of influence
SPEED_SCALE = 2.7  # m/s, walking speed cap

# segment-selection radii used when curating training data; inference
# decays learned magnitudes exponentially beyond them (see compose_neural)
OBSTACLE_RADIUS = 2.0  # m
NEIGHBOR_RADIUS = 3.0  # m
ROBOT_RADIUS = 3.0  # m

_HIDDEN = (32, 32)


class NetId(Enum):
    GOAL = "goal"
    OBSTACLE = "obstacle"
    PEDESTRIAN = "pedestrian"
    ROBOT = "robot"
    GROUP = "group"


# kind, first-branch sizes, second-branch sizes.  Twin nets sum two branch
# outputs; staged nets feed a magnitude stage into a direction stage.  The
# robot net also sees the robot's speed so the stationary/moving amplitude
# difference is learnable.
ARCHITECTURES: dict[NetId, tuple[str, tuple[int, ...], tuple[int, ...]]] = {
    NetId.GOAL: ("twin", (2, *_HIDDEN, 2), (2, *_HIDDEN, 2)),
    NetId.OBSTACLE: ("staged", (1, *_HIDDEN, 1), (3, *_HIDDEN, 2)),
    NetId.PEDESTRIAN: ("twin", (2, *_HIDDEN, 2), (3, *_HIDDEN, 2)),
    NetId.ROBOT: ("staged", (2, *_HIDDEN, 1), (3, *_HIDDEN, 2)),
    NetId.GROUP: ("twin", (1, *_HIDDEN, 2), (2, *_HIDDEN, 2)),
}


def input_dim(net_id: NetId) -> int:
    kind, first, second = ARCHITECTURES[net_id]
    if kind == "twin":
        return first[0] + second[0]
    return first[0] + (second[0] - first[-1])


@dataclass
class Mlp:
    """One plain MLP branch/stage: weight matrices (out, in) and biases."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]
    activations: list[str]  # "tanh" or "linear" per layer

    @property
    def layer_sizes(self) -> tuple[int, ...]:
        return (self.weights[0].shape[1],) + tuple(w.shape[0] for w in self.weights)


@dataclass
class NetworkWeights:
    """Parameters of one force network plus its input specification."""

    net_id: NetId
    kind: str  # "twin" or "staged"
    first: Mlp
    second: Mlp

    @property
    def layer_sizes(self) -> list[tuple[int, ...]]:
        return [self.first.layer_sizes, self.second.layer_sizes]


@dataclass(frozen=True)
class TrainingSample:
    network_id: NetId
    input: tuple[float, ...]
    target_force: Vec2

    def __post_init__(self):
        if len(self.input) != input_dim(self.network_id):
            raise ValueError(
                f"{self.network_id.value} network expects "
                f"{input_dim(self.network_id)} inputs, got {len(self.input)}"
            )
        if not self.target_force.is_finite():
            raise ValueError("target force must be finite")


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.05
    epochs: int = 150
    batch_size: int = 64
    rng_seed: int = 42
    weight_init_scale: float = 1.0
    momentum: float = 0.9  # classical momentum; 0 disables

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.epochs < 1:
            raise ValueError("epochs must be at least 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be at least 1")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError("momentum must be in [0, 1)")


def _init_mlp(sizes: Sequence[int], scale: float, rng: np.random.Generator) -> Mlp:
    weights, biases, acts = [], [], []
    for i, (n_in, n_out) in enumerate(zip(sizes, sizes[1:])):
        s = scale / math.sqrt(n_in)
        weights.append(rng.uniform(-s, s, size=(n_out, n_in)))
        biases.append(rng.uniform(-s, s, size=n_out))
        acts.append("linear" if i == len(sizes) - 2 else "tanh")
    return Mlp(weights, biases, acts)


def init_network(net_id: NetId, cfg: TrainConfig = TrainConfig()) -> NetworkWeights:
    """Seeded uniform initialization, scale weight_init_scale / sqrt(fan_in)."""
    kind, first_sizes, second_sizes = ARCHITECTURES[net_id]
    idx = list(NetId).index(net_id)
    first = _init_mlp(
        first_sizes, cfg.weight_init_scale, np.random.default_rng([cfg.rng_seed, idx, 0])
    )
    second = _init_mlp(
        second_sizes, cfg.weight_init_scale, np.random.default_rng([cfg.rng_seed, idx, 1])
    )
    return NetworkWeights(net_id, kind, first, second)


def zero_network(net_id: NetId) -> NetworkWeights:
    kind, first_sizes, second_sizes = ARCHITECTURES[net_id]
    zero = np.zeros
    mk = lambda sizes: Mlp(
        [zero((o, i)) for i, o in zip(sizes, sizes[1:])],
        [zero(o) for o in sizes[1:]],
        ["linear" if k == len(sizes) - 2 else "tanh" for k in range(len(sizes) - 1)],
    )
    return NetworkWeights(net_id, kind, mk(first_sizes), mk(second_sizes))


def _stack_forward(mlp: Mlp, x: np.ndarray, keep_cache: bool = False):
    cache = [x] if keep_cache else None
    for w, b, act in zip(mlp.weights, mlp.biases, mlp.activations):
        x = x @ w.T + b
        if act == "tanh":
            x = np.tanh(x)
        if keep_cache:
            cache.append(x)
    return (x, cache) if keep_cache else x


def _stack_backward(mlp: Mlp, cache: list[np.ndarray], d_out: np.ndarray):
    """Gradients of all parameters plus the input, given d(loss)/d(output)."""
    d_ws, d_bs = [None] * len(mlp.weights), [None] * len(mlp.weights)
    grad = d_out
    for i in reversed(range(len(mlp.weights))):
        if mlp.activations[i] == "tanh":
            grad = grad * (1.0 - cache[i + 1] ** 2)
        d_ws[i] = grad.T @ cache[i]
        d_bs[i] = grad.sum(axis=0)
        grad = grad @ mlp.weights[i]
    return d_ws, d_bs, grad


def _split_twin(net: NetworkWeights, x: np.ndarray):
    d1 = net.first.layer_sizes[0]
    return x[:, :d1], x[:, d1:]


def forward_batch(net: NetworkWeights, x: np.ndarray) -> np.ndarray:
    """Evaluate the network on a (N, input_dim) batch, returning (N, 2)."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 2 or x.shape[1] != input_dim(net.net_id):
        raise ValueError(
            f"expected input of width {input_dim(net.net_id)}, got shape {x.shape}"
        )
    if net.kind == "twin":
        xa, xb = _split_twin(net, x)
        return _stack_forward(net.first, xa) + _stack_forward(net.second, xb)
    k = net.first.layer_sizes[0]
    magnitude = _stack_forward(net.first, x[:, :k])
    return _stack_forward(net.second, np.concatenate([magnitude, x[:, k:]], axis=1))


def forward(net: NetworkWeights, input: Sequence[float]) -> Vec2:
    """Single-sample feed-forward evaluation."""
    out = forward_batch(net, np.asarray(input, dtype=float)[None, :])[0]
    return Vec2(float(out[0]), float(out[1]))


def backward_batch(
    net: NetworkWeights, x: np.ndarray, targets: np.ndarray
) -> tuple[float, NetworkWeights]:
    """Mean squared-norm loss over the batch and its exact gradient.

    The gradient is returned in a NetworkWeights-shaped container.
    """
    x = np.asarray(x, dtype=float)
    targets = np.asarray(targets, dtype=float)
    n = x.shape[0]
    if net.kind == "twin":
        xa, xb = _split_twin(net, x)
        ya, cache_a = _stack_forward(net.first, xa, keep_cache=True)
        yb, cache_b = _stack_forward(net.second, xb, keep_cache=True)
        out = ya + yb
        residual = out - targets
        loss = float((residual ** 2).sum() / n)
        d_out = 2.0 * residual / n
        dw_a, db_a, _ = _stack_backward(net.first, cache_a, d_out)
        dw_b, db_b, _ = _stack_backward(net.second, cache_b, d_out)
    else:
        k = net.first.layer_sizes[0]
        mag, cache_m = _stack_forward(net.first, x[:, :k], keep_cache=True)
        stage2_in = np.concatenate([mag, x[:, k:]], axis=1)
        out, cache_s = _stack_forward(net.second, stage2_in, keep_cache=True)
        residual = out - targets
        loss = float((residual ** 2).sum() / n)
        d_out = 2.0 * residual / n
        dw_b, db_b, d_in2 = _stack_backward(net.second, cache_s, d_out)
        dw_a, db_a, _ = _stack_backward(net.first, cache_m, d_in2[:, : mag.shape[1]])
    grad_first = Mlp(dw_a, db_a, list(net.first.activations))
    grad_second = Mlp(dw_b, db_b, list(net.second.activations))
    return loss, NetworkWeights(net.net_id, net.kind, grad_first, grad_second)


def backward(
    net: NetworkWeights, input: Sequence[float], target: Vec2
) -> tuple[float, NetworkWeights]:
    """Squared-norm loss for one sample and its analytic gradient."""
    x = np.asarray(input, dtype=float)[None, :]
    t = np.array([[target.x, target.y]])
    return backward_batch(net, x, t)


def _mlps(net: NetworkWeights):
    return (net.first, net.second)


def net_to_vector(net: NetworkWeights) -> np.ndarray:
    """Flatten all parameters (branch order, then layer order, W before b)."""
    parts = []
    for mlp in _mlps(net):
        for w, b in zip(mlp.weights, mlp.biases):
            parts.append(w.ravel())
            parts.append(b.ravel())
    return np.concatenate(parts)


def vector_to_net(net_id: NetId, vec: np.ndarray) -> NetworkWeights:
    kind, first_sizes, second_sizes = ARCHITECTURES[net_id]
    pos = 0

    def take(sizes):
        nonlocal pos
        weights, biases, acts = [], [], []
        for i, (n_in, n_out) in enumerate(zip(sizes, sizes[1:])):
            w = vec[pos : pos + n_out * n_in].reshape(n_out, n_in).copy()
            pos += n_out * n_in
            b = vec[pos : pos + n_out].copy()
            pos += n_out
            weights.append(w)
            biases.append(b)
            acts.append("linear" if i == len(sizes) - 2 else "tanh")
        return Mlp(weights, biases, acts)

    first = take(first_sizes)
    second = take(second_sizes)
    if pos != vec.size:
        raise ValueError(f"weight vector has {vec.size} entries, expected {pos}")
    return NetworkWeights(net_id, kind, first, second)


MAGIC = b"NFW1"
FORMAT_VERSION = 1


def save_weights(net: NetworkWeights, path) -> None:
    """Write the 16-byte header (magic, version, net id, layer count)
    followed by all parameters as little-endian float64."""
    vec = net_to_vector(net)
    layer_count = len(net.first.weights) + len(net.second.weights)
    header = MAGIC + struct.pack(
        "<III", FORMAT_VERSION, list(NetId).index(net.net_id), layer_count
    )
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(vec.astype("<f8").tobytes())


def load_weights(path) -> NetworkWeights:
    with open(path, "rb") as fh:
        header = fh.read(16)
        if len(header) != 16 or header[:4] != MAGIC:
            raise ValueError(f"{path}: not a force-network weight file")
        version, net_index, layer_count = struct.unpack("<III", header[4:])
        if version != FORMAT_VERSION:
            raise ValueError(f"{path}: unsupported version {version}")
        if net_index >= len(NetId):
            raise ValueError(f"{path}: unknown network id {net_index}")
        net_id = list(NetId)[net_index]
        payload = np.frombuffer(fh.read(), dtype="<f8")
    net = vector_to_net(net_id, payload.astype(float))
    if len(net.first.weights) + len(net.second.weights) != layer_count:
        raise ValueError(f"{path}: layer count mismatch")
    return net


class TrainingDivergedError(RuntimeError):
    pass


def train(
    net_id: NetId,
    samples: Sequence[TrainingSample],
    cfg: TrainConfig = TrainConfig(),
) -> tuple[NetworkWeights, list[float]]:
    """Mini-batch gradient descent (with classical momentum) from a
    seeded initialization.

    The learning rate steps down by 5x at 70% and 90% of the epochs.
    Returns the trained weights and the mean-loss history (entry 0 is the
    pre-training loss, one entry per epoch after).  The returned weights
    never score worse than the initialization: if the last epoch regressed,
    the best intermediate weights are returned instead.
    """
    if not samples:
        raise ValueError("no training samples")
    if any(s.network_id is not net_id for s in samples):
        raise ValueError(f"samples mixed in from another network than {net_id.value}")
    x = np.array([s.input for s in samples], dtype=float)
    t = np.array([[s.target_force.x, s.target_force.y] for s in samples], dtype=float)

    net = init_network(net_id, cfg)
    params = net_to_vector(net)
    velocity = np.zeros_like(params)
    shuffler = np.random.default_rng([cfg.rng_seed, list(NetId).index(net_id), 2])

    def mean_loss(p: np.ndarray) -> float:
        out = forward_batch(vector_to_net(net_id, p), x)
        return float(((out - t) ** 2).sum(axis=1).mean())

    history = [mean_loss(params)]
    best = (history[0], params.copy())
    n = len(samples)
    for epoch in range(cfg.epochs):
        lr = cfg.learning_rate
        if epoch >= 0.9 * cfg.epochs:
            lr *= 0.04
        elif epoch >= 0.7 * cfg.epochs:
            lr *= 0.2
        order = shuffler.permutation(n)
        for start in range(0, n, cfg.batch_size):
            batch = order[start : start + cfg.batch_size]
            loss, grad = backward_batch(
                vector_to_net(net_id, params), x[batch], t[batch]
            )
            if not math.isfinite(loss):
                raise TrainingDivergedError(
                    "training diverged; try a smaller learning_rate"
                )
            velocity = cfg.momentum * velocity - lr * net_to_vector(grad)
            params = params + velocity
        epoch_loss = mean_loss(params)
        if not math.isfinite(epoch_loss):
            raise TrainingDivergedError(
                "training diverged; try a smaller learning_rate"
            )
        history.append(epoch_loss)
        if epoch_loss < best[0]:
            best = (epoch_loss, params.copy())
    if history[-1] > history[0]:
        params = best[1]
    return vector_to_net(net_id, params), history


# ---------------------------------------------------------------------------
# feature layouts (shared between curation and inference)

def goal_input(velocity: Vec2, goal_direction: Vec2) -> tuple[float, ...]:
    return (
        velocity.x / SPEED_SCALE, velocity.y / SPEED_SCALE,
        goal_direction.x, goal_direction.y,
    )


def obstacle_input(distance: float, direction: Vec2) -> tuple[float, ...]:
    return (distance / DIST_SCALE, direction.x, direction.y)


def pedestrian_input(
    velocity: Vec2, distance: float, direction: Vec2
) -> tuple[float, ...]:
    return (
        velocity.x / SPEED_SCALE, velocity.y / SPEED_SCALE,
        distance / DIST_SCALE, direction.x, direction.y,
    )


def robot_input(
    distance: float, direction: Vec2, robot_speed: float
) -> tuple[float, ...]:
    return (
        distance / DIST_SCALE, robot_speed / SPEED_SCALE,
        direction.x, direction.y,
    )


def group_input(goal_aligned_speed: float, centroid_offset: Vec2) -> tuple[float, ...]:
    return (
        goal_aligned_speed / SPEED_SCALE,
        centroid_offset.x / DIST_SCALE, centroid_offset.y / DIST_SCALE,
    )


def _heading_vec(agent: PedestrianAgent) -> Optional[Vec2]:
    if agent.velocity.norm() > 1e-9:
        return agent.velocity.normalized()
    offset = agent.goal - agent.position
    return offset.normalized() if offset.norm() > 1e-9 else None


def in_fov(agent: PedestrianAgent, point: Vec2, fov_half_angle: float) -> bool:
    """Whether a point lies within the agent's field of view."""
    heading = _heading_vec(agent)
    if heading is None:
        return True
    offset = point - agent.position
    if offset.norm() < 1e-9:
        return True
    return heading.dot(offset.normalized()) >= math.cos(fov_half_angle)


def _fade(force: Vec2, distance: float, radius: float, decay_range: float) -> Vec2:
    # outside the curated radius the learned magnitude is decayed
    # exponentially instead of trusting the network to extrapolate
    if distance <= radius:
        return force
    return force * math.exp(-(distance - radius) / decay_range)


def _net_obstacle_force(
    nets: dict[NetId, NetworkWeights], position: Vec2, point: Vec2,
    params: SfmParams,
) -> Vec2:
    offset = position - point
    b = offset.norm()
    if b < 1e-9:
        return forward(nets[NetId.OBSTACLE], obstacle_input(0.0, Vec2(1.0, 0.0)))
    force = forward(
        nets[NetId.OBSTACLE], obstacle_input(min(b, OBSTACLE_RADIUS), offset / b)
    )
    return _fade(force, b, OBSTACLE_RADIUS, params.obs_range)


def compose_neural(
    agent: PedestrianAgent,
    scene: SceneFrame,
    nets: dict[NetId, NetworkWeights],
    label: Optional[BehaviorLabel] = None,
    params: SfmParams = SfmParams(),
) -> ForceBreakdown:
    """Combine the five network outputs into one social force.

    Only geometric fields of ``params`` are used (field of view and the
    potential ranges driving the beyond-radius decay).  Robot routing
    matches the analytic model: avoidance uses the robot network, neutral
    treats the robot as an obstacle through the obstacle network, and an
    active attraction switch retargets the goal and drops the robot term.
    """
    missing = [n.value for n in NetId if n not in nets]
    if missing:
        raise ValueError(f"missing networks: {', '.join(missing)}")
    if label is None:
        label = agent.behavior_mode

    robot = scene.robot
    goal = agent.goal
    f_r = ZERO
    if robot is not None:
        if label is BehaviorLabel.ATTRACTION and agent.goal_switch_remaining > 0:
            goal = robot.position
        elif label is BehaviorLabel.AVOIDANCE:
            offset = agent.position - robot.position
            b = offset.norm()
            direction = offset / b if b > 1e-9 else Vec2(1.0, 0.0)
            f_r = forward(
                nets[NetId.ROBOT],
                robot_input(min(b, ROBOT_RADIUS), direction, robot.velocity.norm()),
            )
            f_r = _fade(f_r, b, ROBOT_RADIUS, params.robot_range)
        else:
            f_r = _net_obstacle_force(nets, agent.position, robot.position, params)

    goal_offset = goal - agent.position
    goal_dir = goal_offset.normalized() if goal_offset.norm() > 1e-9 else ZERO
    f_a = forward(nets[NetId.GOAL], goal_input(agent.velocity, goal_dir))

    f_o = ZERO
    if scene.obstacles:
        point, _ = nearest_obstacle_point(agent.position, scene.obstacles)
        f_o = _net_obstacle_force(nets, agent.position, point, params)

    f_p = ZERO
    for ped_id, pos, _vel in scene.pedestrians:
        if ped_id == agent.id:
            continue
        if not in_fov(agent, pos, params.fov_half_angle):
            continue
        offset = agent.position - pos
        b = offset.norm()
        if b < 1e-9:
            continue
        contribution = forward(
            nets[NetId.PEDESTRIAN],
            pedestrian_input(agent.velocity, min(b, NEIGHBOR_RADIUS), offset / b),
        )
        f_p = f_p + _fade(contribution, b, NEIGHBOR_RADIUS, params.ped_range)

    f_gr = ZERO
    if agent.group_id is not None and scene.group_ids is not None:
        members = [
            pos
            for ped_id, pos, _vel in scene.pedestrians
            if ped_id != agent.id
            and scene.group_ids.get(ped_id) == agent.group_id
        ]
        if members:
            n = len(members) + 1
            cx = (sum(p.x for p in members) + agent.position.x) / n
            cy = (sum(p.y for p in members) + agent.position.y) / n
            offset = Vec2(cx, cy) - agent.position
            if goal_dir is not ZERO and agent.velocity.norm() > 1e-12:
                aligned = agent.velocity.dot(goal_dir)
            else:
                aligned = 0.0
            f_gr = forward(nets[NetId.GROUP], group_input(aligned, offset))

    return ForceBreakdown(f_a=f_a, f_o=f_o, f_p=f_p, f_r=f_r, f_gr=f_gr, noise=ZERO)
