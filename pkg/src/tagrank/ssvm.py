"""Structured tag-importance model: MRF energy, joint feature map, exact
inference, and one-slack cutting-plane training.

Labels are level indices. In continuous mode there are 11 levels
(importance ``k / 10``) and 21 label differences; in binary mode 2 levels
and 3 differences. Energies are linear in the weights::

    E(y) = sum_i  W_node[x_i, y_i]
         + sum_ij W_pair[g_ij, y_i - y_j]
         + W_scene[x_s, y_s]
         + sum_i  W_obj_scene[g_is, y_i - y_s]

and ``psi(y)`` is the stacked negative feature map, so ``w . psi = -E``.
"""

from __future__ import annotations

import logging
import struct
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple, Optional, Sequence

import numpy as np

from ._parallel import parallel_map
from .corpus import Vocabulary
from .errors import FormatError, NumericError
from .features import VISUAL_DIM, MrfInstance, n_object_pairs
from .qp import solve_working_set_qp

log = logging.getLogger(__name__)

CONTINUOUS = "continuous"
BINARY = "binary"
MODES = (CONTINUOUS, BINARY)


def n_levels(mode: str) -> int:
    if mode == CONTINUOUS:
        return 11
    if mode == BINARY:
        return 2
    raise ValueError(f"unknown mode {mode!r}")


def level_values(mode: str) -> np.ndarray:
    return np.arange(11) / 10 if mode == CONTINUOUS else np.array([0.0, 1.0])


def value_to_level(y: float, mode: str = CONTINUOUS) -> int:
    scaled = y * 10 if mode == CONTINUOUS else y
    level = int(round(scaled))
    if abs(scaled - level) > 1e-9 or not (0 <= level < n_levels(mode)):
        raise ValueError(f"{y} is not a valid {mode} importance level")
    return level


def delta_node(y: float, mode: str = CONTINUOUS) -> np.ndarray:
    v = np.zeros(n_levels(mode))
    v[value_to_level(y, mode)] = 1.0
    return v


def delta_edge(y_i: float, y_j: float, mode: str = CONTINUOUS) -> np.ndarray:
    L = n_levels(mode)
    v = np.zeros(2 * L - 1)
    v[value_to_level(y_i, mode) - value_to_level(y_j, mode) + L - 1] = 1.0
    return v


# --------------------------------------------------------------------------
# parameter layout


@dataclass(frozen=True)
class ModelShape:
    n_objects: int
    n_scenes: int
    scene_dim: int
    mode: str = CONTINUOUS

    @classmethod
    def for_vocabulary(cls, vocab: Vocabulary, scene_dim: int, mode: str = CONTINUOUS) -> ModelShape:
        return cls(len(vocab.object_categories), len(vocab.scene_categories), scene_dim, mode)

    @property
    def L(self) -> int:
        return n_levels(self.mode)

    @property
    def M(self) -> int:
        return 2 * self.L - 1

    @property
    def node_dim(self) -> int:
        return self.n_objects + VISUAL_DIM

    @property
    def scene_node_dim(self) -> int:
        return self.n_scenes + self.scene_dim

    @property
    def pair_dim(self) -> int:
        return 2 * n_object_pairs(self.n_objects)

    @property
    def object_scene_dim(self) -> int:
        return self.n_objects * self.n_scenes

    @property
    def block_sizes(self) -> tuple[int, int, int, int]:
        return (self.node_dim * self.L, self.pair_dim * self.M,
                self.scene_node_dim * self.L, self.object_scene_dim * self.M)

    @property
    def size(self) -> int:
        return sum(self.block_sizes)

    def split(self, w: np.ndarray):
        """Weight vector -> the four blocks as (features x levels) matrices."""
        w = np.asarray(w, dtype=np.float64)
        if w.shape != (self.size,):
            raise ValueError(f"weight vector has shape {w.shape}, expected ({self.size},)")
        s = np.cumsum((0,) + self.block_sizes)
        return (w[s[0]:s[1]].reshape(self.node_dim, self.L),
                w[s[1]:s[2]].reshape(self.pair_dim, self.M),
                w[s[2]:s[3]].reshape(self.scene_node_dim, self.L),
                w[s[3]:s[4]].reshape(self.object_scene_dim, self.M))

    def check(self, inst: MrfInstance) -> None:
        if inst.node_features.shape[1:] != (self.node_dim,) or inst.edge_features.shape[1:] != (self.pair_dim,):
            raise ValueError(f"instance {inst.image_id!r} does not match the model's object vocabulary")
        if inst.has_scene:
            if inst.scene_features.shape != (self.scene_node_dim,):
                raise ValueError(f"instance {inst.image_id!r}: scene feature dimension mismatch")
            if inst.scene_edge_features.shape[1:] != (self.object_scene_dim,):
                raise ValueError(f"instance {inst.image_id!r}: object-scene feature dimension mismatch")


@dataclass(frozen=True)
class WeightVector:
    shape: ModelShape
    w: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.w, dtype=np.float64)
        if w.shape != (self.shape.size,):
            raise ValueError(f"weights have shape {w.shape}, expected ({self.shape.size},)")
        if not np.all(np.isfinite(w)):
            raise ValueError("weights must be finite")
        object.__setattr__(self, "w", w)

    @classmethod
    def zeros(cls, shape: ModelShape) -> WeightVector:
        return cls(shape, np.zeros(shape.size))

    @property
    def blocks(self):
        return self.shape.split(self.w)


# --------------------------------------------------------------------------
# energy and joint feature map


class Potentials(NamedTuple):
    unary: list          # per node, length-L cost vector
    pairwise: list       # (i, j, length-M cost vector indexed by y_i - y_j + L - 1)


def potentials(inst: MrfInstance, shape: ModelShape, w) -> Potentials:
    shape.check(inst)
    W_node, W_pair, W_scene, W_os = shape.split(w)
    unary = list(inst.node_features @ W_node)
    pairwise = [(i, j, d) for (i, j), d in zip(inst.edges, inst.edge_features @ W_pair)]
    if inst.has_scene:
        s = inst.n_objects
        unary.append(inst.scene_features @ W_scene)
        pairwise += [(i, s, d) for i, d in enumerate(inst.scene_edge_features @ W_os)]
    return Potentials(unary, pairwise)


def _check_labels(inst: MrfInstance, y, L: int) -> np.ndarray:
    y = np.asarray(y, dtype=np.int64)
    if y.shape != (inst.n_nodes,):
        raise ValueError(f"instance {inst.image_id!r} has {inst.n_nodes} nodes, got {y.shape[0] if y.ndim else 0} labels")
    if y.size and (y.min() < 0 or y.max() >= L):
        raise ValueError(f"label levels must lie in [0, {L})")
    return y


def _energy_from(pots: Potentials, y, L: int) -> float:
    e = sum(float(u[y[i]]) for i, u in enumerate(pots.unary))
    e += sum(float(d[y[i] - y[j] + L - 1]) for i, j, d in pots.pairwise)
    return e


def energy(inst: MrfInstance, y, w, shape: ModelShape) -> float:
    """Energy of a labeling ``y`` (level indices)."""
    y = _check_labels(inst, y, shape.L)
    return _energy_from(potentials(inst, shape, w), y, shape.L)


def psi(inst: MrfInstance, y, shape: ModelShape) -> np.ndarray:
    shape.check(inst)
    y = _check_labels(inst, y, shape.L)
    L, M = shape.L, shape.M
    node = np.zeros((shape.node_dim, L))
    for i in range(inst.n_objects):
        node[:, y[i]] += inst.node_features[i]
    pair = np.zeros((shape.pair_dim, M))
    for (i, j), g in zip(inst.edges, inst.edge_features):
        pair[:, y[i] - y[j] + L - 1] += g
    scene = np.zeros((shape.scene_node_dim, L))
    obj_scene = np.zeros((shape.object_scene_dim, M))
    if inst.has_scene:
        s = inst.n_objects
        scene[:, y[s]] += inst.scene_features
        for i, g in enumerate(inst.scene_edge_features):
            obj_scene[:, y[i] - y[s] + L - 1] += g
    return -np.concatenate([node.ravel(), pair.ravel(), scene.ravel(), obj_scene.ravel()])


# --------------------------------------------------------------------------
# inference


@dataclass(frozen=True)
class InferenceConfig:
    cap: int = 6            # largest node count solved by enumeration
    restarts: int = 8       # random ICM starts above the cap
    seed: int = 0


class Labeling(NamedTuple):
    levels: np.ndarray
    objective: float        # energy for infer, loss minus energy for loss-augmented
    exact: bool


def _pair_table(d: np.ndarray, L: int) -> np.ndarray:
    idx = np.subtract.outer(np.arange(L), np.arange(L)) + L - 1
    return d[idx]


def _enumerate_min(pots: Potentials, L: int) -> np.ndarray:
    n = len(pots.unary)
    by_last = [[] for _ in range(n)]
    for i, j, d in pots.pairwise:
        T = _pair_table(d, L)
        by_last[max(i, j)].append((min(i, j), T if i < j else T.T))
    # grow the table one variable at a time so each pairwise term is added
    # at the smallest size that contains both of its variables
    total = np.array(pots.unary[0], dtype=np.float64)
    for k in range(1, n):
        total = total[..., None] + np.asarray(pots.unary[k], dtype=np.float64)
        for i, T in by_last[k]:
            shp = [1] * (k + 1)
            shp[i] = L
            shp[k] = L
            total += T.reshape(shp)
    # argmin returns the first minimum in C order: lexicographic tie-break
    flat = int(np.argmin(total))
    return np.array(np.unravel_index(flat, total.shape), dtype=np.int64)


def _icm(pots: Potentials, L: int, start: np.ndarray) -> np.ndarray:
    n = len(pots.unary)
    y = start.copy()
    nbrs = [[] for _ in range(n)]
    for i, j, d in pots.pairwise:
        T = _pair_table(d, L)
        nbrs[i].append((j, T))      # T[y_i, y_j]
        nbrs[j].append((i, T.T))
    for _ in range(100 * n):
        changed = False
        for i in range(n):
            cost = np.array(pots.unary[i], dtype=np.float64)
            for j, T in nbrs[i]:
                cost = cost + T[:, y[j]]
            best = int(np.argmin(cost))
            if cost[best] < cost[y[i]]:
                y[i] = best
                changed = True
        if not changed:
            break
    return y


def _minimize(pots: Potentials, L: int, cfg: InferenceConfig) -> tuple[np.ndarray, bool]:
    n = len(pots.unary)
    if n == 0:
        raise ValueError("cannot run inference on an empty instance")
    if n <= cfg.cap:
        return _enumerate_min(pots, L), True
    rng = np.random.default_rng(cfg.seed)
    starts = [np.zeros(n, dtype=np.int64)] + [rng.integers(0, L, size=n) for _ in range(cfg.restarts)]
    best, best_key = None, None
    for s in starts:
        y = _icm(pots, L, s)
        key = (_energy_from(pots, y, L), tuple(y))
        if best_key is None or key < best_key:
            best, best_key = y, key
    return best, False


def infer(inst: MrfInstance, w, shape: ModelShape, config: InferenceConfig = InferenceConfig()) -> Labeling:
    """Minimum-energy labeling; exact up to ``config.cap`` nodes, ICM above."""
    if inst.n_nodes == 0:
        raise ValueError("cannot run inference on an empty instance")
    pots = potentials(inst, shape, w)
    y, exact = _minimize(pots, shape.L, config)
    return Labeling(y, _energy_from(pots, y, shape.L), exact)


def loss_mad(y_true, y_pred) -> float:
    """Mean absolute difference between two importance value vectors."""
    a = np.asarray(y_true, dtype=np.float64)
    b = np.asarray(y_pred, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"length mismatch: {a.shape} vs {b.shape}")
    if a.size == 0:
        return 0.0
    return float(np.mean(np.abs(a - b)))


def loss_augmented_infer(inst: MrfInstance, y_true, w, shape: ModelShape,
                         config: InferenceConfig = InferenceConfig()) -> Labeling:
    """argmax over labelings of MAD(y_true, y) - E(y)."""
    if inst.n_nodes == 0:
        raise ValueError("cannot run inference on an empty instance")
    y_true = _check_labels(inst, y_true, shape.L)
    vals = level_values(shape.mode)
    pots = potentials(inst, shape, w)
    n = inst.n_nodes
    aug = Potentials([u - np.abs(vals[y_true[i]] - vals) / n for i, u in enumerate(pots.unary)],
                     pots.pairwise)
    y, exact = _minimize(aug, shape.L, config)
    return Labeling(y, -_energy_from(aug, y, shape.L), exact)


# --------------------------------------------------------------------------
# training


@dataclass(frozen=True)
class TrainConfig:
    C: float = 1.0
    epsilon: float = 1e-3
    max_iterations: int = 500
    mode: str = CONTINUOUS
    inference_cap: int = 6
    seed: int = 0

    def __post_init__(self):
        if self.C <= 0 or self.epsilon <= 0 or self.max_iterations <= 0 or self.inference_cap <= 0:
            raise ValueError("C, epsilon, max_iterations and inference_cap must be positive")
        n_levels(self.mode)

    @property
    def inference(self) -> InferenceConfig:
        return InferenceConfig(cap=self.inference_cap, seed=self.seed)


@dataclass
class TrainReport:
    iterations: int = 0
    converged: bool = False
    final_violation: float = float("inf")
    objective_trace: list = field(default_factory=list)     # restricted-QP optimum per iteration
    violation_trace: list = field(default_factory=list)
    wall_time: float = 0.0

    def to_json(self) -> dict:
        return {
            "iterations": self.iterations,
            "converged": self.converged,
            "final_violation": self.final_violation,
            "objective_trace": list(self.objective_trace),
            "violation_trace": list(self.violation_trace),
            "wall_time": self.wall_time,
        }


def _separation(insts, labels, psi_true, w, shape, icfg):
    def one(args):
        inst, y, p = args
        lab = loss_augmented_infer(inst, y, w, shape, icfg)
        vals = level_values(shape.mode)
        return p - psi(inst, lab.levels, shape), loss_mad(vals[y], vals[lab.levels])

    results = parallel_map(one, list(zip(insts, labels, psi_true)))
    a = np.mean([r[0] for r in results], axis=0)
    b = float(np.mean([r[1] for r in results]))
    return a, b


def train_ssvm(instances: Sequence[MrfInstance], labels, config: TrainConfig = TrainConfig(),
               shape: Optional[ModelShape] = None):
    """One-slack margin-rescaling cutting-plane training.

    ``labels`` is a list of level-index arrays, or None to use each
    instance's own labels. Returns ``(WeightVector, TrainReport)``.
    """
    if not instances:
        raise ValueError("training set is empty")
    if labels is None:
        labels = [inst.labels for inst in instances]
    if any(y is None for y in labels):
        raise ValueError("every training instance needs labels")
    if shape is None:
        shape = infer_shape(instances, config.mode)
    labels = [_check_labels(inst, y, shape.L) for inst, y in zip(instances, labels)]
    icfg = config.inference
    psi_true = [psi(inst, y, shape) for inst, y in zip(instances, labels)]

    t0 = time.perf_counter()
    report = TrainReport()
    w = np.zeros(shape.size)
    xi = 0.0
    A, b_list = [], []
    gram = np.zeros((0, 0))
    alpha = None
    for it in range(1, config.max_iterations + 1):
        a, b = _separation(instances, labels, psi_true, w, shape, icfg)
        violation = b - float(w @ a) - xi
        report.violation_trace.append(violation)
        report.iterations = it
        report.final_violation = violation
        if violation <= config.epsilon:
            report.converged = True
            break
        new_col = np.array([float(a @ ak) for ak in A])
        gram = np.block([[gram, new_col[:, None]], [new_col[None, :], np.array([[a @ a]])]])
        A.append(a)
        b_list.append(b)
        try:
            res = solve_working_set_qp(np.array(A), np.array(b_list), config.C, alpha0=alpha, gram=gram)
        except NumericError as exc:
            raise NumericError(f"QP failed at cutting-plane iteration {it}: {exc}") from exc
        w, xi, alpha = res.w, res.xi, res.alpha
        report.objective_trace.append(res.dual)
        log.debug("iter %d: violation %.4g, objective %.6g, |W| %d", it, violation, res.dual, len(A))
    else:
        a, b = _separation(instances, labels, psi_true, w, shape, icfg)
        report.final_violation = b - float(w @ a) - xi
    report.wall_time = time.perf_counter() - t0
    return WeightVector(shape, w), report


def infer_shape(instances: Sequence[MrfInstance], mode: str) -> ModelShape:
    inst = instances[0]
    n_obj = inst.node_features.shape[1] - VISUAL_DIM
    n_os = inst.scene_edge_features.shape[1]
    n_scenes = n_os // n_obj if n_obj else 0
    scene_dim = 0
    for other in instances:
        if other.has_scene:
            scene_dim = other.scene_features.shape[0] - n_scenes
            break
    return ModelShape(n_obj, n_scenes, scene_dim, mode)


def predict_importance(inst: MrfInstance, weights: WeightVector,
                       config: InferenceConfig = InferenceConfig()) -> dict:
    """Tag -> predicted importance value (tenths, or 0/1 in binary mode)."""
    lab = infer(inst, weights.w, weights.shape, config)
    vals = level_values(weights.shape.mode)
    return {t: float(vals[k]) for t, k in zip(inst.tags, lab.levels)}


# --------------------------------------------------------------------------
# model file


MODEL_MAGIC = b"TGRKSSVM"
MODEL_VERSION = 1
_MODEL_HEADER = struct.Struct("<8sIB32s3Q4QddQ")


def model_bytes(weights: WeightVector, vocab: Vocabulary, config: TrainConfig = TrainConfig()) -> bytes:
    shp = weights.shape
    head = _MODEL_HEADER.pack(MODEL_MAGIC, MODEL_VERSION, MODES.index(shp.mode), vocab.digest(),
                              shp.n_objects, shp.n_scenes, shp.scene_dim, *shp.block_sizes,
                              config.C, config.epsilon, config.max_iterations)
    return head + np.ascontiguousarray(weights.w, dtype="<f8").tobytes()


def save_model(path, weights: WeightVector, vocab: Vocabulary, config: TrainConfig = TrainConfig()) -> None:
    Path(path).write_bytes(model_bytes(weights, vocab, config))


def read_model_bytes(data: bytes, vocab: Optional[Vocabulary] = None):
    """-> (WeightVector, TrainConfig)"""
    if len(data) < _MODEL_HEADER.size:
        raise FormatError("truncated model header", len(data))
    (magic, version, mode_id, digest, n_obj, n_sc, sdim, b0, b1, b2, b3,
     C, eps, max_it) = _MODEL_HEADER.unpack_from(data, 0)
    if magic != MODEL_MAGIC:
        raise FormatError(f"bad magic {magic!r}", 0)
    if version != MODEL_VERSION:
        raise FormatError(f"unsupported version {version}", 8)
    if mode_id >= len(MODES):
        raise FormatError(f"unknown mode id {mode_id}", 12)
    shape = ModelShape(n_obj, n_sc, sdim, MODES[mode_id])
    if shape.block_sizes != (b0, b1, b2, b3):
        raise FormatError("block dimensions inconsistent with vocabulary sizes", 13 + 32)
    if vocab is not None and vocab.digest() != digest:
        raise FormatError("model was trained on a different vocabulary", 13)
    payload = data[_MODEL_HEADER.size:]
    if len(payload) != 8 * shape.size:
        raise FormatError(f"payload has {len(payload)} bytes, expected {8 * shape.size}", _MODEL_HEADER.size)
    w = np.frombuffer(payload, dtype="<f8").astype(np.float64)
    return WeightVector(shape, w), TrainConfig(C=C, epsilon=eps, max_iterations=max_it, mode=shape.mode)


def load_model(path, vocab: Optional[Vocabulary] = None):
    return read_model_bytes(Path(path).read_bytes(), vocab)
