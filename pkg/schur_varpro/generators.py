"""
Synthetic datasets: grid pose graphs, bipartite SfM-shaped graphs, and the
conversion of any pose dataset to sensor-network localization (SNL).

Every generator takes an explicit seed; the same arguments always produce the
same dataset.
"""
from __future__ import annotations

from logging import getLogger

import attrs
import numpy as np
from scipy.spatial.transform import Rotation

from .dataset import Dataset, DatasetBuilder, vertex_of
from .enums import BlockKind
from .model import Range, RelTranslation

logger = getLogger(__name__)


def _nonnegative(instance, attribute, value) -> None:
    if not value >= 0:
        raise ValueError(f"{attribute.name} must be nonnegative, got {value}")


@attrs.frozen
class NoiseModel:
    rot_sigma: float = attrs.field(default=0.0, converter=float, validator=_nonnegative)
    trans_sigma: float = attrs.field(default=0.0, converter=float, validator=_nonnegative)

    @property
    def kappa(self) -> float:
        return 1.0 / self.rot_sigma**2 if self.rot_sigma > 0 else 1.0

    @property
    def tau(self) -> float:
        return 1.0 / self.trans_sigma**2 if self.trans_sigma > 0 else 1.0


def random_rotation(rng: np.random.Generator, d: int) -> np.ndarray:
    if d == 2:
        theta = rng.uniform(-np.pi, np.pi)
        c, s = np.cos(theta), np.sin(theta)
        return np.array([[c, -s], [s, c]])
    # a normalized Gaussian quaternion is uniform on SO(3)
    return Rotation.from_quat(rng.standard_normal(4)).as_matrix()


def rotation_noise(rng: np.random.Generator, d: int, sigma: float) -> np.ndarray:
    if sigma == 0:
        return np.eye(d)
    if d == 2:
        theta = sigma * rng.standard_normal()
        c, s = np.cos(theta), np.sin(theta)
        return np.array([[c, -s], [s, c]])
    return Rotation.from_rotvec(sigma * rng.standard_normal(3)).as_matrix()


def _relative_pose(
    rng: np.random.Generator, noise: NoiseModel, R_i: np.ndarray, t_i: np.ndarray, R_j: np.ndarray, t_j: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    d = len(t_i)
    R_ij = R_i.T @ R_j @ rotation_noise(rng, d, noise.rot_sigma)
    t_ij = R_i.T @ (t_j - t_i) + noise.trans_sigma * rng.standard_normal(d)
    return R_ij, t_ij


def _serpentine(rows: int, cols: int, layers: int) -> list[tuple[int, int, int]]:
    path = []
    for layer in range(layers):
        row_order = range(rows) if layer % 2 == 0 else reversed(range(rows))
        for n, r in enumerate(row_order):
            col_order = range(cols) if (n + layer * rows) % 2 == 0 else reversed(range(cols))
            path.extend((c, r, layer) for c in col_order)
    return path


def generate_grid_pgo(
    rows: int,
    cols: int,
    d: int = 2,
    noise: NoiseModel = NoiseModel(),
    loop_prob: float = 0.1,
    seed: int = 0,
    layers: int = 1,
) -> Dataset:
    """Poses on a rows×cols(×layers) grid, odometry along a serpentine path, random loop closures between grid neighbours."""
    if rows <= 0 or cols <= 0 or layers <= 0:
        raise ValueError(f"grid dimensions must be positive, got {rows}x{cols}x{layers}")
    if d not in (2, 3):
        raise ValueError(f"d must be 2 or 3, got {d}")
    if layers > 1 and d != 3:
        raise ValueError("layered grids need d=3")
    if not 0 <= loop_prob <= 1:
        raise ValueError(f"loop_prob must lie in [0, 1], got {loop_prob}")

    rng = np.random.default_rng(seed)
    path = _serpentine(rows, cols, layers)
    index = {cell: k for k, cell in enumerate(path)}
    name = f"grid{rows}x{cols}" + (f"x{layers}" if layers > 1 else "") + f"-d{d}-s{seed}"
    builder = DatasetBuilder(d, name)

    R = [random_rotation(rng, d) for _ in path]
    t = [np.array(cell[:d], dtype=float) for cell in path]
    for k in range(len(path)):
        builder.add_pose(k, R[k], t[k])

    edges = [(k, k + 1) for k in range(len(path) - 1)]
    for k, (c, r, layer) in enumerate(path):
        for neighbour in ((c + 1, r, layer), (c, r + 1, layer), (c, r, layer + 1)):
            m = index.get(neighbour)
            if m is None or abs(m - k) == 1:
                continue
            if rng.random() < loop_prob:
                edges.append((min(k, m), max(k, m)))

    for i, j in edges:
        R_ij, t_ij = _relative_pose(rng, noise, R[i], t[i], R[j], t[j])
        builder.add_rel_pose(i, j, R_ij, t_ij, noise.kappa, noise.tau)
    logger.debug(f"{name}: {len(path) - 1} odometry edges, {len(edges) - len(path) + 1} loop closures")
    return builder.build()


def generate_bipartite_sfm(
    n_frames: int,
    n_points: int,
    obs_per_point: int,
    noise: NoiseModel = NoiseModel(),
    seed: int = 0,
    d: int = 3,
) -> Dataset:
    """Frames with odometry between consecutive frames; landmarks seen from `obs_per_point` distinct frames each."""
    if n_frames <= 0 or n_points < 0 or obs_per_point <= 0:
        raise ValueError(f"invalid SfM sizes: frames={n_frames} points={n_points} obs={obs_per_point}")
    if obs_per_point > n_frames:
        raise ValueError(f"obs_per_point ({obs_per_point}) exceeds n_frames ({n_frames})")
    if d not in (2, 3):
        raise ValueError(f"d must be 2 or 3, got {d}")

    rng = np.random.default_rng(seed)
    builder = DatasetBuilder(d, f"sfm{n_frames}x{n_points}-o{obs_per_point}-d{d}-s{seed}")

    R = [random_rotation(rng, d) for _ in range(n_frames)]
    t = [np.eye(d)[0] * k + 0.1 * rng.standard_normal(d) for k in range(n_frames)]
    for k in range(n_frames):
        builder.add_pose(k, R[k], t[k])
    low = np.full(d, -3.0)
    low[0] = -1.0
    high = np.full(d, 3.0)
    high[0] = float(n_frames)
    landmarks = rng.uniform(low, high, size=(n_points, d))
    for p in range(n_points):
        builder.add_point(n_frames + p, landmarks[p])

    for k in range(n_frames - 1):
        R_ij, t_ij = _relative_pose(rng, noise, R[k], t[k], R[k + 1], t[k + 1])
        builder.add_rel_pose(k, k + 1, R_ij, t_ij, noise.kappa, noise.tau)
    for p in range(n_points):
        for f in np.sort(rng.choice(n_frames, size=obs_per_point, replace=False)):
            f = int(f)
            t_fp = R[f].T @ (landmarks[p] - t[f]) + noise.trans_sigma * rng.standard_normal(d)
            builder.add_rel_translation(f, n_frames + p, t_fp, noise.tau)
    return builder.build()


def convert_to_snl(dataset: Dataset) -> Dataset:
    """Poses become points; every translation becomes a range with dist ‖t̃‖ and precision τ; rotations are dropped."""
    layout = dataset.layout
    builder = DatasetBuilder(dataset.d, f"{dataset.name}-snl")
    for block in layout.blocks_of(BlockKind.POINT):
        parsed = vertex_of(block.id)
        if parsed is None:
            raise ValueError(f"block id {block.id!r} does not follow the vertex naming convention")
        value = None if dataset.ground_truth is None else dataset.ground_truth[block.start]
        builder.add_point(parsed[1], value)

    def vertex(block_id: str) -> int:
        return vertex_of(block_id)[1]

    for m in dataset.measurements:
        match m:
            case RelTranslation():
                builder.add_range(vertex(m.i), vertex(m.j), float(np.linalg.norm(m.t_meas)), m.tau)
            case Range():
                builder.add_range(vertex(m.i), vertex(m.j), m.dist, m.rho)
    return builder.build()
