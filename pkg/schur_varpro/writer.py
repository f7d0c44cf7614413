import io
from collections import defaultdict, deque
from logging import getLogger
from pathlib import Path
from typing import TextIO

import attrs
import numpy as np
from attrs import define
from scipy.spatial.transform import Rotation

from .dataset import Dataset, bearing_id, position_id, rotation_id, vertex_of
from .enums import BlockKind
from .errors import WriteError
from .model import Range, RelRotation, RelTranslation

logger = getLogger(__name__)


def fmt(x: float) -> str:
    # shortest text that reads back to the same double
    return repr(float(x))


def write_g2o(dataset: Dataset, filename: str | Path) -> None:
    with open(filename, "w", encoding="utf-8", newline="\n") as f:
        Writer(dataset=dataset, output_file=f).writeDataset()


def dumps(dataset: Dataset) -> str:
    out = io.StringIO()
    Writer(dataset=dataset, output_file=out).writeDataset()
    return out.getvalue()


@define
class Writer:
    dataset: Dataset
    output_file: TextIO
    _nl: str = "\n"
    _rotation_for: dict[int, int] = attrs.field(factory=dict)  # measurement index of a RelTranslation -> its RelRotation

    @property
    def d(self) -> int:
        return self.dataset.d

    def write(self, text: str) -> None:
        self.output_file.write(text)

    def writeRecord(self, tag: str, *fields: int | float) -> None:
        parts = [tag] + [str(x) if isinstance(x, (int, np.integer)) else fmt(x) for x in fields]
        self.write(" ".join(parts) + self._nl)

    def writeDataset(self) -> None:
        self.pairEdges()
        self.writeVertices()
        self.writeEdges()

    def vertexIndex(self, block_id: str, kind: BlockKind) -> int:
        parsed = vertex_of(block_id)
        if parsed is None or parsed[0] is not kind:
            raise WriteError(f"block id {block_id!r} does not follow the {kind.name} naming convention")
        return parsed[1]

    def pairEdges(self) -> None:
        """Match each RelTranslation with the earliest RelRotation between the same two poses."""
        rotations: dict[tuple[str, str], deque[int]] = defaultdict(deque)
        for k, m in enumerate(self.dataset.measurements):
            if isinstance(m, RelRotation):
                rotations[(m.i, m.j)].append(k)
        layout = self.dataset.layout
        for k, m in enumerate(self.dataset.measurements):
            if not isinstance(m, RelTranslation):
                continue
            i = self.vertexIndex(m.i, BlockKind.POINT)
            j = self.vertexIndex(m.j, BlockKind.POINT)
            if m.frame != rotation_id(i):
                raise WriteError(f"measurement {k}: translation frame {m.frame!r} is not the rotation of vertex {i}")
            key = (rotation_id(i), rotation_id(j))
            if rotation_id(j) in layout and rotations[key]:
                self._rotation_for[k] = rotations[key].popleft()
        leftover = [k for queue in rotations.values() for k in queue]
        if leftover:
            raise WriteError(f"measurement {min(leftover)}: relative rotation without a matching relative translation")

    def writeVertices(self) -> None:
        layout = self.dataset.layout
        X = self.dataset.ground_truth
        if X is None:
            logger.warning(f"{self.dataset.name}: no ground truth, writing identity poses and zero points")
            X = np.zeros((layout.n, self.d))
            for block in layout.blocks_of(BlockKind.ROTATION):
                X[block.rows] = np.eye(self.d)
        vertices = sorted({self.vertexIndex(b.id, BlockKind.POINT) for b in layout.blocks_of(BlockKind.POINT)})
        for block in layout.blocks_of(BlockKind.ROTATION):
            k = self.vertexIndex(block.id, BlockKind.ROTATION)
            if position_id(k) not in layout:
                raise WriteError(f"rotation {block.id!r} has no position {position_id(k)!r}")
        for k in vertices:
            t = X[layout.block(position_id(k)).start]
            if rotation_id(k) in layout:
                R = X[layout.block(rotation_id(k)).rows].T
                if self.d == 2:
                    self.writeRecord("VERTEX_SE2", k, t[0], t[1], np.arctan2(R[1, 0], R[0, 0]))
                else:
                    self.writeRecord("VERTEX_SE3:QUAT", k, *t, *Rotation.from_matrix(R).as_quat())
            elif self.d == 2:
                self.writeRecord("VERTEX_XY", k, *t)
            else:
                self.writeRecord("VERTEX_TRACKXYZ", k, *t)
        logger.debug(f"wrote {len(vertices)} vertices")

    def writeEdges(self) -> None:
        measurements = self.dataset.measurements
        n_ranges = 0
        for k, m in enumerate(measurements):
            match m:
                case RelTranslation():
                    i = self.vertexIndex(m.i, BlockKind.POINT)
                    j = self.vertexIndex(m.j, BlockKind.POINT)
                    if k in self._rotation_for:
                        self.writePoseEdge(i, j, m, measurements[self._rotation_for[k]])
                    elif self.d == 2:
                        self.writeRecord("EDGE_SE2_XY", i, j, *m.t_meas, *self.infoEntries([m.tau] * 2))
                    else:
                        self.writeRecord("EDGE_SE3_TRACKXYZ", i, j, *m.t_meas, *self.infoEntries([m.tau] * 3))
                case RelRotation():
                    pass  # written with its translation
                case Range():
                    if m.bearing != bearing_id(n_ranges):
                        raise WriteError(f"measurement {k}: range bearing {m.bearing!r} should be {bearing_id(n_ranges)!r}")
                    n_ranges += 1
                    i = self.vertexIndex(m.i, BlockKind.POINT)
                    j = self.vertexIndex(m.j, BlockKind.POINT)
                    self.writeRecord("EDGE_RANGE", i, j, m.dist, m.rho)

    def writePoseEdge(self, i: int, j: int, t: RelTranslation, r: RelRotation) -> None:
        if self.d == 2:
            theta = np.arctan2(r.R_meas[1, 0], r.R_meas[0, 0])
            self.writeRecord("EDGE_SE2", i, j, *t.t_meas, theta, *self.infoEntries([t.tau] * 2 + [r.kappa]))
        else:
            q = Rotation.from_matrix(r.R_meas).as_quat()
            self.writeRecord("EDGE_SE3:QUAT", i, j, *t.t_meas, *q, *self.infoEntries([t.tau] * 3 + [r.kappa] * 3))

    @staticmethod
    def infoEntries(diagonal: list[float]) -> list[float]:
        """Row-major upper triangle of diag(diagonal)."""
        info = np.diag(np.asarray(diagonal, dtype=float))
        return info[np.triu_indices(len(diagonal))].tolist()
