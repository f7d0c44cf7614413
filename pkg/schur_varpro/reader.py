import io
import re
from collections import Counter
from logging import getLogger
from pathlib import Path
from typing import Any, NoReturn, TextIO

import numpy as np
import parse
from scipy.spatial.transform import Rotation

from . import templates
from .dataset import Dataset, DatasetBuilder
from .errors import AssemblyError, G2oParseError

logger = getLogger(__name__)

QUATERNION_TOL = 1e-3
ISOTROPY_RTOL = 1e-9

_parsers = {tag: parse.compile(template) for tag, (template, _, _) in templates.RECORDS.items()}
_field_re = re.compile(r"\{(\w+)(?::(\w))?\}")


def load(filename: str | Path) -> Dataset:
    """Load a dataset from a g2o file"""
    path = Path(filename)
    with open(path, "r", encoding="utf-8") as f:
        return Reader(f, str(path), name=path.stem).parse()


def loads(text: str, name: str = "dataset") -> Dataset:
    return Reader(io.StringIO(text), "<string>", name=name).parse()


def parse_g2o(stream: TextIO, filename: str = "<stream>") -> Dataset:
    return Reader(stream, filename, name=Path(filename).stem or "dataset").parse()


def rotation_2d(theta: float) -> np.ndarray:
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s], [s, c]])


def information_matrix(values: list[float], size: int) -> np.ndarray:
    """Symmetric matrix from its row-major upper triangle."""
    info = np.zeros((size, size))
    info[np.triu_indices(size)] = values
    return info + np.triu(info, 1).T


class Reader:

    def __init__(self, fio: TextIO, filename: str = "", name: str = "dataset", d: int | None = None) -> None:
        self.filename = filename
        self.file = fio
        self.name = name
        self.line = 0
        self.d = d
        self.skipped: Counter[str] = Counter()
        self.anisotropic = 0

    def parse_error(self, message: str, token: str | None = None) -> NoReturn:
        raise G2oParseError(self.filename, self.line, token, message)

    def parse(self) -> Dataset:
        records = self.readRecords()
        if self.d is None:
            self.parse_error("cannot infer the dimension: no 2D or 3D record found")
        builder = DatasetBuilder(self.d, self.name)
        for line, tag, fields, info in records:
            self.line = line
            try:
                self.applyRecord(builder, tag, fields, info)
            except AssemblyError as e:
                self.parse_error(str(e))
        for tag, count in self.skipped.items():
            logger.warning(f"{self.filename}: skipped {count} {tag} record(s)")
        if self.anisotropic:
            logger.warning(f"{self.filename}: {self.anisotropic} anisotropic information matrices reduced to isotropic concentrations")
        return builder.build()

    def readRecords(self) -> list[tuple[int, str, dict[str, Any], list[float]]]:
        records = []
        for raw in self.file:
            self.line += 1
            text = " ".join(raw.split())
            if not text or text.startswith("#"):
                continue
            tag = text.split(" ", 1)[0]
            if tag not in templates.RECORDS:
                if tag not in self.skipped:
                    logger.warning(f"{self.filename}:{self.line}: skipping unknown record type {tag}")
                self.skipped[tag] += 1
                continue
            template, dim, info_size = templates.RECORDS[tag]
            result = _parsers[tag].parse(text)
            if result is None:
                self.parse_error(f"malformed {tag} record", self.badToken(template, text))
            fields = dict(result.named)
            info = self.readInfo(fields.pop("info", ""), info_size)
            if dim is not None:
                if self.d is None:
                    self.d = dim
                elif self.d != dim:
                    self.parse_error(f"{dim}D record in a {self.d}D file", tag)
            logger.debug(f"  [{tag} @ line {self.line}] {fields}")
            records.append((self.line, tag, fields, info))
        return records

    def readInfo(self, text: str, size: int) -> list[float]:
        tokens = text.split()
        expected = size * (size + 1) // 2
        if len(tokens) != expected:
            self.parse_error(f"expected {expected} information entries, found {len(tokens)}", tokens[expected] if len(tokens) > expected else None)
        values = []
        for tok in tokens:
            try:
                values.append(float(tok))
            except ValueError:
                self.parse_error("information entry is not a number", tok)
        return values

    def badToken(self, template: str, text: str) -> str | None:
        tokens = text.split(" ")[1:]
        for k, (name, kind) in enumerate(_field_re.findall(template)):
            if name == "info":
                return None
            if k >= len(tokens):
                return None
            try:
                int(tokens[k]) if kind == "d" else float(tokens[k])
            except ValueError:
                return tokens[k]
        return None

    def concentrations(self, info: np.ndarray, translation: slice, rotation: slice | None) -> tuple[float, float | None]:
        diag = np.diag(info)
        tau = float(np.mean(diag[translation]))
        kappa = float(np.mean(diag[rotation])) if rotation is not None else None
        if tau <= 0 or (kappa is not None and kappa <= 0):
            self.parse_error("information matrix has a nonpositive diagonal")
        offdiag = info - np.diag(diag)
        blocks = [diag[translation]] + ([diag[rotation]] if rotation is not None else [])
        if np.any(offdiag != 0) or any(not np.allclose(b, b[0], rtol=ISOTROPY_RTOL, atol=0) for b in blocks):
            self.anisotropic += 1
        return tau, kappa

    def quaternion(self, fields: dict[str, Any]) -> np.ndarray:
        q = np.array([fields["qx"], fields["qy"], fields["qz"], fields["qw"]], dtype=float)
        norm = np.linalg.norm(q)
        if abs(norm - 1.0) > QUATERNION_TOL:
            self.parse_error(f"quaternion norm {norm:.6f} is not 1", str(fields["qw"]))
        return Rotation.from_quat(q).as_matrix()

    def applyRecord(self, builder: DatasetBuilder, tag: str, f: dict[str, Any], info: list[float]) -> None:
        match tag:
            case "VERTEX_SE2":
                builder.add_pose(f["id"], rotation_2d(f["theta"]), [f["x"], f["y"]])
            case "VERTEX_SE3:QUAT":
                builder.add_pose(f["id"], self.quaternion(f), [f["x"], f["y"], f["z"]])
            case "VERTEX_XY":
                builder.add_point(f["id"], [f["x"], f["y"]])
            case "VERTEX_TRACKXYZ":
                builder.add_point(f["id"], [f["x"], f["y"], f["z"]])
            case "EDGE_SE2":
                tau, kappa = self.concentrations(information_matrix(info, 3), slice(0, 2), slice(2, 3))
                builder.add_rel_pose(f["i"], f["j"], rotation_2d(f["dtheta"]), [f["dx"], f["dy"]], kappa, tau)
            case "EDGE_SE3:QUAT":
                tau, kappa = self.concentrations(information_matrix(info, 6), slice(0, 3), slice(3, 6))
                builder.add_rel_pose(f["i"], f["j"], self.quaternion(f), [f["dx"], f["dy"], f["dz"]], kappa, tau)
            case "EDGE_SE2_XY":
                tau, _ = self.concentrations(information_matrix(info, 2), slice(0, 2), None)
                builder.add_rel_translation(f["i"], f["j"], [f["dx"], f["dy"]], tau)
            case "EDGE_SE3_TRACKXYZ":
                tau, _ = self.concentrations(information_matrix(info, 3), slice(0, 3), None)
                builder.add_rel_translation(f["i"], f["j"], [f["dx"], f["dy"], f["dz"]], tau)
            case "EDGE_RANGE":
                if f["dist"] < 0:
                    self.parse_error("negative range", str(f["dist"]))
                if f["precision"] <= 0:
                    self.parse_error("nonpositive range precision", str(f["precision"]))
                builder.add_range(f["i"], f["j"], f["dist"], f["precision"])
            case _:
                self.parse_error(f"unhandled record type {tag}", tag)
