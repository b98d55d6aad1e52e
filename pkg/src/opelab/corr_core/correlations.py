"""Point configurations and pointwise correlation systems."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Protocol, Sequence, runtime_checkable

import numpy as np

from .. import kernels
from ..errors import DiagonalError, UnknownLabel
from ..free_field import kappa as kappa_value
from .structure import IDENTITY_NAME, Label, OpeStructure, free_field_structure


@dataclass(frozen=True, eq=False)
class PointConfiguration:
    """Ordered tuple of pairwise-distinct points of R^d."""

    points: np.ndarray

    def __post_init__(self) -> None:
        pts = np.array(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        if pts.ndim != 2:
            raise ValueError("points must form an (n, d) array")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)
        if len(pts) > 1 and np.min(_pairwise(pts)[~np.eye(len(pts), dtype=bool)]) == 0.0:
            raise DiagonalError("configuration has coincident points")

    @classmethod
    def of(cls, points) -> "PointConfiguration":
        return points if isinstance(points, PointConfiguration) else cls(np.asarray(points, dtype=float))

    def __len__(self) -> int:
        return len(self.points)

    @property
    def d(self) -> int:
        return self.points.shape[1]

    def distances(self) -> np.ndarray:
        return _pairwise(self.points)

    def nn_distances(self) -> np.ndarray:
        """min_{j != i} |x_i - x_j| for each i."""
        dist = self.distances()
        np.fill_diagonal(dist, np.inf)
        return dist.min(axis=1)

    def permuted(self, perm: Sequence[int]) -> "PointConfiguration":
        return PointConfiguration(self.points[list(perm)])

    def subset(self, idx: Sequence[int]) -> "PointConfiguration":
        return PointConfiguration(self.points[list(idx)])


def _pairwise(pts: np.ndarray) -> np.ndarray:
    diff = pts[:, None, :] - pts[None, :, :]
    return np.sqrt(np.sum(diff**2, axis=-1))


@runtime_checkable
class CorrelationSystem(Protocol):
    """Anything that evaluates <O_{A_1}(x_1) ... O_{A_n}(x_n)> off the diagonal.

    Implementations receive labels with the identity already removed.
    """

    structure: OpeStructure

    def evaluate(self, labels: Sequence[Label], config: PointConfiguration) -> float: ...


class FreeFieldCorrelations:
    """Pointwise correlations of Wick powers of the massless free field.

    Each matched pair of legs at points u, v contributes kappa |u - v|^{-2[phi]};
    legs on the same Wick vertex are never matched.
    """

    def __init__(
        self,
        d: int,
        dim_phi: float,
        kappa_mode: str = "oracle_calibrated",
        max_power: int = 4,
        kappa: float | None = None,
    ):
        if not 0 < dim_phi < d / 2:
            raise ValueError("free field needs 0 < [phi] < d/2")
        self.d = int(d)
        self.dim_phi = dim_phi
        self.kappa_mode = kappa_mode if kappa is None else "explicit"
        self.kappa = float(kappa) if kappa is not None else kappa_value(d, float(dim_phi), kappa_mode)
        self.max_power = int(max_power)
        self.structure = free_field_structure(self.d, dim_phi, self.kappa, max_power=self.max_power)

    def __repr__(self) -> str:
        return f"FreeFieldCorrelations(d={self.d}, dim_phi={self.dim_phi}, kappa={self.kappa!r}, max_power={self.max_power})"

    def power(self, label: Label) -> int:
        if label.wick_power is None or label.wick_power > self.max_power:
            raise UnknownLabel(f"label {label.name!r} is not a supported Wick power")
        self.structure.label(label)
        return label.wick_power

    def label(self, k: int) -> Label:
        if not 0 <= k <= self.max_power:
            raise UnknownLabel(f"Wick power {k} exceeds the supported maximum {self.max_power}")
        return self.structure.alphabet[k]

    def leg_matrix(self, powers: Sequence[int], config: PointConfiguration) -> np.ndarray:
        """Pair weights between legs, zero inside a vertex."""
        owner = np.repeat(np.arange(len(powers)), powers)
        pts = config.points[owner]
        dist = _pairwise(pts)
        same = owner[:, None] == owner[None, :]
        with np.errstate(divide="ignore"):
            w = self.kappa * np.where(same, 1.0, dist) ** (-2.0 * self.dim_phi)
        w[same] = 0.0
        return w

    def evaluate(self, labels: Sequence[Label], config: PointConfiguration) -> float:
        powers = [self.power(lab) for lab in labels]
        if sum(powers) % 2:
            return 0.0
        if not powers:
            return 1.0
        w = self.leg_matrix(powers, config)
        return float(kernels.hafnian_batch(w[None])[0])

    def evaluate_batch(self, labels: Sequence[Label], points: np.ndarray) -> np.ndarray:
        """Vectorized evaluation over configurations of shape (batch, n, d)."""
        powers = [self.power(lab) for lab in labels]
        points = np.asarray(points, dtype=float)
        if sum(powers) % 2:
            return np.zeros(points.shape[0])
        owner = np.repeat(np.arange(len(powers)), powers)
        pts = points[:, owner, :]
        diff = pts[:, :, None, :] - pts[:, None, :, :]
        dist = np.sqrt(np.sum(diff**2, axis=-1))
        same = owner[:, None] == owner[None, :]
        with np.errstate(divide="ignore"):
            w = self.kappa * np.where(same, 1.0, dist) ** (-2.0 * self.dim_phi)
        w[:, same] = 0.0
        return kernels.hafnian_batch(np.ascontiguousarray(w))


def _resolve(system: CorrelationSystem, labels: Sequence[Label | str]) -> list[Label]:
    out = []
    for lab in labels:
        out.append(system.structure.label(lab))
    return out


def strip_identity(labels: Sequence[Label], points: np.ndarray) -> tuple[list[Label], np.ndarray]:
    keep = [i for i, lab in enumerate(labels) if lab.name != IDENTITY_NAME]
    return [labels[i] for i in keep], np.asarray(points)[keep]


def as_points(config) -> np.ndarray:
    """(n, d) array from a configuration; a flat sequence means points on the line."""
    if isinstance(config, PointConfiguration):
        return config.points
    arr = np.asarray(config, dtype=float)
    if arr.ndim == 1:
        arr = arr[:, None]
    return arr


def eval_correlation(system: CorrelationSystem, labels: Sequence[Label | str], config) -> float:
    """<O_{A_1}(x_1) ... O_{A_n}(x_n)>.

    Identity insertions are dropped together with their points before the
    remaining points are checked for coincidences, which is the forgetful
    property. The empty correlation is 1.
    """
    labs = _resolve(system, labels)
    pts = as_points(config)
    if pts.shape[0] != len(labs):
        raise ValueError(f"{len(labs)} labels but {pts.shape[0]} points")
    kept, kept_pts = strip_identity(labs, pts)
    if not kept:
        return 1.0
    return float(system.evaluate(kept, PointConfiguration(kept_pts)))


def mixed_wick_correlation(system: FreeFieldCorrelations, labels: Sequence[Label | str | int], config) -> float:
    """Correlation of Wick powers; integers are read as powers of phi."""
    labs = [system.label(lab) if isinstance(lab, (int, np.integer)) else system.structure.label(lab) for lab in labels]
    for lab in labs:
        system.power(lab)
    return eval_correlation(system, labs, config)
