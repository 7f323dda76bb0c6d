"""Rate and distortion metrics for point-cloud codecs.

Distances are Euclidean; nearest-neighbour queries are exact (no
approximation) and go through :class:`SpatialIndex`.
"""

from __future__ import annotations

import enum
import math
from dataclasses import asdict, dataclass, fields

import numpy as np
from scipy.spatial import cKDTree

from .errors import DivisionDomainError, EmptyInputError, InsufficientPointsError
from .pointcloud import PointCloud

DEFAULT_K = 16


def _xyz(cloud: PointCloud | np.ndarray) -> np.ndarray:
    if isinstance(cloud, PointCloud):
        return cloud.xyz
    return np.asarray(cloud, dtype=np.float64).reshape(-1, 3)


class SpatialIndex:
    """Exact nearest-neighbour queries over a fixed point set."""

    def __init__(self, cloud: PointCloud | np.ndarray) -> None:
        self.points = _xyz(cloud)
        if self.points.shape[0] == 0:
            raise EmptyInputError("cannot index an empty cloud")
        self._tree = cKDTree(self.points)

    def __len__(self) -> int:
        return self.points.shape[0]

    def nearest(self, query: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Index of and squared distance to the nearest indexed point."""
        query = np.asarray(query, dtype=np.float64).reshape(-1, 3)
        _, idx = self._tree.query(query, k=1)
        d2 = ((query - self.points[idx]) ** 2).sum(axis=1)
        return idx, d2

    def knn(self, query: np.ndarray, k: int) -> np.ndarray:
        query = np.asarray(query, dtype=np.float64).reshape(-1, 3)
        _, idx = self._tree.query(query, k=k)
        return idx.reshape(query.shape[0], k)


@dataclass
class NormalField:
    normals: np.ndarray
    degenerate: np.ndarray

    def __len__(self) -> int:
        return self.normals.shape[0]


class PsnrMarker(enum.Enum):
    IDENTICAL = "identical"

    def __str__(self) -> str:
        return self.value


IDENTICAL = PsnrMarker.IDENTICAL


def _nonempty(*clouds: np.ndarray) -> None:
    for c in clouds:
        if c.shape[0] == 0:
            raise EmptyInputError("metric undefined for an empty cloud")


def directional_sq_distances(P, Phat) -> np.ndarray:
    """Squared distance from every point of ``P`` to its nearest point in ``Phat``."""
    p, ph = _xyz(P), _xyz(Phat)
    _nonempty(p, ph)
    return SpatialIndex(ph).nearest(p)[1]


def chamfer_sym(P, Phat) -> float:
    """Symmetric point-to-point Chamfer distance as a sum of squared NN distances."""
    return float(directional_sq_distances(P, Phat).sum() + directional_sq_distances(Phat, P).sum())


def chamfer_mean(P, Phat) -> float:
    """Per-point Chamfer: the two directional sums each divided by their cloud size."""
    return float(directional_sq_distances(P, Phat).mean() + directional_sq_distances(Phat, P).mean())


def intrinsic_peak(P) -> float:
    """Largest distance from any point to its nearest other point."""
    p = _xyz(P)
    if p.shape[0] < 2:
        raise InsufficientPointsError("intrinsic resolution needs at least two points")
    _, idx = cKDTree(p).query(p, k=2)
    # column 0 may be the point itself or an exact duplicate; either way
    # the larger of the two distances is the nearest *other* point
    d2 = np.maximum(((p - p[idx[:, 0]]) ** 2).sum(axis=1), ((p - p[idx[:, 1]]) ** 2).sum(axis=1))
    return float(np.sqrt(d2.max()))


def estimate_normals(P, k: int = DEFAULT_K, chunk: int = 32768) -> NormalField:
    """Unit normals from a PCA plane fit over each point's ``k`` nearest neighbours.

    The neighbourhood includes the point itself.  Normal sign is arbitrary.
    Points whose neighbourhood spans fewer than two dimensions are flagged as
    degenerate; their normal is still a unit vector orthogonal to the
    dominant direction.
    """
    p = _xyz(P)
    if k < 3:
        raise InsufficientPointsError("normal estimation needs k >= 3")
    if p.shape[0] < k:
        raise InsufficientPointsError(f"{p.shape[0]} points, need at least k={k}")
    index = SpatialIndex(p)
    normals = np.empty_like(p)
    degenerate = np.empty(p.shape[0], dtype=bool)
    for s in range(0, p.shape[0], chunk):
        q = p[s:s + chunk]
        nb = p[index.knn(q, k)]
        nb = nb - nb.mean(axis=1, keepdims=True)
        cov = np.einsum("nki,nkj->nij", nb, nb) / k
        w, v = np.linalg.eigh(cov)
        normals[s:s + chunk] = v[:, :, 0]
        scale = np.maximum(w[:, 2], np.finfo(float).tiny)
        degenerate[s:s + chunk] = w[:, 1] <= 1e-10 * scale
    normals /= np.linalg.norm(normals, axis=1, keepdims=True)
    return NormalField(normals, degenerate)


def mse_point_to_plane(P, Phat, normals: NormalField | np.ndarray) -> float:
    """Mean squared projection of ``p - q`` on ``n_q``, ``q`` the NN of ``p`` in ``Phat``."""
    p, ph = _xyz(P), _xyz(Phat)
    _nonempty(p, ph)
    n = normals.normals if isinstance(normals, NormalField) else np.asarray(normals, float)
    if n.shape != ph.shape:
        raise EmptyInputError("normals must be indexed by the second cloud")
    idx, _ = SpatialIndex(ph).nearest(p)
    proj = ((p - ph[idx]) * n[idx]).sum(axis=1)
    return float(np.mean(proj ** 2))


def psnr_from(peak: float, mse: float) -> float:
    if mse == 0:
        return math.inf
    if peak == 0:
        return -math.inf
    return 10.0 * math.log10(peak * peak / mse)


def psnr_directional(P, Phat, normals_hat: NormalField | None = None,
                     k: int = DEFAULT_K) -> float:
    """Point-to-plane PSNR of ``Phat`` measured from ``P``, peak from ``P``."""
    if normals_hat is None:
        normals_hat = estimate_normals(Phat, min(k, len(_xyz(Phat))))
    return psnr_from(intrinsic_peak(P), mse_point_to_plane(P, Phat, normals_hat))


def psnr_pair(P, Phat, k: int = DEFAULT_K) -> tuple[float, float]:
    """Both directional PSNRs ``(P -> Phat, Phat -> P)``."""
    p, ph = _xyz(P), _xyz(Phat)
    if p.shape[0] < 2 or ph.shape[0] < 2:
        raise InsufficientPointsError("PSNR needs at least two points per cloud")
    fwd = psnr_directional(p, ph, estimate_normals(ph, min(k, ph.shape[0])))
    bwd = psnr_directional(ph, p, estimate_normals(p, min(k, p.shape[0])))
    return fwd, bwd


def psnr_sym(P, Phat, k: int = DEFAULT_K) -> float | PsnrMarker:
    """Symmetric PSNR, the smaller of the two directions; :data:`IDENTICAL`
    when both directional errors are zero."""
    fwd, bwd = psnr_pair(P, Phat, k)
    if math.isinf(fwd) and math.isinf(bwd) and fwd > 0 and bwd > 0:
        return IDENTICAL
    return min(fwd, bwd)


def bpp(compressed_bytes: int, compressed_point_count: int) -> float:
    if compressed_point_count <= 0:
        raise DivisionDomainError("bits per point undefined for zero points")
    return 8.0 * compressed_bytes / compressed_point_count


def compression_ratio(raw_bytes: int, compressed_bytes: int) -> float:
    if compressed_bytes <= 0:
        raise DivisionDomainError("compression ratio undefined for an empty payload")
    return raw_bytes / compressed_bytes


def required_bitrate(frame_bytes: int, frame_interval: float) -> float:
    """Megabits per second needed to ship one frame per interval."""
    if frame_interval <= 0:
        raise DivisionDomainError("frame interval must be positive")
    return 8.0 * frame_bytes / (frame_interval * 1e6)


def chamfer_bound(step: np.ndarray) -> float:
    """Per-point Chamfer bound for a lattice with cell edges ``step``."""
    return 3.0 * (float(np.max(step)) / 2.0) ** 2


@dataclass
class MetricsReport:
    frame: str = ""
    codec: str = ""
    setting: str = ""
    compression_level: str = ""
    profile: str = ""
    reference: str = ""
    raw_points: int = 0
    raw_bytes: int = 0
    input_points: int = 0
    compressed_points: int = 0
    compressed_bytes: int = 0
    bpp: float = math.nan
    bpp_raw: float = math.nan
    ratio: float = math.nan
    chamfer: float = math.nan
    chamfer_per_point: float = math.nan
    psnr: float | PsnrMarker = math.nan
    encode_ms: float = math.nan
    encode_p95_ms: float = math.nan
    decode_ms: float = math.nan
    decode_p95_ms: float = math.nan
    filter_ms: float = math.nan
    error: str = ""

    @classmethod
    def columns(cls) -> list[str]:
        return [f.name for f in fields(cls)]

    def row(self) -> list[str]:
        out = []
        for v in asdict(self).values():
            if isinstance(v, PsnrMarker):
                out.append(str(v))
            elif isinstance(v, float):
                out.append("" if math.isnan(v) else ("inf" if math.isinf(v) else f"{v:.10g}"))
            else:
                out.append(str(v))
        return out
