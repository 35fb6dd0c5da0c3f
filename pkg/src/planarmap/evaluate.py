"""Quantitative evaluation: mesh sampling, nearest-neighbor distance
statistics, and precision / recall / F-score at a fixed threshold."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .errors import EmptyMesh


@dataclass
class EvalReport:
    mean_dist: float
    std_dist: float
    precision: float
    recall: float
    f_score: float
    threshold: float
    n_recon_pts: int
    n_gt_pts: int
    file_size_bytes: int = 0
    face_count: int = 0
    vertex_count: int = 0

    CSV_HEADER = ("mean_dist,std_dist,precision,recall,f_score,threshold,"
                  "n_recon_pts,n_gt_pts,file_size_bytes,face_count,vertex_count")

    def to_csv_row(self) -> str:
        return (f"{self.mean_dist:.6f},{self.std_dist:.6f},"
                f"{self.precision:.6f},{self.recall:.6f},{self.f_score:.6f},"
                f"{self.threshold:.6f},{self.n_recon_pts},{self.n_gt_pts},"
                f"{self.file_size_bytes},{self.face_count},{self.vertex_count}")

    def to_text(self) -> str:
        lines = []
        for name in ("mean_dist", "std_dist", "precision", "recall",
                     "f_score", "threshold", "n_recon_pts", "n_gt_pts",
                     "file_size_bytes", "face_count", "vertex_count"):
            lines.append(f"{name}={getattr(self, name)}")
        return "\n".join(lines) + "\n"


def sample_mesh(vertices: np.ndarray, faces: np.ndarray, n: int,
                seed: int = 0) -> np.ndarray:
    """n points drawn uniformly by area over the mesh surface."""
    faces = np.asarray(faces, dtype=np.int64).reshape(-1, 3)
    if len(faces) == 0:
        raise EmptyMesh("mesh has no faces")
    v = np.asarray(vertices, dtype=np.float64)
    a = v[faces[:, 0]]
    b = v[faces[:, 1]]
    c = v[faces[:, 2]]
    areas = 0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=1)
    total = areas.sum()
    if total <= 0:
        raise EmptyMesh("mesh has zero total area")
    rng = np.random.default_rng(seed)
    idx = rng.choice(len(faces), size=n, p=areas / total)
    r1 = np.sqrt(rng.random(n))
    r2 = rng.random(n)
    return ((1 - r1)[:, None] * a[idx]
            + (r1 * (1 - r2))[:, None] * b[idx]
            + (r1 * r2)[:, None] * c[idx])


def nn_distances(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Distance from each point of a to its nearest neighbor in b."""
    if len(a) == 0 or len(b) == 0:
        raise ValueError("empty point set")
    tree = cKDTree(np.asarray(b, float))
    d, _ = tree.query(np.asarray(a, float), k=1)
    return d


def distance_stats(a: np.ndarray, b: np.ndarray) -> tuple[float, float]:
    """Mean and population std of nearest-neighbor distances from a to b."""
    d = nn_distances(a, b)
    return float(d.mean()), float(d.std())


def precision_recall_f(recon: np.ndarray, gt: np.ndarray,
                       tau: float = 0.1) -> tuple[float, float, float]:
    """Fraction of recon within tau of gt, fraction of gt within tau of
    recon, and their harmonic mean."""
    d_rg = nn_distances(recon, gt)
    d_gr = nn_distances(gt, recon)
    p = float(np.mean(d_rg <= tau))
    r = float(np.mean(d_gr <= tau))
    f = 2.0 * p * r / (p + r) if (p + r) > 0 else 0.0
    return p, r, f


def evaluate_points(recon: np.ndarray, gt: np.ndarray, tau: float = 0.1,
                    file_size_bytes: int = 0, face_count: int = 0,
                    vertex_count: int = 0) -> EvalReport:
    mean, std = distance_stats(recon, gt)
    p, r, f = precision_recall_f(recon, gt, tau)
    return EvalReport(mean, std, p, r, f, tau, len(recon), len(gt),
                      file_size_bytes, face_count, vertex_count)
