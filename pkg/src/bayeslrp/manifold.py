"""Synthetic data manifolds with closed-form tangent spaces.

A circle or torus is embedded in the first two or three ambient
coordinates; every other coordinate is zero on the manifold.  Gradients of
a network at manifold points split into tangent and normal parts, and the
normal parts can be averaged over a posterior ensemble to check whether
they cancel.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bayes import _samples
from .errors import GeometryError, ParameterError, ShapeError
from .nn import LabeledDataset, NetworkSpec, grad_logit_input
from .rng import substream

KINDS = {"circle": 1, "torus": 2}


@dataclass(frozen=True)
class ManifoldSpec:
    kind: str = "circle"
    ambient_dim: int = 10
    major_radius: float = 2.0
    minor_radius: float = 1.0
    frequency: int = 2

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ParameterError(f"unknown manifold kind {self.kind!r}")
        need = 2 if self.kind == "circle" else 3
        if self.ambient_dim < need:
            raise ParameterError(f"a {self.kind} needs ambient dimension >= {need}")
        if self.kind == "torus" and not 0 < self.minor_radius < self.major_radius:
            raise ParameterError("torus radii must satisfy 0 < minor < major")

    @property
    def intrinsic_dim(self) -> int:
        return KINDS[self.kind]

    def embed(self, coords) -> np.ndarray:
        """Map intrinsic angles of shape ``(n, intrinsic_dim)`` into R^d."""
        coords = np.atleast_2d(np.asarray(coords, dtype=np.float64))
        if coords.shape[-1] != self.intrinsic_dim:
            coords = coords.reshape(-1, self.intrinsic_dim)
        x = np.zeros((len(coords), self.ambient_dim))
        theta = coords[:, 0]
        if self.kind == "circle":
            x[:, 0] = np.cos(theta)
            x[:, 1] = np.sin(theta)
        else:
            phi = coords[:, 1]
            ring = self.major_radius + self.minor_radius * np.cos(phi)
            x[:, 0] = ring * np.cos(theta)
            x[:, 1] = ring * np.sin(theta)
            x[:, 2] = self.minor_radius * np.sin(phi)
        return x

    def chart(self, x, tol: float = 1e-9) -> np.ndarray:
        """Inverse of :meth:`embed`; raises for points off the manifold."""
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        if x.shape[-1] != self.ambient_dim:
            raise ShapeError(f"point dimension {x.shape[-1]} != ambient dimension {self.ambient_dim}")
        theta = np.arctan2(x[:, 1], x[:, 0])
        if self.kind == "circle":
            off = np.abs(np.hypot(x[:, 0], x[:, 1]) - 1.0)
            rest = x[:, 2:]
            coords = theta[:, None]
        else:
            rho = np.hypot(x[:, 0], x[:, 1]) - self.major_radius
            off = np.abs(np.hypot(rho, x[:, 2]) - self.minor_radius)
            rest = x[:, 3:]
            coords = np.stack([theta, np.arctan2(x[:, 2], rho)], axis=1)
        if rest.size:
            off = np.maximum(off, np.abs(rest).max(axis=1))
        if np.any(off > tol):
            raise GeometryError(f"point lies {off.max():.3g} off the {self.kind}")
        return coords

    def tangent_basis(self, x) -> np.ndarray:
        """Orthonormal tangent vectors, shape ``(n, intrinsic_dim, d)``."""
        coords = self.chart(x)
        n = len(coords)
        basis = np.zeros((n, self.intrinsic_dim, self.ambient_dim))
        theta = coords[:, 0]
        basis[:, 0, 0] = -np.sin(theta)
        basis[:, 0, 1] = np.cos(theta)
        if self.kind == "torus":
            phi = coords[:, 1]
            # d/dphi direction, already orthogonal to d/dtheta
            basis[:, 1, 0] = -np.sin(phi) * np.cos(theta)
            basis[:, 1, 1] = -np.sin(phi) * np.sin(theta)
            basis[:, 1, 2] = np.cos(phi)
        return basis

    def label(self, coords) -> np.ndarray:
        coords = np.atleast_2d(np.asarray(coords, dtype=np.float64))
        g = np.sin(self.frequency * coords[:, 0])
        if self.kind == "torus":
            g = g * np.cos(coords[:, 1])
        return (g > 0).astype(np.int64)


@dataclass
class GradientDecomposition:
    tangent: np.ndarray
    normal: np.ndarray


def make_manifold_dataset(mspec: ManifoldSpec, n: int, noise: float = 0.0, seed: int | None = 0,
                          grid: bool = False) -> LabeledDataset:
    """Points uniform in intrinsic angle, or an evenly spaced grid when ``grid``."""
    if n < 1:
        raise ParameterError("need at least one point")
    if noise:
        raise ParameterError("only noise-free manifold data is supported")
    if grid:
        if mspec.intrinsic_dim == 1:
            coords = (2 * np.pi * np.arange(n) / n)[:, None]
        else:
            m = int(round(np.sqrt(n)))
            if m * m != n:
                raise ParameterError("torus grid needs a square point count")
            a = 2 * np.pi * np.arange(m) / m
            coords = np.stack(np.meshgrid(a, a, indexing="ij"), axis=-1).reshape(-1, 2)
    else:
        rng = substream(0 if seed is None else seed, "manifold")
        coords = rng.uniform(0.0, 2 * np.pi, size=(n, mspec.intrinsic_dim))
    return LabeledDataset(mspec.embed(coords), mspec.label(coords), class_count=2)


def _project(mspec, x, grad):
    basis = mspec.tangent_basis(x)
    grad = np.atleast_2d(np.asarray(grad, dtype=np.float64))
    if grad.shape != (len(basis), mspec.ambient_dim):
        raise ShapeError("gradient does not match the point batch")
    tangent = np.einsum("nk,nkd->nd", np.einsum("nkd,nd->nk", basis, grad), basis)
    return tangent, grad - tangent


def tangent_normal_decompose(mspec: ManifoldSpec, x, grad) -> GradientDecomposition:
    """Split ``grad`` at manifold point ``x`` into tangent and normal parts."""
    single = np.asarray(x).ndim == 1
    tangent, normal = _project(mspec, x, grad)
    if single:
        tangent, normal = tangent[0], normal[0]
    return GradientDecomposition(tangent, normal)


@dataclass
class ZeroAverageResult:
    ratio: float
    per_point: np.ndarray
    degenerate: np.ndarray


def zero_avg_statistic(spec: NetworkSpec, ensemble, mspec: ManifoldSpec, points, class_index: int
                       ) -> ZeroAverageResult:
    """Norm of the ensemble-mean normal gradient over the mean norm, per point.

    The gradient is that of logit ``class_index`` with respect to the input.
    Points where every sample has a zero normal gradient report 0 and are
    flagged as degenerate.
    """
    samples = _samples(ensemble)
    points = np.atleast_2d(np.asarray(points, dtype=np.float64))
    if len(points) == 0:
        raise ParameterError("need at least one evaluation point")
    mean_vec = np.zeros_like(points)
    mean_norm = np.zeros(len(points))
    for w in samples:
        g = grad_logit_input(spec, w, points, class_index)
        _, normal = _project(mspec, points, g)
        mean_vec += normal
        mean_norm += np.linalg.norm(normal, axis=1)
    mean_vec /= len(samples)
    mean_norm /= len(samples)
    degenerate = mean_norm == 0
    per_point = np.where(degenerate, 0.0, np.linalg.norm(mean_vec, axis=1) / np.where(degenerate, 1.0, mean_norm))
    per_point = np.clip(per_point, 0.0, 1.0)
    return ZeroAverageResult(float(per_point.mean()), per_point, degenerate)
