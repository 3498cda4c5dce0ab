"""Encoder/decoder pairs: PCA (linear) and MLP autoencoders behind one interface."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .nn import MlpNet


def jacobi_eigh(a: np.ndarray, tol: float = 1e-12, max_sweeps: int = 60) -> tuple[np.ndarray, np.ndarray]:
    """Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.

    Each sweep visits every (p, q) pair once using round-robin ordering, so the
    n/2 rotations of a round touch disjoint rows and are applied together.
    Stops when the off-diagonal Frobenius norm drops below ``tol * ||A||_F``.
    Returns eigenvalues in descending order and the matching eigenvector columns.
    """
    a = np.array(a, dtype=np.float64)
    n = a.shape[0]
    if a.shape != (n, n):
        raise ValueError("matrix must be square")
    if not np.allclose(a, a.T, rtol=1e-12, atol=1e-14 * max(1.0, np.abs(a).max(initial=0.0))):
        raise ValueError("matrix must be symmetric")
    a = 0.5 * (a + a.T)
    v = np.eye(n)
    scale = np.linalg.norm(a)
    if n < 2 or scale == 0.0:
        return _sorted(np.diag(a).copy(), v)
    m = n + (n % 2)  # pad with a dummy index so every round has m/2 pairs
    players = np.arange(m)
    for _ in range(max_sweeps):
        off = np.linalg.norm(a - np.diag(np.diag(a)))
        if off <= tol * scale:
            break
        for _round in range(m - 1):
            p = players[: m // 2]
            q = players[m // 2:][::-1]
            keep = (p < n) & (q < n)
            p, q = p[keep], q[keep]
            _rotate(a, v, p, q)
            # circle method: fix players[0], rotate the rest
            players = np.concatenate(([players[0]], [players[-1]], players[1:-1]))
    else:
        raise RuntimeError("Jacobi iteration did not converge")
    return _sorted(np.diag(a).copy(), v)


def _rotate(a, v, p, q):
    apq = a[p, q]
    active = apq != 0.0
    if not active.any():
        return
    p, q, apq = p[active], q[active], apq[active]
    app, aqq = a[p, p], a[q, q]
    tau = (aqq - app) / (2.0 * apq)
    t = np.where(tau >= 0, 1.0, -1.0) / (np.abs(tau) + np.sqrt(1.0 + tau * tau))
    c = 1.0 / np.sqrt(1.0 + t * t)
    s = t * c
    rp, rq = a[p, :], a[q, :]
    a[p, :] = c[:, None] * rp - s[:, None] * rq
    a[q, :] = s[:, None] * rp + c[:, None] * rq
    cp, cq = a[:, p], a[:, q]
    a[:, p] = cp * c - cq * s
    a[:, q] = cp * s + cq * c
    vp, vq = v[:, p], v[:, q]
    v[:, p] = vp * c - vq * s
    v[:, q] = vp * s + vq * c


def _sorted(w, v):
    order = np.argsort(-w, kind="stable")
    return w[order], v[:, order]


def _fix_signs(components: np.ndarray) -> np.ndarray:
    """Make the largest-magnitude entry of each column positive."""
    idx = np.argmax(np.abs(components), axis=0)
    signs = np.sign(components[idx, np.arange(components.shape[1])])
    signs[signs == 0] = 1.0
    return components * signs


@dataclass
class PcaModel:
    mean: np.ndarray          # [D]
    components: np.ndarray    # [D, d], orthonormal columns
    eigenvalues: np.ndarray   # [d], descending, population covariance (divide by M)

    kind = "pca"

    @property
    def latent_dim(self) -> int:
        return self.components.shape[1]

    @property
    def ambient_dim(self) -> int:
        return self.components.shape[0]

    def encode(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1] != self.ambient_dim:
            raise ValueError(f"expected {self.ambient_dim} features, got {x.shape[-1]}")
        return (x - self.mean) @ self.components

    def decode(self, z: np.ndarray) -> np.ndarray:
        z = np.asarray(z, dtype=np.float64)
        if z.shape[-1] != self.latent_dim:
            raise ValueError(f"expected {self.latent_dim} latent features, got {z.shape[-1]}")
        return z @ self.components.T + self.mean

    def arrays(self):
        return [("mean", self.mean), ("components", self.components), ("eigenvalues", self.eigenvalues)]


JACOBI_MAX_SIZE = 128


def symmetric_eigh(a: np.ndarray, solver: str = "auto") -> tuple[np.ndarray, np.ndarray]:
    """Descending eigenpairs of a symmetric matrix.

    ``solver`` is "jacobi", "lapack" (Householder tridiagonalisation, numpy.linalg.eigh)
    or "auto", which picks Jacobi up to ``JACOBI_MAX_SIZE`` rows.  Cyclic Jacobi
    needs ~13 sweeps at n = 512 and is far slower there than the tridiagonal route.
    """
    a = np.asarray(a, dtype=np.float64)
    if solver == "auto":
        solver = "jacobi" if a.shape[0] <= JACOBI_MAX_SIZE else "lapack"
    if solver == "jacobi":
        return jacobi_eigh(a)
    if solver == "lapack":
        w, v = np.linalg.eigh(0.5 * (a + a.T))
        return w[::-1].copy(), v[:, ::-1].copy()
    raise ValueError(f"unknown eigen-solver {solver!r}")


def pca_fit(data: np.ndarray, d: int, solver: str = "auto") -> PcaModel:
    """Top-``d`` principal directions of the rows of ``data``.

    Uses the D x D covariance or the M x M Gram matrix, whichever is smaller.
    Directions beyond the data rank get zero eigenvalues and an arbitrary
    orthonormal completion.
    """
    x = np.asarray(data, dtype=np.float64)
    m, dim = x.shape
    if d < 1 or d > min(m, dim):
        raise ValueError(f"latent dimension {d} must lie in [1, min(M, D) = {min(m, dim)}]")
    mean = x.mean(axis=0)
    xc = x - mean
    if dim <= m:
        w, v = symmetric_eigh(xc.T @ xc / m, solver)
        comps = v[:, :d]
        w = w[:d]
    else:
        w, u = symmetric_eigh(xc @ xc.T / m, solver)
        w = w[:d]
        comps = np.zeros((dim, d))
        floor = 1e-12 * max(w[0], 0.0) if len(w) else 0.0
        for i in range(d):
            if w[i] > floor and w[i] > 0:
                comps[:, i] = xc.T @ u[:, i] / np.sqrt(m * w[i])
        comps = _complete_orthonormal(comps, w > floor)
    # numerically-zero directions beyond the data rank report exactly zero variance
    w = np.where(w > 1e-12 * max(w[0], 0.0), w, 0.0)
    return PcaModel(mean, _fix_signs(comps), w)


def _complete_orthonormal(comps, filled):
    """Fill unset columns with unit vectors orthogonal to everything before them."""
    dim, d = comps.shape
    basis = np.eye(dim)
    j = 0
    for i in range(d):
        if filled[i]:
            continue
        while True:
            cand = basis[:, j].copy()
            j += 1
            cand -= comps[:, :i] @ (comps[:, :i].T @ cand)
            cand -= comps[:, :i] @ (comps[:, :i].T @ cand)
            nrm = np.linalg.norm(cand)
            if nrm > 1e-8:
                comps[:, i] = cand / nrm
                break
    return comps


def pca_encode(m: PcaModel, x):
    return m.encode(x)


def pca_decode(m: PcaModel, z):
    return m.decode(z)


class NeuralCoder:
    """Encoder/decoder MLP pair (D -> d -> D)."""

    kind = "neural"

    def __init__(self, encoder: MlpNet, decoder: MlpNet):
        if encoder.spec.output_dim != decoder.spec.input_dim:
            raise ValueError("encoder output and decoder input dimensions differ")
        if encoder.spec.input_dim != decoder.spec.output_dim:
            raise ValueError("encoder input and decoder output dimensions differ")
        self.encoder = encoder
        self.decoder = decoder

    @property
    def latent_dim(self) -> int:
        return self.encoder.spec.output_dim

    @property
    def ambient_dim(self) -> int:
        return self.encoder.spec.input_dim

    def encode(self, x):
        return self.encoder(np.atleast_2d(x))

    def decode(self, z):
        return self.decoder(np.atleast_2d(z))
