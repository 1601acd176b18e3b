"""Seeded generation of random matrices, signals and noise.

Matrix ensembles are scaled so that off-diagonal entry variances are 1/n
(symmetric case) or 1/m (rectangular case). Entry distributions are
standardized to mean 0, variance 1 before scaling.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .exceptions import DimensionError, SpecError
from .rng import RngStream
from .vecmat import vec

ENTRY_DISTS = ("gaussian", "rademacher", "uniform")

_SQRT3 = np.sqrt(3.0)


def _draw_entries(dist: str, size, gen: np.random.Generator) -> np.ndarray:
    """Standardized (mean 0, variance 1) i.i.d. draws."""
    if dist == "gaussian":
        return gen.standard_normal(size)
    if dist == "rademacher":
        return 2.0 * gen.integers(0, 2, size=size).astype(np.float64) - 1.0
    if dist == "uniform":
        return gen.uniform(-_SQRT3, _SQRT3, size=size)
    raise SpecError(f"unknown entry distribution {dist!r}")


@dataclass(frozen=True)
class EnsembleSpec:
    """Declarative description of a random matrix ensemble."""

    kind: str  # "goe" | "wigner_iid" | "ginibre_iid"
    rows: int
    cols: int
    entry_dist: str = "gaussian"

    def __post_init__(self):
        if self.kind not in ("goe", "wigner_iid", "ginibre_iid"):
            raise SpecError(f"unknown ensemble kind {self.kind!r}")
        if self.entry_dist not in ENTRY_DISTS:
            raise SpecError(f"unknown entry distribution {self.entry_dist!r}")
        if self.rows < 1 or self.cols < 1:
            raise DimensionError("matrix dimensions must be positive")
        if self.kind in ("goe", "wigner_iid") and self.rows != self.cols:
            raise DimensionError(
                f"{self.kind} requires a square matrix, got {self.rows}x{self.cols}"
            )


@dataclass(frozen=True)
class SignalSpec:
    """Declarative description of a signal generator.

    kinds:
      zero                      all-zeros vector of length dims
      sparse                    Bernoulli(density) support, i.i.d. amplitudes
      low_rank                  M x N matrix O D U^T with Haar O, U
      smooth_image              M x N low-frequency cosine mixture, |entries| <= 1
    """

    kind: str
    dims: int
    M: int = 0
    N: int = 0
    rank: int = 0
    density: float = 0.0
    amplitude_dist: str = "gaussian"
    sv_high: float = 0.0  # low_rank: singular values uniform on [0, sv_high]
    smoothness: int = 3  # smooth_image: number of low-frequency modes per axis

    def __post_init__(self):
        if self.kind not in ("zero", "sparse", "low_rank", "smooth_image"):
            raise SpecError(f"unknown signal kind {self.kind!r}")
        if self.kind in ("low_rank", "smooth_image"):
            if self.M * self.N != self.dims:
                raise SpecError("matrix signals require dims == M * N")
        if self.kind == "low_rank" and not (0 <= self.rank <= min(self.M, self.N)):
            raise SpecError("rank must satisfy 0 <= rank <= min(M, N)")
        if self.kind == "sparse" and not (0.0 <= self.density <= 1.0):
            raise SpecError("density must lie in [0, 1]")


@dataclass
class SignalSample:
    """A drawn signal vector, plus the factor decomposition for matrix signals."""

    vector: np.ndarray
    left: Optional[np.ndarray] = None  # O
    singular_values: Optional[np.ndarray] = None  # diag of D, length min(M, N)
    right: Optional[np.ndarray] = None  # U


def sample_wigner(spec: EnsembleSpec, rng: RngStream) -> np.ndarray:
    """Symmetric n x n matrix with off-diagonal variance 1/n.

    GOE uses Gaussian entries with diagonal variance 2/n; wigner_iid places
    i.i.d. scaled entry_dist draws on and above the diagonal and mirrors them,
    so the output is bitwise symmetric.
    """
    if spec.kind not in ("goe", "wigner_iid"):
        raise SpecError(f"sample_wigner needs a symmetric ensemble, got {spec.kind!r}")
    n = spec.rows
    gen = rng.generator()
    if spec.kind == "goe":
        a = gen.standard_normal((n, n)) / np.sqrt(n)
        return (a + a.T) / np.sqrt(2.0)
    iu = np.triu_indices(n)
    w = np.zeros((n, n))
    w[iu] = _draw_entries(spec.entry_dist, len(iu[0]), gen) / np.sqrt(n)
    w = w + np.triu(w, 1).T
    return w


def sample_ginibre(spec: EnsembleSpec, rng: RngStream) -> np.ndarray:
    """m x n matrix with i.i.d. entries of mean 0 and variance 1/m."""
    if spec.kind != "ginibre_iid":
        raise SpecError(f"sample_ginibre needs kind 'ginibre_iid', got {spec.kind!r}")
    gen = rng.generator()
    m, n = spec.rows, spec.cols
    return _draw_entries(spec.entry_dist, (m, n), gen) / np.sqrt(m)


def sample_haar_orthogonal(dim: int, rng: RngStream) -> np.ndarray:
    """Haar-distributed orthogonal matrix via QR with sign correction."""
    if dim < 1:
        raise DimensionError("dim must be >= 1")
    gen = rng.generator()
    g = gen.standard_normal((dim, dim))
    q, r = np.linalg.qr(g)
    d = np.sign(np.diag(r))
    d[d == 0] = 1.0
    return q * d


def sample_signal(spec: SignalSpec, rng: RngStream) -> SignalSample:
    """Draw a signal vector according to spec (see :class:`SignalSpec`)."""
    gen = rng.generator()
    if spec.kind == "zero":
        return SignalSample(np.zeros(spec.dims))
    if spec.kind == "sparse":
        mask = gen.random(spec.dims) < spec.density
        amps = _draw_entries(spec.amplitude_dist, spec.dims, gen)
        return SignalSample(np.where(mask, amps, 0.0))
    if spec.kind == "low_rank":
        o = sample_haar_orthogonal(spec.M, rng.derive(1))
        u = sample_haar_orthogonal(spec.N, rng.derive(2))
        k = min(spec.M, spec.N)
        sv = np.zeros(k)
        high = spec.sv_high if spec.sv_high > 0 else np.sqrt(spec.N)
        sv[: spec.rank] = np.sort(gen.uniform(0.0, high, size=spec.rank))[::-1]
        theta = (o[:, :k] * sv) @ u[:, :k].T
        return SignalSample(vec(theta), left=o, singular_values=sv, right=u)
    # smooth_image: separable low-frequency cosine mixture capped at 1
    p = spec.smoothness
    coef = gen.standard_normal((p, p)) / (1.0 + np.add.outer(np.arange(p), np.arange(p)))
    ii = (np.arange(spec.M)[:, None] + 0.5) / spec.M
    jj = (np.arange(spec.N)[:, None] + 0.5) / spec.N
    basis_i = np.cos(np.pi * ii * np.arange(p))  # M x p
    basis_j = np.cos(np.pi * jj * np.arange(p))  # N x p
    img = basis_i @ coef @ basis_j.T
    img = img / np.abs(img).max()
    return SignalSample(vec(img))


def sample_noise(m: int, std: float, rng: RngStream) -> np.ndarray:
    """i.i.d. N(0, std^2) noise vector of length m."""
    return std * rng.generator().standard_normal(m)


def moment_check(w: np.ndarray, orders, exclude_diagonal: bool = False) -> dict:
    """Empirical scaled moments: mean |W_ij|^k times rows^(k/2), per order k.

    Bounded values across sizes confirm the moment growth condition for an
    ensemble. ``exclude_diagonal`` restricts to off-diagonal entries of a
    square matrix.
    """
    w = np.asarray(w)
    rows = w.shape[0]
    if exclude_diagonal:
        entries = w[~np.eye(w.shape[0], w.shape[1], dtype=bool)]
    else:
        entries = w.ravel()
    out = {}
    for k in orders:
        if k < 2:
            raise SpecError("moment orders must be >= 2")
        out[int(k)] = float(np.mean(np.abs(entries) ** k) * rows ** (k / 2.0))
    return out


def save_matrix(path, a: np.ndarray) -> None:
    """Text format: header 'rows cols', then row-major entries, 17 sig digits."""
    a = np.atleast_2d(np.asarray(a, dtype=np.float64))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{a.shape[0]} {a.shape[1]}\n")
        for row in a:
            fh.write(" ".join(f"{x:.17g}" for x in row) + "\n")


def load_matrix(path) -> np.ndarray:
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().split()
        rows, cols = int(header[0]), int(header[1])
        data = np.loadtxt(fh, ndmin=2)
    if data.shape != (rows, cols):
        data = data.reshape(rows, cols)
    return data
