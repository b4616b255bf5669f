"""Dense symmetric linear algebra and norm machinery.

All operations are pure functions of their inputs; nothing here mutates
its arguments after construction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from . import tolerances as tol
from .errors import (
    DimensionMismatch,
    NoConvergence,
    NotPositiveDefinite,
    RhoNotLessThanOne,
    SingularBlock,
    SingularMatrix,
)

__all__ = [
    "check_symmetric",
    "BlockSplit",
    "BlockHessian",
    "MetricTensor",
    "ContractionReport",
    "NeumannReport",
    "DerivativeCheck",
    "spd_solve",
    "sym_eig",
    "psd_power",
    "spectral_norm",
    "contraction_matrix",
    "neumann_sup_bounds",
    "finite_diff_check",
]


def check_symmetric(a, rtol: float = tol.SYMMETRY_RTOL) -> np.ndarray:
    """Validate that ``a`` is square and symmetric; return a symmetrized copy.

    Raises DimensionMismatch for non-square input, ValueError when the
    asymmetry exceeds ``rtol`` relative to the matrix scale.
    """
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionMismatch(f"expected a square matrix, got shape {a.shape}")
    if a.shape[0] < 1:
        raise DimensionMismatch("dimension must be >= 1")
    scale = max(1.0, float(np.abs(a).max()))
    gap = float(np.abs(a - a.T).max())
    if gap > rtol * scale:
        raise ValueError(f"matrix not symmetric: max asymmetry {gap:.3e} (scale {scale:.3e})")
    return 0.5 * (a + a.T)


@dataclass(frozen=True)
class BlockSplit:
    """Partition of coordinates into a target block and a nuisance block."""

    target_idx: np.ndarray
    nuisance_idx: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.target_idx, dtype=int)
        s = np.asarray(self.nuisance_idx, dtype=int)
        object.__setattr__(self, "target_idx", t)
        object.__setattr__(self, "nuisance_idx", s)
        if t.size == 0 or s.size == 0:
            raise DimensionMismatch("both blocks must be nonempty")
        merged = np.concatenate([t, s])
        if np.unique(merged).size != merged.size:
            raise DimensionMismatch("target and nuisance indices must be disjoint")
        if sorted(merged.tolist()) != list(range(merged.size)):
            raise DimensionMismatch("blocks must cover 0..dim-1 exactly")

    @classmethod
    def half(cls, dim: int) -> "BlockSplit":
        p = (dim + 1) // 2
        return cls(np.arange(p), np.arange(p, dim))

    @property
    def p(self) -> int:
        return self.target_idx.size

    @property
    def q(self) -> int:
        return self.nuisance_idx.size

    @property
    def dim(self) -> int:
        return self.p + self.q

    def embed(self, theta, nui) -> np.ndarray:
        x = np.empty(self.dim)
        x[self.target_idx] = theta
        x[self.nuisance_idx] = nui
        return x


@dataclass(frozen=True)
class BlockHessian:
    """Blocks of a symmetric curvature matrix under a target/nuisance split."""

    f_tt: np.ndarray
    f_tn: np.ndarray
    f_nn: np.ndarray

    def __post_init__(self):
        ftt = check_symmetric(self.f_tt)
        fnn = check_symmetric(self.f_nn)
        ftn = np.atleast_2d(np.asarray(self.f_tn, dtype=float))
        if ftn.shape != (ftt.shape[0], fnn.shape[0]):
            raise DimensionMismatch(
                f"cross block has shape {ftn.shape}, expected {(ftt.shape[0], fnn.shape[0])}"
            )
        object.__setattr__(self, "f_tt", ftt)
        object.__setattr__(self, "f_tn", ftn)
        object.__setattr__(self, "f_nn", fnn)

    @classmethod
    def from_full(cls, full, split: BlockSplit) -> "BlockHessian":
        f = check_symmetric(full)
        t, s = split.target_idx, split.nuisance_idx
        return cls(f[np.ix_(t, t)], f[np.ix_(t, s)], f[np.ix_(s, s)])

    @property
    def p(self) -> int:
        return self.f_tt.shape[0]

    @property
    def q(self) -> int:
        return self.f_nn.shape[0]


@dataclass(frozen=True)
class MetricTensor:
    """Positive scaling defining a local geometry: diagonal or full SPD."""

    kind: str  # "diagonal" | "full"
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if self.kind == "diagonal":
            v = np.atleast_1d(v)
            if v.ndim != 1:
                raise DimensionMismatch("diagonal metric expects a vector of scales")
            if np.any(v <= 0):
                raise ValueError("diagonal metric entries must be positive")
        elif self.kind == "full":
            v = check_symmetric(v)
            if np.linalg.eigvalsh(v).min() <= 0:
                raise ValueError("full metric must be positive definite")
        else:
            raise ValueError(f"unknown metric kind {self.kind!r}")
        object.__setattr__(self, "values", v)

    @classmethod
    def diagonal(cls, scales) -> "MetricTensor":
        return cls("diagonal", np.asarray(scales, dtype=float))

    @classmethod
    def full(cls, mat) -> "MetricTensor":
        return cls("full", mat)

    @property
    def dim(self) -> int:
        return self.values.shape[0]

    def matrix(self) -> np.ndarray:
        return np.diag(self.values) if self.kind == "diagonal" else self.values

    def apply(self, v) -> np.ndarray:
        """Left-multiply a vector or matrix by the metric."""
        v = np.asarray(v, dtype=float)
        if self.kind == "diagonal":
            return self.values[:, None] * v if v.ndim == 2 else self.values * v
        return self.values @ v

    def apply_inv(self, v) -> np.ndarray:
        """Left-multiply a vector or matrix by the inverse metric."""
        v = np.asarray(v, dtype=float)
        if self.kind == "diagonal":
            return v / self.values[:, None] if v.ndim == 2 else v / self.values
        return np.linalg.solve(self.values, v)

    def inv_matrix(self) -> np.ndarray:
        if self.kind == "diagonal":
            return np.diag(1.0 / self.values)
        return np.linalg.inv(self.values)

    def norm(self, v) -> float:
        return float(np.linalg.norm(self.apply(v)))

    def sup_norm(self, v) -> float:
        return float(np.abs(self.apply(v)).max())


def spd_solve(a, b) -> np.ndarray:
    """Solve A x = b for symmetric positive definite A via Cholesky."""
    a = check_symmetric(a)
    b = np.asarray(b, dtype=float)
    if b.shape[0] != a.shape[0]:
        raise DimensionMismatch(f"rhs length {b.shape[0]} != dimension {a.shape[0]}")
    try:
        c, low = scipy.linalg.cho_factor(a, lower=True, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite(str(exc)) from exc
    except scipy.linalg.LinAlgError as exc:  # pragma: no cover - alias on most scipy versions
        raise NotPositiveDefinite(str(exc)) from exc
    return scipy.linalg.cho_solve((c, low), b, check_finite=False)


def sym_eig(a):
    """Eigendecomposition of a symmetric matrix: ascending values, orthonormal columns."""
    a = check_symmetric(a)
    try:
        w, v = np.linalg.eigh(a)
    except np.linalg.LinAlgError as exc:
        raise NoConvergence(f"eigendecomposition failed: {exc}") from exc
    return w, v


def psd_power(a, exponent: float) -> np.ndarray:
    """Matrix power of a positive (semi)definite matrix, exponent in {1/2, -1/2, -1}."""
    if exponent not in (0.5, -0.5, -1.0):
        raise ValueError("exponent must be one of +1/2, -1/2, -1")
    w, v = sym_eig(a)
    if exponent < 0:
        floor = tol.SINGULAR_EIG_RTOL * max(abs(w[-1]), 1.0)
        if w[0] <= floor:
            raise SingularMatrix(
                f"eigenvalue {w[0]:.3e} at or below tolerance {floor:.3e} for exponent {exponent}"
            )
        powered = w**exponent
    else:
        powered = np.sqrt(np.clip(w, 0.0, None))
    return (v * powered) @ v.T


def spectral_norm(m, rtol: float = tol.SPECTRAL_NORM_RTOL, seed: int = 0) -> float:
    """Largest singular value by power iteration on the Gram matrix.

    Deterministically seeded start vector; convergence is declared when the
    Rayleigh estimate changes by at most ``rtol`` relatively, which also copes
    with tied or near-tied top singular values.
    """
    m = np.atleast_2d(np.asarray(m, dtype=float))
    if not np.all(np.isfinite(m)):
        raise ValueError("matrix entries must be finite")
    if m.size == 0:
        return 0.0
    # iterate on the smaller Gram side
    g = m @ m.T if m.shape[0] <= m.shape[1] else m.T @ m
    dim = g.shape[0]
    scale = float(np.abs(g).max())
    if scale == 0.0:
        return 0.0
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(dim)
    v /= np.linalg.norm(v)
    lam = float("inf")
    cap = tol.SPECTRAL_NORM_CAP(dim)
    for _ in range(cap):
        gv = g @ v
        norm_gv = np.linalg.norm(gv)
        if norm_gv == 0.0:
            return 0.0
        lam_new = float(v @ gv)
        v = gv / norm_gv
        if abs(lam_new - lam) <= rtol * max(abs(lam_new), scale * 1e-14):
            return float(np.sqrt(max(lam_new, 0.0)))
        lam = lam_new
    raise NoConvergence(f"power iteration did not converge within {cap} iterations")


@dataclass(frozen=True)
class ContractionReport:
    """Normalized cross-curvature of a block Hessian and its squared norm."""

    p: np.ndarray
    ppt_norm: float
    certifiable: bool  # false when ppt_norm >= 1


def contraction_matrix(bh: BlockHessian, seed: int = 0) -> ContractionReport:
    """P = f_tt^{-1/2} f_tn f_nn^{-1/2} and the squared spectral norm ||P||^2."""
    try:
        tt = psd_power(bh.f_tt, -0.5)
        nn = psd_power(bh.f_nn, -0.5)
    except SingularMatrix as exc:
        raise SingularBlock(str(exc)) from exc
    p = tt @ bh.f_tn @ nn
    ppt = spectral_norm(p, seed=seed) ** 2
    return ContractionReport(p=p, ppt_norm=float(ppt), certifiable=bool(ppt < 1.0))


@dataclass(frozen=True)
class NeumannReport:
    """Verification of the sup-norm Neumann-series bounds on a concrete vector."""

    rho: float
    lhs: tuple  # measured left sides of the three inequalities
    rhs: tuple  # corresponding right sides
    slack: tuple
    bounds_hold: tuple


def neumann_sup_bounds(b, u) -> NeumannReport:
    """Check the three sup-norm inverse bounds for a unit-diagonal matrix.

    rho is the max absolute off-diagonal row sum, which equals the
    sup-norm operator norm of B - I over the unit sup-norm ball.
    """
    b = np.atleast_2d(np.asarray(b, dtype=float))
    u = np.asarray(u, dtype=float)
    n = b.shape[0]
    if b.shape != (n, n) or u.shape[0] != n:
        raise DimensionMismatch("B must be square and u of matching length")
    if np.abs(np.diag(b) - 1.0).max() > 1e-10:
        raise ValueError("B must have unit diagonal")
    off = np.abs(b).sum(axis=1) - np.abs(np.diag(b))
    rho = float(off.max()) if n > 1 else 0.0
    if rho >= 1.0:
        raise RhoNotLessThanOne(f"rho = {rho:.6f} >= 1")

    u_norm = float(np.abs(u).max())
    binv_u = np.linalg.solve(b, u)
    lhs = (
        float(np.abs(binv_u).max()),
        float(np.abs(binv_u - u).max()),
        float(np.abs(binv_u - 2.0 * u + b @ u).max()),
    )
    rhs = (
        u_norm / (1.0 - rho),
        rho / (1.0 - rho) * u_norm,
        rho**2 / (1.0 - rho) * u_norm,
    )
    eps = 1e-12 * max(1.0, u_norm)
    holds = tuple(left <= right + eps for left, right in zip(lhs, rhs))
    slack = tuple(right - left for left, right in zip(lhs, rhs))
    return NeumannReport(rho=rho, lhs=lhs, rhs=rhs, slack=slack, bounds_hold=holds)


@dataclass(frozen=True)
class DerivativeCheck:
    """Max mixed absolute/relative finite-difference errors of the derivative stack."""

    grad_err: float
    hess_err: float
    third_err: float


def _mixed_err(a, b) -> float:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    denom = np.maximum(1.0, np.maximum(np.abs(a), np.abs(b)))
    return float((np.abs(a - b) / denom).max())


def finite_diff_check(f, x, seed: int = 0) -> DerivativeCheck:
    """Central-difference validation of gradient, Hessian and third derivative.

    The step is h = 1e-5 * (1 + sup-norm of x).  The third derivative is
    compared with a differenced Hessian quadratic form along a few random
    directions.
    """
    x = np.asarray(x, dtype=float)
    n = x.shape[0]
    h = tol.FD_STEP_SCALE * (1.0 + float(np.abs(x).max()))

    grad = f.gradient(x)
    grad_fd = np.empty(n)
    for i in range(n):
        e = np.zeros(n)
        e[i] = h
        grad_fd[i] = (f.value(x + e) - f.value(x - e)) / (2.0 * h)
    grad_err = _mixed_err(grad, grad_fd)

    hess = f.hessian(x)
    hess_fd = np.empty((n, n))
    for i in range(n):
        e = np.zeros(n)
        e[i] = h
        hess_fd[:, i] = (f.gradient(x + e) - f.gradient(x - e)) / (2.0 * h)
    hess_err = _mixed_err(hess, 0.5 * (hess_fd + hess_fd.T))

    rng = np.random.default_rng(seed)
    third_err = 0.0
    for _ in range(tol.FD_DIRECTIONS):
        d = rng.standard_normal(n)
        d /= np.linalg.norm(d)
        analytic = f.third_directional(x, d, d, d)
        hp = f.hessian(x + h * d)
        hm = f.hessian(x - h * d)
        fd = (d @ hp @ d - d @ hm @ d) / (2.0 * h)
        third_err = max(third_err, _mixed_err(analytic, fd))

    return DerivativeCheck(grad_err=grad_err, hess_err=hess_err, third_err=third_err)
