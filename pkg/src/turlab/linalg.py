"""Dense complex linear algebra on small Hilbert spaces.

Matrices are plain ``numpy.ndarray`` of dtype complex128, row-major. The tensor
order convention is fixed globally: the first factor of a layout is the
slowest-varying (leftmost) Kronecker factor. TUR computations use R (x) S (x) E;
protocol circuits use S' (x) S (x) E with further environments appended.

All operations are pure functions; nothing here mutates its arguments.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import prod
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import ContractError, LayoutError, SingularOperator

# Tolerances (absolute, entrywise max-norm unless stated). All quantities in
# this package are O(1), so absolute comparisons are appropriate.
HERMITIAN_ATOL = 1e-10
UNITARY_ATOL = 1e-10
EIGENVALUE_GROUP_TOL = 1e-9   # degenerate eigenvalues closer than this share a projector
SINGULAR_CUTOFF = 1e-12       # eigenvalues at or below this count as zero
PSD_ATOL = 1e-10
TRACE_ATOL = 1e-10


def as_complex_matrix(m) -> np.ndarray:
    out = np.asarray(m, dtype=complex)
    if out.ndim != 2:
        raise ContractError(f"expected a 2-D matrix, got ndim={out.ndim}")
    return out


def dag(m: np.ndarray) -> np.ndarray:
    """Conjugate transpose."""
    return m.conj().T


def max_abs(m: np.ndarray) -> float:
    return float(np.max(np.abs(m))) if m.size else 0.0


def require_square(m: np.ndarray, name: str = "matrix") -> np.ndarray:
    m = as_complex_matrix(m)
    if m.shape[0] != m.shape[1]:
        raise ContractError(f"{name} must be square, got shape {m.shape}")
    return m


def require_hermitian(m: np.ndarray, atol: float = HERMITIAN_ATOL, name: str = "matrix") -> np.ndarray:
    m = require_square(m, name)
    err = max_abs(m - dag(m))
    if err > atol:
        raise ContractError(f"{name} is not Hermitian: max |M - M^dag| = {err:.3e} > {atol:.1e}")
    return m


def require_unitary(m: np.ndarray, atol: float = UNITARY_ATOL, name: str = "matrix") -> np.ndarray:
    m = require_square(m, name)
    err = max_abs(dag(m) @ m - np.eye(m.shape[0]))
    if err > atol:
        raise ContractError(f"{name} is not unitary: max |M^dag M - I| = {err:.3e} > {atol:.1e}")
    return m


def require_density(rho: np.ndarray, name: str = "rho") -> np.ndarray:
    """Validate a density matrix: Hermitian, PSD and trace one within tolerance."""
    rho = require_hermitian(rho, name=name)
    tr = complex(np.trace(rho))
    if abs(tr - 1.0) > TRACE_ATOL:
        raise ContractError(f"{name} must have unit trace, got {tr:.12g}")
    lo = float(np.linalg.eigvalsh(rho)[0])
    if lo < -PSD_ATOL:
        raise ContractError(f"{name} is not positive semidefinite: min eigenvalue {lo:.3e}")
    return rho


def basis_vector(dim: int, index: int) -> np.ndarray:
    v = np.zeros(dim, dtype=complex)
    v[index] = 1.0
    return v


def outer(v: np.ndarray, w: np.ndarray | None = None) -> np.ndarray:
    """|v><w| (|v><v| if w omitted)."""
    w = v if w is None else w
    return np.outer(v, w.conj())


@dataclass(frozen=True)
class SubsystemLayout:
    """Ordered tensor factors of a composite space.

    ``dims[0]`` is the slowest-varying (leftmost) Kronecker factor. Labels are
    cosmetic and default to ``F0, F1, ...``.
    """

    dims: tuple[int, ...]
    labels: tuple[str, ...] = field(default=())

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        if not dims or any(d < 1 for d in dims):
            raise LayoutError(f"factor dimensions must be positive, got {dims}")
        object.__setattr__(self, "dims", dims)
        labels = tuple(self.labels) if self.labels else tuple(f"F{i}" for i in range(len(dims)))
        if len(labels) != len(dims):
            raise LayoutError(f"{len(labels)} labels for {len(dims)} factors")
        object.__setattr__(self, "labels", labels)

    @property
    def dim(self) -> int:
        return prod(self.dims)

    @property
    def nfactors(self) -> int:
        return len(self.dims)

    def require_matches(self, m: np.ndarray) -> np.ndarray:
        m = require_square(m, "matrix")
        if m.shape[0] != self.dim:
            raise LayoutError(f"matrix dimension {m.shape[0]} != layout product {self.dim} {self.dims}")
        return m

    def drop(self, factor: int) -> "SubsystemLayout":
        keep = [i for i in range(self.nfactors) if i != factor]
        return SubsystemLayout(tuple(self.dims[i] for i in keep), tuple(self.labels[i] for i in keep))


def tensor_product(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Kronecker product with ``a`` as the slow (left) factor."""
    return np.kron(as_complex_matrix(a), as_complex_matrix(b))


def partial_trace(m: np.ndarray, layout: SubsystemLayout, keep: Iterable[int]) -> np.ndarray:
    """Trace out all factors not in ``keep``; kept factors stay in layout order."""
    m = layout.require_matches(m)
    n = layout.nfactors
    keep = sorted(set(int(k) for k in keep))
    if any(k < 0 or k >= n for k in keep):
        raise LayoutError(f"keep indices {keep} out of range for {n} factors")
    traced = [i for i in range(n) if i not in keep]
    t = m.reshape(layout.dims + layout.dims)
    nrow = n
    for f in sorted(traced, reverse=True):
        t = np.trace(t, axis1=f, axis2=f + nrow)
        nrow -= 1
    d = prod(layout.dims[k] for k in keep) if keep else 1
    return np.asarray(t).reshape(d, d)


def project_factor(m: np.ndarray, layout: SubsystemLayout, factor: int, index: int) -> np.ndarray:
    """<index| block of one factor: unnormalized reduced matrix on the remaining factors.

    The trace of the result is the probability of observing ``index`` on that
    factor in the computational basis.
    """
    m = layout.require_matches(m)
    n = layout.nfactors
    if not 0 <= factor < n:
        raise LayoutError(f"factor {factor} out of range")
    if not 0 <= index < layout.dims[factor]:
        raise LayoutError(f"basis index {index} out of range for dim {layout.dims[factor]}")
    t = m.reshape(layout.dims + layout.dims)
    t = np.take(t, index, axis=factor)
    t = np.take(t, index, axis=n - 1 + factor)
    d = layout.dim // layout.dims[factor]
    return t.reshape(d, d)


def embed_operator(u: np.ndarray, dims: Sequence[int], positions: Sequence[int]) -> np.ndarray:
    """Embed an operator acting on the given factors (ascending, possibly nonadjacent).

    ``u`` must act on the tensor product of ``dims[p]`` for p in ``positions``,
    in that order; identity everywhere else.
    """
    dims = tuple(int(d) for d in dims)
    positions = tuple(int(p) for p in positions)
    n = len(dims)
    if sorted(set(positions)) != list(positions):
        raise LayoutError(f"positions must be strictly ascending, got {positions}")
    if positions and (positions[0] < 0 or positions[-1] >= n):
        raise LayoutError(f"positions {positions} out of range for {n} factors")
    u = require_square(u, "embedded operator")
    dop = prod(dims[p] for p in positions)
    if u.shape[0] != dop:
        raise LayoutError(f"operator dim {u.shape[0]} != product of target dims {dop}")
    rest = [i for i in range(n) if i not in positions]
    drest = prod(dims[r] for r in rest) if rest else 1
    full = np.kron(u, np.eye(drest, dtype=complex))
    # kron axis order: (targets..., rest...) on both row and column sides.
    tdims = [dims[p] for p in positions] + [dims[r] for r in rest]
    t = full.reshape(tdims + tdims)
    src = list(positions) + rest  # register axis -> current axis position
    perm = [src.index(i) for i in range(n)]
    t = t.transpose(perm + [n + p for p in perm])
    d = prod(dims)
    return t.reshape(d, d)


@dataclass(frozen=True)
class SpectralDecomposition:
    """Eigenvalues (descending, degeneracies grouped) and orthogonal projectors."""

    eigenvalues: tuple[float, ...]
    projectors: tuple[np.ndarray, ...]

    def reconstruct(self) -> np.ndarray:
        return sum(z * p for z, p in zip(self.eigenvalues, self.projectors))

    def apply(self, f: Callable[[float], float]) -> np.ndarray:
        return sum(f(z) * p for z, p in zip(self.eigenvalues, self.projectors))


def spectral(m: np.ndarray, group_tol: float = EIGENVALUE_GROUP_TOL) -> SpectralDecomposition:
    """Spectral decomposition of a Hermitian matrix, eigenvalues descending."""
    m = require_hermitian(m)
    w, v = np.linalg.eigh((m + dag(m)) / 2.0)
    w, v = w[::-1], v[:, ::-1]
    values: list[float] = []
    projectors: list[np.ndarray] = []
    i = 0
    while i < len(w):
        j = i + 1
        while j < len(w) and abs(w[j] - w[j - 1]) <= group_tol:
            j += 1
        block = v[:, i:j]
        values.append(float(np.mean(w[i:j])))
        projectors.append(block @ dag(block))
        i = j
    return SpectralDecomposition(tuple(values), tuple(projectors))


def hermitian_function(m: np.ndarray, f: Callable[[float], float]) -> np.ndarray:
    """Apply a real scalar function to a Hermitian matrix through its spectrum."""
    return spectral(m).apply(f)


def hermitian_inverse(m: np.ndarray) -> np.ndarray:
    """Inverse of a Hermitian matrix; SingularOperator if any eigenvalue is ~0."""
    s = spectral(m)
    smallest = min(s.eigenvalues, key=abs)
    if abs(smallest) <= SINGULAR_CUTOFF:
        raise SingularOperator("matrix is singular, inverse undefined", eigenvalue=smallest)
    return s.apply(lambda z: 1.0 / z)


def hermitian_sqrt(m: np.ndarray) -> np.ndarray:
    """Principal square root of a PSD Hermitian matrix (eigenvalues >= -1e-12, clamped)."""
    s = spectral(m)
    lo = min(s.eigenvalues)
    if lo < -SINGULAR_CUTOFF:
        raise ContractError(f"matrix is not PSD: eigenvalue {lo:.3e}")
    return s.apply(lambda z: np.sqrt(max(z, 0.0)))


def inverse(v: np.ndarray) -> np.ndarray:
    """Inverse of a general square matrix via (v^dag v)^-1 v^dag."""
    v = require_square(v)
    return hermitian_inverse(dag(v) @ v) @ dag(v)


def polar_unitary(v: np.ndarray) -> np.ndarray:
    """Unitary factor U of the polar decomposition v = U sqrt(v^dag v)."""
    v = require_square(v)
    s = spectral(dag(v) @ v)
    lo = min(s.eigenvalues)
    if lo <= SINGULAR_CUTOFF:
        raise SingularOperator("polar decomposition needs nonsingular v^dag v", eigenvalue=lo)
    u = v @ s.apply(lambda z: 1.0 / np.sqrt(z))
    return require_unitary(u, atol=1e-9, name="polar unitary")
