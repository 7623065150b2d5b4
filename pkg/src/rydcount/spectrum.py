"""Constrained basis enumeration and sparse Rydberg / PXP Hamiltonians.

Both Hamiltonians use a Rabi term ``(omega/2) X_i`` so that the PXP model is the
literal infinite-interaction limit of the Rydberg model.  States are integers whose
bit ``i`` is the occupation of vertex position ``i``.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .instance import BlockadeGraph, int_to_assignment

DEFAULT_MAX_BASIS = 2_000_000
DEFAULT_MAX_FULL_SITES = 20


class ResourceError(RuntimeError):
    """A basis or matrix would exceed the configured size cap."""


def max_basis_cap() -> int:
    return int(os.environ.get("RYDCOUNT_MAX_BASIS", DEFAULT_MAX_BASIS))


@dataclass(frozen=True, eq=False)
class ConstrainedBasis:
    n: int
    states: np.ndarray  # ascending int64 bitstrings

    def __len__(self) -> int:
        return len(self.states)

    def index(self, x) -> np.ndarray | int:
        """Position(s) of bitstring(s) ``x``; -1 where absent."""
        x = np.asarray(x, dtype=np.int64)
        pos = np.searchsorted(self.states, x)
        pos = np.minimum(pos, len(self.states) - 1)
        hit = self.states[pos] == x
        out = np.where(hit, pos, -1)
        return int(out) if out.ndim == 0 else out

    def bitstring(self, k: int) -> str:
        return int_to_assignment(int(self.states[k]), self.n)

    def occupations(self) -> np.ndarray:
        """(dim, n) 0/1 matrix of site occupations."""
        return ((self.states[:, None] >> np.arange(self.n)) & 1).astype(np.int8)


def enumerate_solutions(g: BlockadeGraph, max_basis: int | None = None) -> ConstrainedBasis:
    """All independent sets of ``g`` in ascending numeric order.

    Vertices are added one at a time and a vertex is only switched on in prefixes
    whose lower neighbours are all off, so blockade-violating prefixes are never
    expanded.
    """
    cap = max_basis_cap() if max_basis is None else max_basis
    if g.n > 62:
        raise ResourceError(f"n={g.n} does not fit in a 64-bit state word")
    lower = [0] * g.n
    for i, j in g.edges:
        lower[j] |= 1 << i
    states = np.zeros(1, dtype=np.int64)
    for v in range(g.n):
        ok = states[(states & lower[v]) == 0]
        if len(states) + len(ok) > cap:
            raise ResourceError(
                f"constrained basis exceeds cap {cap} (at least {len(states) + len(ok)} states)"
            )
        states = np.concatenate([states, ok | (1 << v)])
    states.sort()
    return ConstrainedBasis(g.n, states)


@dataclass(frozen=True, eq=False)
class SparseHamiltonian:
    matrix: sp.csr_matrix
    basis_kind: str  # "constrained" | "full"
    omega: float
    v: float = 0.0

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def nnz(self) -> int:
        return self.matrix.nnz

    def rows(self) -> list[list[tuple[int, float]]]:
        m = self.matrix
        return [
            list(zip(m.indices[m.indptr[r]:m.indptr[r + 1]].tolist(),
                     m.data[m.indptr[r]:m.indptr[r + 1]].tolist()))
            for r in range(self.dim)
        ]

    def scaled(self, factor: float) -> "SparseHamiltonian":
        return SparseHamiltonian(
            (self.matrix * factor).tocsr(), self.basis_kind, self.omega * factor, self.v * factor
        )

    def dump_coo(self) -> str:
        """Coordinate-list text with a ``dim nnz kind omega v`` header."""
        coo = self.matrix.tocoo()
        order = np.lexsort((coo.col, coo.row))
        lines = [f"{self.dim} {self.nnz} {self.basis_kind} {self.omega!r} {self.v!r}"]
        lines += [f"{coo.row[k]} {coo.col[k]} {coo.data[k]!r}" for k in order]
        return "\n".join(lines) + "\n"


def _csr(rows, cols, vals, dim) -> sp.csr_matrix:
    m = sp.csr_matrix((vals, (rows, cols)), shape=(dim, dim), dtype=np.float64)
    m.sum_duplicates()
    m.sort_indices()
    return m


def build_pxp(g: BlockadeGraph, basis: ConstrainedBasis, omega: float = 1.0) -> SparseHamiltonian:
    if not omega > 0:
        raise ValueError(f"omega must be positive, got {omega}")
    if basis.n != g.n:
        raise ValueError("basis does not match graph")
    rows, cols = [], []
    idx = np.arange(len(basis))
    for i in range(g.n):
        target = basis.index(basis.states ^ (1 << i))
        ok = target >= 0
        rows.append(idx[ok])
        cols.append(target[ok])
    rows = np.concatenate(rows) if rows else np.zeros(0, dtype=np.int64)
    cols = np.concatenate(cols) if cols else np.zeros(0, dtype=np.int64)
    return SparseHamiltonian(
        _csr(rows, cols, np.full(len(rows), omega / 2), len(basis)), "constrained", float(omega)
    )


def build_rydberg(
    g: BlockadeGraph, omega: float = 1.0, v: float = 50.0, max_sites: int = DEFAULT_MAX_FULL_SITES
) -> SparseHamiltonian:
    """Full ``2^n`` Rydberg Hamiltonian with interaction ``v`` on graph edges only."""
    if not omega > 0:
        raise ValueError(f"omega must be positive, got {omega}")
    if g.n > max_sites:
        raise ResourceError(f"full basis of n={g.n} sites exceeds cap of {max_sites} sites")
    dim = 1 << g.n
    states = np.arange(dim, dtype=np.int64)
    diag = np.zeros(dim)
    for i, j in g.edges:
        diag += v * (((states >> i) & 1) & ((states >> j) & 1))
    rows = [states[diag != 0]]
    cols = [states[diag != 0]]
    vals = [diag[diag != 0]]
    for i in range(g.n):
        rows.append(states)
        cols.append(states ^ (1 << i))
        vals.append(np.full(dim, omega / 2))
    return SparseHamiltonian(
        _csr(np.concatenate(rows), np.concatenate(cols), np.concatenate(vals), dim),
        "full", float(omega), float(v),
    )


def heisenberg_time(h: SparseHamiltonian | np.ndarray, eigenvalues: np.ndarray | None = None) -> float:
    """``2 pi`` over the mean adjacent level spacing.

    The mean spacing only depends on the spectral range, so for large matrices the
    two extreme eigenvalues suffice.
    """
    mat = h.matrix if isinstance(h, SparseHamiltonian) else h
    dim = mat.shape[0]
    if dim < 2:
        raise ValueError("need dim >= 2 for a level spacing")
    if eigenvalues is not None:
        lo, hi = float(np.min(eigenvalues)), float(np.max(eigenvalues))
    elif dim <= 4096:
        dense = mat.toarray() if sp.issparse(mat) else np.asarray(mat)
        ev = np.linalg.eigvalsh(dense)
        lo, hi = float(ev[0]), float(ev[-1])
    else:
        from scipy.sparse.linalg import eigsh

        lo = float(eigsh(mat, k=1, which="SA", return_eigenvectors=False)[0])
        hi = float(eigsh(mat, k=1, which="LA", return_eigenvectors=False)[0])
    spacing = (hi - lo) / (dim - 1)
    if spacing <= 1e-14 * max(1.0, abs(hi), abs(lo)):
        return float("inf")
    return 2 * np.pi / spacing
