"""Unitary quench dynamics ``exp(-iHt)`` and survival-probability analysis."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .spectrum import SparseHamiltonian, heisenberg_time

DEFAULT_EXACT_CAP = 4096
KRYLOV_TOL = 1e-9  # local error per unit time
KRYLOV_DIM = 30


class NumericalError(RuntimeError):
    """Evolution failed to reach its accuracy target."""


def basis_state(dim: int, k: int = 0) -> np.ndarray:
    psi = np.zeros(dim, dtype=complex)
    psi[k] = 1.0
    return psi


class EvolutionEngine:
    """Propagator for a fixed Hamiltonian.

    ``method="auto"`` diagonalises exactly up to ``exact_cap`` and falls back to an
    adaptive Lanczos (Krylov) propagator above it.
    """

    def __init__(
        self,
        h: SparseHamiltonian,
        method: str = "auto",
        exact_cap: int = DEFAULT_EXACT_CAP,
        krylov_tol: float = KRYLOV_TOL,
        krylov_dim: int = KRYLOV_DIM,
    ):
        if method == "auto":
            method = "exact" if h.dim <= exact_cap else "krylov"
        if method not in ("exact", "krylov"):
            raise ValueError(f"unknown method {method!r}")
        if method == "exact" and h.dim > exact_cap:
            raise ValueError(f"exact mode needs dim <= {exact_cap}, got {h.dim}")
        self.h = h
        self.method = method
        self.krylov_tol = krylov_tol
        self.krylov_dim = krylov_dim
        self.energies: np.ndarray | None = None
        self.vectors: np.ndarray | None = None
        if method == "exact":
            self.energies, self.vectors = np.linalg.eigh(h.matrix.toarray())
        self._t_h: float | None = None

    @property
    def dim(self) -> int:
        return self.h.dim

    def heisenberg_time(self) -> float:
        if self._t_h is None:
            if self.dim < 2:
                self._t_h = float("inf")
            else:
                self._t_h = heisenberg_time(self.h, self.energies)
        return self._t_h

    def _check(self, psi: np.ndarray) -> np.ndarray:
        psi = np.asarray(psi, dtype=complex)
        if psi.shape != (self.dim,):
            raise ValueError(f"state has shape {psi.shape}, expected ({self.dim},)")
        return psi

    def evolve(self, psi: np.ndarray, t: float) -> np.ndarray:
        psi = self._check(psi)
        if t < 0:
            raise ValueError("evolution time must be non-negative")
        if t == 0:
            return psi.copy()
        if self.method == "exact":
            return self._from_coeffs(self._coeffs(psi), [t])[:, 0]
        return self._krylov(psi, t)

    def _coeffs(self, psi: np.ndarray) -> np.ndarray:
        nz = np.flatnonzero(psi)
        if len(nz) == 1:  # basis state: read the eigenvector row directly
            return psi[nz[0]] * self.vectors[nz[0]]
        return self.vectors.T @ psi.real + 1j * (self.vectors.T @ psi.imag)

    def _from_coeffs(self, c: np.ndarray, times) -> np.ndarray:
        x = np.exp(-1j * np.outer(self.energies, np.asarray(times, dtype=float))) * c[:, None]
        # real eigenvectors: two real products avoid a complex copy of the matrix
        return self.vectors @ x.real + 1j * (self.vectors @ x.imag)

    def evolve_many(self, psi: np.ndarray, times) -> np.ndarray:
        """Columns are ``exp(-iHt)psi`` for each entry of ``times``, in the given order."""
        psi = self._check(psi)
        times = np.asarray(times, dtype=float)
        if np.any(times < 0):
            raise ValueError("evolution time must be non-negative")
        if self.method == "exact":
            return self._from_coeffs(self._coeffs(psi), times)
        out = np.empty((self.dim, len(times)), dtype=complex)
        order = np.argsort(times, kind="stable")
        cur, t_cur = psi.copy(), 0.0
        for k in order:
            if times[k] > t_cur:
                cur = self._krylov(cur, times[k] - t_cur)
                t_cur = times[k]
            out[:, k] = cur
        return out

    def probabilities(self, psi: np.ndarray, times, chunk: int = 2048) -> np.ndarray:
        """Measurement distributions ``|<x|U(t)|psi>|^2``, shape (dim, len(times))."""
        times = np.asarray(times, dtype=float)
        out = np.empty((self.dim, len(times)))
        for s in range(0, len(times), chunk):
            amps = self.evolve_many(psi, times[s:s + chunk])
            out[:, s:s + chunk] = amps.real ** 2 + amps.imag ** 2
        return out

    def mean_probabilities(self, psi: np.ndarray, times, chunk: int = 1024) -> np.ndarray:
        times = np.asarray(times, dtype=float)
        acc = np.zeros(self.dim)
        for s in range(0, len(times), chunk):
            acc += self.probabilities(psi, times[s:s + chunk]).sum(axis=1)
        return acc / len(times)

    def _krylov(self, psi: np.ndarray, t: float) -> np.ndarray:
        mat = self.h.matrix
        tol = self.krylov_tol
        done = 0.0
        w = psi.copy()
        while t - done > 1e-14 * t:
            beta0 = np.linalg.norm(w)
            m = min(self.krylov_dim, self.dim)
            basis = np.zeros((m + 1, self.dim), dtype=complex)
            alpha = np.zeros(m)
            beta = np.zeros(m)
            basis[0] = w / beta0
            breakdown = False
            for j in range(m):
                r = mat @ basis[j]
                alpha[j] = np.vdot(basis[j], r).real
                r = r - alpha[j] * basis[j] - (beta[j - 1] * basis[j - 1] if j else 0)
                # full reorthogonalisation keeps the small tridiagonal faithful
                r -= basis[: j + 1].T @ (basis[: j + 1].conj() @ r)
                beta[j] = np.linalg.norm(r)
                if beta[j] < 1e-12 * max(1.0, abs(alpha[j])):
                    m, breakdown = j + 1, True
                    break
                basis[j + 1] = r / beta[j]
            evals, evecs = sla.eigh_tridiagonal(alpha[:m], beta[: m - 1]) if m > 1 else (alpha[:1], np.ones((1, 1)))
            remaining = t - done

            def small_exp(dt):
                return evecs @ (np.exp(-1j * evals * dt) * evecs[0].conj())

            dt = remaining
            if not breakdown:
                for _ in range(60):
                    y = small_exp(dt)
                    err = beta0 * beta[m - 1] * abs(y[m - 1])
                    if err <= tol * dt:
                        break
                    dt *= 0.5
                else:
                    raise NumericalError("Krylov step size underflow")
            y = small_exp(dt)
            w = beta0 * (basis[:m].T @ y)
            done += dt
        return w

    def survival_probability(self, psi0: np.ndarray, t: float) -> float:
        psi0 = self._check(psi0)
        amp = np.vdot(psi0, self.evolve(psi0, t))
        return float(min(1.0, abs(amp) ** 2))

    def survival_many(self, psi0: np.ndarray, times) -> np.ndarray:
        psi0 = self._check(psi0)
        times = np.asarray(times, dtype=float)
        if self.method == "exact":
            w = np.abs(self._coeffs(psi0)) ** 2
            amps = np.exp(-1j * np.outer(times, self.energies)) @ w
        else:
            amps = psi0.conj() @ self.evolve_many(psi0, times)
        return np.minimum(1.0, np.abs(amps) ** 2)

    def energy(self, psi: np.ndarray) -> float:
        return float(np.vdot(psi, self.h.matrix @ psi).real)


def evolve(e: EvolutionEngine, psi: np.ndarray, t: float) -> np.ndarray:
    return e.evolve(psi, t)


def survival_probability(e: EvolutionEngine, psi0: np.ndarray, t: float) -> float:
    return e.survival_probability(psi0, t)


def averaged_survival(e: EvolutionEngine, psi0: np.ndarray, times) -> float:
    times = np.asarray(times, dtype=float)
    if times.size == 0:
        raise ValueError("need at least one time")
    return float(np.mean(e.survival_many(psi0, times)))


@dataclass
class ExponentialFit:
    alpha: float
    beta: float
    residual: float

    def __iter__(self):
        return iter((self.alpha, self.beta))


def fit_exponential(ns, values) -> ExponentialFit:
    """Least-squares fit of ``ln(value) = -alpha * n - beta``."""
    ns = np.asarray(ns, dtype=float)
    values = np.asarray(values, dtype=float)
    if len(ns) != len(values) or len(ns) < 2:
        raise ValueError("need at least two (n, value) pairs")
    if np.any(values <= 0):
        raise ValueError("values must be positive for a log fit")
    A = np.column_stack([-ns, -np.ones_like(ns)])
    coef, *_ = np.linalg.lstsq(A, np.log(values), rcond=None)
    resid = float(np.sum((A @ coef - np.log(values)) ** 2))
    return ExponentialFit(float(coef[0]), float(coef[1]), resid)


@dataclass
class SurvivalCurve:
    times: np.ndarray
    values: np.ndarray
    meta: dict = field(default_factory=dict)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "sp"])
        for t, s in zip(self.times, self.values):
            w.writerow([repr(float(t)), repr(float(s))])
        return buf.getvalue()

    def header_json(self) -> str:
        return json.dumps(self.meta, sort_keys=True, indent=2)


@dataclass
class RampDip:
    dip_time: float | None
    dip_value: float | None
    settle_time: float | None
    long_time_mean: float


def ramp_dip_scan(e: EvolutionEngine, psi0: np.ndarray, t_grid) -> SurvivalCurve:
    t_grid = np.asarray(t_grid, dtype=float)
    if np.any(np.diff(t_grid) < 0):
        raise ValueError("time grid must be ascending")
    return SurvivalCurve(t_grid, e.survival_many(psi0, t_grid))


def analyze_ramp_dip(
    curve: SurvivalCurve,
    long_window: tuple[float, float] = (100.0, 1000.0),
    factor: float = 2.0,
    smooth: float = 10 ** 0.15,
) -> RampDip:
    """Locate the correlation-hole minimum and the end of the ramp-dip structure.

    The curve is smoothed by a running mean over the log-time window
    ``[t / smooth, t * smooth]``.  The settle time is the first time after which
    the smoothed curve remains within ``factor`` of the long-time mean all the way
    to the start of ``long_window``.  The dip is the smoothed minimum before the
    settle time, reported only if it lies below the long-time mean.
    """
    t, s = curve.times, curve.values
    lo, hi = long_window
    sel = (t >= lo) & (t <= hi)
    mean = float(np.mean(s[sel])) if np.any(sel) else float(np.mean(s[len(s) // 2:]))
    if mean <= 0:
        return RampDip(None, None, None, mean)
    sm = _log_running_mean(t, s, smooth)
    inside = (sm <= factor * mean) & (sm >= mean / factor)
    stop = int(np.searchsorted(t, lo, side="left"))
    settle_idx = None
    for k in range(min(stop, len(t)) - 1, -1, -1):
        if not inside[k]:
            break
        settle_idx = k
    settle = float(t[settle_idx]) if settle_idx is not None else None
    dip_time = dip_value = None
    end = settle_idx if settle_idx is not None else stop
    if end > 0:
        k = int(np.argmin(sm[:end]))
        if sm[k] < mean:
            dip_time, dip_value = float(t[k]), float(sm[k])
    return RampDip(dip_time, dip_value, settle, mean)


def _log_running_mean(t: np.ndarray, s: np.ndarray, ratio: float) -> np.ndarray:
    if ratio <= 1 or len(t) < 2:
        return s.copy()
    cs = np.concatenate([[0.0], np.cumsum(s)])
    lo = np.searchsorted(t, t / ratio, side="left")
    hi = np.searchsorted(t, t * ratio, side="right")
    return (cs[hi] - cs[lo]) / (hi - lo)
