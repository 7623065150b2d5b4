"""RydCount: sampling-based approximate counting by self-reduction, plus exact oracles."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Mapping

import numpy as np

from .evolution import EvolutionEngine
from .instance import BlockadeGraph, Register, assignment_to_int, fix_one, satisfies_labels
from .sampler import SampleSet, SamplerConfig, Streams, run_protocol, uniform_sample
from .spectrum import ResourceError, build_pxp, enumerate_solutions

BRUTE_FORCE_CAP = 24
DP_WIDTH_CAP = 20


class CountError(ValueError):
    pass


@dataclass
class Step:
    label: int
    p: float
    n_samp: int
    active: int


@dataclass
class CountEstimate:
    log_kappa: float = 0.0
    steps: list[Step] = field(default_factory=list)
    final_assignment: dict[int, int] = field(default_factory=dict)
    terminated_early: bool = False

    @property
    def kappa(self) -> float:
        return math.exp(self.log_kappa)

    def to_dict(self) -> dict:
        return {
            "kappa": self.kappa,
            "log_kappa": self.log_kappa,
            "steps": [asdict(s) for s in self.steps],
            "final_assignment": {str(k): v for k, v in sorted(self.final_assignment.items())},
            "terminated_early": self.terminated_early,
        }


def likelihoods(s: SampleSet, labels) -> dict[int, float]:
    """Fraction of samples with each variable set to 1.

    Bitstrings are indexed by position over ``labels``; position 0 is the
    rightmost character.
    """
    labels = list(labels)
    if s.total == 0:
        raise CountError("empty sample set")
    n = len(labels)
    ones = np.zeros(n)
    for b, c in s.counts.items():
        if len(b) != n:
            raise CountError(f"bitstring {b!r} does not match {n} active labels")
        x = assignment_to_int(b)
        ones += c * ((x >> np.arange(n)) & 1)
    return {lab: float(ones[i] / s.total) for i, lab in enumerate(labels)}


def select_variable(p: Mapping[int, float]) -> int | None:
    """Label with the largest likelihood (smallest label on ties); ``None`` if all are zero."""
    if not p:
        raise CountError("empty likelihood vector")
    best = max(p.values())
    if best <= 0:
        return None
    return min(lab for lab, v in p.items() if v == best)


Sampler = Callable[[BlockadeGraph, int], SampleSet]


def _self_reduce(r: Register, n_samp: int, sample: Sampler) -> CountEstimate:
    est = CountEstimate()
    step = 0
    while r.graph.n > 0:
        ss = sample(r.graph, step)
        p = likelihoods(ss, r.graph.labels)
        c = select_variable(p)
        if c is None:
            est.terminated_early = True
            break
        est.steps.append(Step(c, p[c], ss.total, r.graph.n))
        est.log_kappa -= math.log(p[c])
        r = fix_one(r, c)
        step += 1
    est.final_assignment = r.full_assignment()
    if not satisfies_labels(r.original, est.final_assignment):
        raise CountError("witness assignment violates the instance")
    return est


def quantum_sampler(cfg: SamplerConfig, omega: float = 1.0, exact_cap: int = 4096) -> Sampler:
    """Sampler that quenches the PXP model of the current register."""

    def sample(g: BlockadeGraph, step: int) -> SampleSet:
        basis = enumerate_solutions(g)
        engine = EvolutionEngine(build_pxp(g, basis, omega), exact_cap=exact_cap)
        return run_protocol(engine, basis, cfg, Streams(cfg.seed, step))

    return sample


def default_n_samp(n: int) -> int:
    return max(1, n ** 4)


def ryd_count(r: Register | BlockadeGraph, cfg: SamplerConfig, omega: float = 1.0) -> CountEstimate:
    """Estimate the number of independent sets by repeated sampling and fixing.

    Each round samples the current register, fixes the most likely variable to 1
    (its neighbours to 0) and divides the running estimate by that likelihood.
    """
    if isinstance(r, BlockadeGraph):
        r = Register.from_graph(r)
    if r.fixed:
        raise CountError("register must be fully active")
    return _self_reduce(r, cfg.n_samp, quantum_sampler(cfg, omega))


def ryd_count_with_oracle_sampler(r: Register | BlockadeGraph, n_samp: int, seed: int = 0) -> CountEstimate:
    """Same loop as :func:`ryd_count` with exactly uniform samples."""
    if isinstance(r, BlockadeGraph):
        r = Register.from_graph(r)

    def sample(g: BlockadeGraph, step: int) -> SampleSet:
        return uniform_sample(enumerate_solutions(g), n_samp, Streams(seed, step)["oracle"])

    return _self_reduce(r, n_samp, sample)


def exact_count_bruteforce(g: BlockadeGraph, cap: int = BRUTE_FORCE_CAP) -> int:
    """Count independent sets by walking the constrained backtracking tree."""
    if g.n > cap:
        raise ResourceError(f"brute force limited to n <= {cap}, got {g.n}")
    nbr = g.neighbor_masks()
    n = g.n

    def walk(v: int, blocked: int) -> int:
        if v == n:
            return 1
        total = walk(v + 1, blocked)
        if not (blocked >> v) & 1:
            total += walk(v + 1, blocked | nbr[v])
        return total

    return walk(0, 0)


def _layers_by_axis(g: BlockadeGraph, axis: int) -> list[list[int]] | None:
    keys = sorted({round(c[axis], 9) for c in g.coords})
    where = {x: k for k, x in enumerate(keys)}
    cols: list[list[int]] = [[] for _ in keys]
    for v, c in enumerate(g.coords):
        cols[where[round(c[axis], 9)]].append(v)
    col_of = {v: k for k, col in enumerate(cols) for v in col}
    if all(abs(col_of[i] - col_of[j]) <= 1 for i, j in g.edges):
        return cols
    return None


def _layers_by_bfs(g: BlockadeGraph) -> list[list[int]]:
    adj = g.neighbors()
    seen = [False] * g.n
    cols: list[list[int]] = []
    for root in range(g.n):
        if seen[root]:
            continue
        seen[root] = True
        frontier = [root]
        while frontier:
            cols.append(frontier)
            nxt = []
            for u in frontier:
                for w in adj[u]:
                    if not seen[w]:
                        seen[w] = True
                        nxt.append(w)
            frontier = nxt
        cols.append([])  # components must not touch
    return cols


def _columns(g: BlockadeGraph) -> list[list[int]]:
    """Vertex layers such that edges only join equal or adjacent layers.

    Coordinate columns (either axis) are preferred; BFS layers always qualify.
    The narrowest candidate wins.
    """
    candidates = []
    if g.coords is not None:
        candidates += [c for c in (_layers_by_axis(g, 0), _layers_by_axis(g, 1)) if c]
    candidates.append(_layers_by_bfs(g))
    return min(candidates, key=lambda cols: max(len(c) for c in cols))


def exact_count_dp(g: BlockadeGraph, width_cap: int = DP_WIDTH_CAP) -> int:
    """Transfer-matrix count over column states with exact integer arithmetic.

    For each column the independent subsets are enumerated; compatibility with the
    previous column is a disjointness test against the neighbourhood of the new
    subset, evaluated for all subsets at once with a subset-sum (zeta) transform.
    """
    if g.n == 0:
        return 1
    cols = _columns(g)
    width = max(len(c) for c in cols)
    if width > width_cap:
        raise ResourceError(f"column width {width} exceeds cap {width_cap}")
    nbr = g.neighbors()
    prev_col: list[int] = []
    prev_f = np.array([1], dtype=object)  # indexed by subset mask of prev column
    for col in cols:
        pos_prev = {v: k for k, v in enumerate(prev_col)}
        pos_cur = {v: k for k, v in enumerate(col)}
        w = len(col)
        inner = [0] * w
        cross = [0] * w
        for k, v in enumerate(col):
            for u in nbr[v]:
                if u in pos_cur:
                    inner[k] |= 1 << pos_cur[u]
                elif u in pos_prev:
                    cross[k] |= 1 << pos_prev[u]
        # zeta transform: g[mask] = sum over subsets s of mask of prev_f[s]
        zeta = prev_f.copy()
        for b in range(len(prev_col)):
            step = 1 << b
            z = zeta.reshape(-1, 2 * step)
            z[:, step:] = z[:, step:] + z[:, :step]
        full_prev = (1 << len(prev_col)) - 1
        f = np.zeros(1 << w, dtype=object)
        # enumerate independent subsets of the column incrementally
        subsets = [(0, 0)]  # (mask, cross-neighbourhood)
        for k in range(w):
            lower = inner[k] & ((1 << k) - 1)
            subsets += [(m | (1 << k), c | cross[k]) for m, c in subsets if not m & lower]
        for m, c in subsets:
            f[m] = zeta[full_prev & ~c]
        prev_col, prev_f = col, f
    return int(sum(prev_f))


def relative_error(estimate: float, exact: int) -> float:
    return abs(estimate - exact) / exact


CSV_FIELDS = ["instance", "n", "protocol", "n_samp", "kappa", "exact", "rel_error", "seed"]


def summary_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=CSV_FIELDS, lineterminator="\n")
    w.writeheader()
    for row in rows:
        w.writerow({k: row.get(k, "") for k in CSV_FIELDS})
    return buf.getvalue()


def estimate_json(est: CountEstimate, **extra) -> str:
    return json.dumps({**est.to_dict(), **extra}, sort_keys=True, indent=2)
