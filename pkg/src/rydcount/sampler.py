"""RydSamp: solution sampling by quenching an atom register for random times.

Three protocols are provided:

* ``fi``  fixed input, every evolution starts from the all-zeros state;
* ``ff``  feed-forward, every measured bitstring seeds the next evolution;
* ``pff`` practical feed-forward, ``shots_per_step`` measurements per evolution,
  one of which (picked uniformly) seeds the next evolution, all of which are kept.

Randomness comes from a single root seed split into independent per-purpose
streams, so enabling e.g. time spacing never shifts the measurement stream.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .evolution import EvolutionEngine, basis_state
from .spectrum import ConstrainedBasis

PROTOCOLS = ("fi", "ff", "pff")
_PURPOSES = {"times": 0, "measure": 1, "pick": 2, "oracle": 3}


class SamplerError(ValueError):
    pass


@dataclass(frozen=True)
class SamplerConfig:
    t_min: float = 10.0
    t_max: float = 1000.0
    n_samp: int = 1000
    protocol: str = "fi"
    k: int | None = None
    shots_per_step: int = 100
    seed: int = 0
    enforce_heisenberg_spacing: bool = False

    def __post_init__(self):
        if self.protocol not in PROTOCOLS:
            raise SamplerError(f"unknown protocol {self.protocol!r}")
        if not (0 <= self.t_min <= self.t_max):
            raise SamplerError("need 0 <= t_min <= t_max")
        if self.n_samp < 1:
            raise SamplerError("n_samp must be >= 1")
        if self.shots_per_step < 1:
            raise SamplerError("shots_per_step must be >= 1")
        if self.k is not None and self.k < 1:
            raise SamplerError("k must be >= 1")

    @property
    def steps(self) -> int:
        """Number of evolutions for the feed-forward protocols."""
        if self.k is not None:
            return self.k
        if self.protocol == "pff":
            return max(1, math.ceil(self.n_samp / self.shots_per_step))
        return self.n_samp

    def with_(self, **kw) -> "SamplerConfig":
        return SamplerConfig(**{**asdict(self), **kw})


class Streams:
    """Per-purpose generators derived from one root seed and a key path."""

    def __init__(self, seed: int, *key: int):
        self.seed = int(seed)
        self.key = tuple(int(k) for k in key)
        self._gens: dict[str, np.random.Generator] = {}

    def __getitem__(self, purpose: str) -> np.random.Generator:
        if purpose not in self._gens:
            ss = np.random.SeedSequence(self.seed, spawn_key=(*self.key, _PURPOSES[purpose]))
            self._gens[purpose] = np.random.Generator(np.random.PCG64(ss))
        return self._gens[purpose]

    def child(self, *key: int) -> "Streams":
        return Streams(self.seed, *self.key, *key)


def _streams(cfg: SamplerConfig, rng: Streams | None) -> Streams:
    return Streams(cfg.seed) if rng is None else rng


@dataclass
class SampleSet:
    n: int
    counts: dict[str, int]
    meta: dict = field(default_factory=dict)

    @property
    def total(self) -> int:
        return sum(self.counts.values())

    @classmethod
    def from_indices(cls, basis: ConstrainedBasis, idx, meta: dict | None = None) -> "SampleSet":
        uniq, cnt = np.unique(np.asarray(idx, dtype=np.int64), return_counts=True)
        counts = {basis.bitstring(int(u)): int(c) for u, c in zip(uniq, cnt)}
        return cls(basis.n, dict(sorted(counts.items())), meta or {})

    def merged(self, other: "SampleSet") -> "SampleSet":
        counts = dict(self.counts)
        for b, c in other.counts.items():
            counts[b] = counts.get(b, 0) + c
        return SampleSet(self.n, dict(sorted(counts.items())), dict(self.meta))

    def probabilities(self, basis: ConstrainedBasis) -> np.ndarray:
        """Empirical distribution as a dense vector over ``basis``."""
        vec = np.zeros(len(basis))
        if not self.counts:
            return vec
        keys = np.array([int(b, 2) if b else 0 for b in self.counts], dtype=np.int64)
        pos = basis.index(keys)
        if np.any(pos < 0):
            bad = [b for b, p in zip(self.counts, np.atleast_1d(pos)) if p < 0]
            raise SamplerError(f"samples outside the solution set: {bad[:3]}")
        np.add.at(vec, pos, np.fromiter(self.counts.values(), dtype=float))
        return vec / vec.sum()

    def to_json(self, config: dict | None = None, seed: int | None = None) -> str:
        out = {"counts": self.counts, "total": self.total}
        if config is not None:
            out["config"] = config
        if seed is not None:
            out["seed"] = seed
        return json.dumps(out, sort_keys=True, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "SampleSet":
        data = json.loads(text)
        counts = {str(b): int(c) for b, c in data["counts"].items()}
        n = len(next(iter(counts))) if counts else 0
        if sum(counts.values()) != int(data["total"]):
            raise SamplerError("total does not match counts")
        return cls(n, dict(sorted(counts.items())), {"config": data.get("config"), "seed": data.get("seed")})


@dataclass
class DistributionStats:
    basis: ConstrainedBasis
    probs: np.ndarray

    @property
    def eta(self) -> float:
        return non_uniformity(self, self.basis)

    @property
    def support_size(self) -> int:
        return int(np.count_nonzero(self.probs))

    def as_dict(self) -> dict[str, float]:
        return {self.basis.bitstring(k): float(p) for k, p in enumerate(self.probs) if p > 0}


def non_uniformity(d, basis: ConstrainedBasis) -> float:
    """Total-variation distance to the uniform distribution over ``basis``."""
    if isinstance(d, SampleSet):
        p = d.probabilities(basis)
    elif isinstance(d, DistributionStats):
        p = d.probs
    else:
        p = np.asarray(d, dtype=float)
    if p.shape != (len(basis),):
        raise SamplerError("distribution does not match the basis")
    return float(0.5 * np.abs(p - 1.0 / len(basis)).sum())


def draw_times(cfg: SamplerConfig, rng: Streams | np.random.Generator | None = None,
               t_h: float | None = None, count: int | None = None) -> np.ndarray:
    """``count`` (default ``n_samp``) i.i.d. uniform times in ``[t_min, t_max]``.

    With ``enforce_heisenberg_spacing`` the draw is conditioned on every pair of
    times being at least ``t_h`` apart (sampled directly by the gap-shift
    construction rather than by rejection).
    """
    count = cfg.n_samp if count is None else count
    gen = rng["times"] if isinstance(rng, Streams) else (rng or Streams(cfg.seed)["times"])
    width = cfg.t_max - cfg.t_min
    if not cfg.enforce_heisenberg_spacing or count == 1:
        return cfg.t_min + width * gen.random(count)
    if t_h is None:
        raise SamplerError("Heisenberg spacing requested without a Heisenberg time")
    if count * t_h > width:
        raise SamplerError(
            f"cannot place {count} times {t_h:.3g} apart in a window of {width:.3g}; "
            "enlarge [t_min, t_max] or disable spacing"
        )
    free = width - (count - 1) * t_h
    base = np.sort(free * gen.random(count))
    spaced = cfg.t_min + base + t_h * np.arange(count)
    return gen.permutation(spaced)


def _draw_categorical(probs: np.ndarray, u: np.ndarray) -> np.ndarray:
    """One draw per column of ``probs`` using the uniforms ``u``."""
    cum = np.cumsum(probs, axis=0)
    target = u * cum[-1]
    return np.minimum((cum < target).sum(axis=0), probs.shape[0] - 1)


def _chunk(dim: int) -> int:
    return max(1, min(4096, 4_000_000 // max(dim, 1)))


def ryd_samp_fi(engine: EvolutionEngine, basis: ConstrainedBasis, cfg: SamplerConfig,
                rng: Streams | None = None) -> SampleSet:
    """One measurement of the evolved all-zeros state per random time."""
    rng = _streams(cfg, rng)
    _check_engine(engine, basis)
    times = draw_times(cfg, rng, engine.heisenberg_time() if cfg.enforce_heisenberg_spacing else None)
    psi0 = basis_state(len(basis), 0)
    meas = rng["measure"]
    out = np.empty(len(times), dtype=np.int64)
    step = _chunk(len(basis))
    for s in range(0, len(times), step):
        probs = engine.probabilities(psi0, times[s:s + step])
        out[s:s + step] = _draw_categorical(probs, meas.random(probs.shape[1]))
    return SampleSet.from_indices(basis, out, {"protocol": "fi", "n_evolutions": len(times)})


def effective_distribution_fi(engine: EvolutionEngine, basis: ConstrainedBasis, times) -> DistributionStats:
    """Exact time-averaged output distribution of the fixed-input protocol."""
    times = np.asarray(times, dtype=float)
    if times.size == 0:
        raise SamplerError("need at least one time")
    _check_engine(engine, basis)
    probs = engine.mean_probabilities(basis_state(len(basis), 0), times)
    return DistributionStats(basis, probs / probs.sum())


def sample_distribution(d: DistributionStats, n_samp: int, gen: np.random.Generator) -> SampleSet:
    """Classical categorical sampling of a stored distribution."""
    cum = np.cumsum(d.probs)
    idx = np.minimum(np.searchsorted(cum, gen.random(n_samp) * cum[-1], side="right"), len(cum) - 1)
    return SampleSet.from_indices(d.basis, idx, {"protocol": "classical"})


@dataclass
class FFTrajectory:
    starts: list[int]  # basis index of the initial state of each step
    times: np.ndarray
    picks: list[int]  # basis index fed forward after each step


def _feed_forward(engine, basis, cfg, rng, shots) -> tuple[SampleSet, FFTrajectory]:
    rng = _streams(cfg, rng)
    _check_engine(engine, basis)
    k = cfg.steps
    times = draw_times(cfg, rng, engine.heisenberg_time() if cfg.enforce_heisenberg_spacing else None, count=k)
    meas, pick = rng["measure"], rng["pick"]
    start = 0
    samples = np.empty(k * shots, dtype=np.int64)
    starts, picks = [], []
    for s in range(k):
        starts.append(start)
        p = engine.probabilities(basis_state(len(basis), start), times[s:s + 1])[:, 0]
        cum = np.cumsum(p)
        got = np.minimum(np.searchsorted(cum, meas.random(shots) * cum[-1], side="right"), len(cum) - 1)
        samples[s * shots:(s + 1) * shots] = got
        start = int(got[pick.integers(shots)]) if shots > 1 else int(got[0])
        picks.append(start)
    traj = FFTrajectory(starts, times, picks)
    meta = {"protocol": cfg.protocol, "n_evolutions": k, "shots_per_step": shots}
    return SampleSet.from_indices(basis, samples, meta), traj


def ryd_samp_ff(engine: EvolutionEngine, basis: ConstrainedBasis, cfg: SamplerConfig,
                rng: Streams | None = None) -> tuple[SampleSet, list[str]]:
    """Ideal feed-forward chain of ``k`` single-shot evolutions.

    Returns the samples and the measured bitstrings in trajectory order.
    """
    ss, traj = _feed_forward(engine, basis, cfg, rng, shots=1)
    return ss, [basis.bitstring(i) for i in traj.picks]


def ff_trajectory(engine, basis, cfg, rng=None, shots: int = 1) -> tuple[SampleSet, FFTrajectory]:
    """Feed-forward run returning the full trajectory record."""
    return _feed_forward(engine, basis, cfg, rng, shots)


def practical_ff(engine: EvolutionEngine, basis: ConstrainedBasis, cfg: SamplerConfig,
                 rng: Streams | None = None) -> SampleSet:
    ss, traj = _feed_forward(engine, basis, cfg, rng, shots=cfg.shots_per_step)
    ss.meta["trajectory"] = traj
    return ss


def trajectory_distribution(engine: EvolutionEngine, basis: ConstrainedBasis, starts, times,
                            cumulative: bool = False) -> DistributionStats | list[DistributionStats]:
    """Exact output distribution of the mixed initial state ``(1/k) sum_s |s><s|``.

    Each start state is evolved for its own time.  With ``cumulative=True`` the
    distributions after 1, 2, ..., k steps are returned.
    """
    times = np.asarray(times, dtype=float)
    if len(starts) != len(times) or len(times) == 0:
        raise SamplerError("need one time per start state")
    acc = np.zeros(len(basis))
    seq = []
    for j, (s, t) in enumerate(zip(starts, times), start=1):
        acc += engine.probabilities(basis_state(len(basis), int(s)), [t])[:, 0]
        if cumulative:
            seq.append(DistributionStats(basis, acc / j))
    return seq if cumulative else DistributionStats(basis, acc / len(times))


def uniform_sample(basis: ConstrainedBasis, n_samp: int, gen: np.random.Generator) -> SampleSet:
    """Exactly uniform samples from the solution set (classical oracle)."""
    return SampleSet.from_indices(basis, gen.integers(len(basis), size=n_samp), {"protocol": "oracle"})


def run_protocol(engine, basis, cfg: SamplerConfig, rng: Streams | None = None) -> SampleSet:
    if cfg.protocol == "fi":
        return ryd_samp_fi(engine, basis, cfg, rng)
    if cfg.protocol == "ff":
        return ryd_samp_ff(engine, basis, cfg, rng)[0]
    return practical_ff(engine, basis, cfg, rng)


def _check_engine(engine: EvolutionEngine, basis: ConstrainedBasis):
    if engine.h.basis_kind != "constrained" or engine.dim != len(basis):
        raise SamplerError("sampler needs an engine over the constrained basis")
