import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rydcount.counter import (
    CountError,
    _self_reduce,
    exact_count_bruteforce,
    exact_count_dp,
    likelihoods,
    relative_error,
    ryd_count,
    ryd_count_with_oracle_sampler,
    select_variable,
    summary_csv,
)
from rydcount.instance import (
    BlockadeGraph,
    Register,
    build_chain,
    build_grid,
    satisfies_labels,
    unit_disk_graph,
)
from rydcount.sampler import SampleSet, SamplerConfig
from rydcount.spectrum import ResourceError, enumerate_solutions


def fib(k):
    a, b = 0, 1
    for _ in range(k):
        a, b = b, a + b
    return a


@st.composite
def graphs(draw, max_n=12):
    n = draw(st.integers(0, max_n))
    pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
    edges = draw(st.lists(st.sampled_from(pairs), unique=True)) if pairs else []
    return BlockadeGraph(n, tuple(edges))


def test_exact_examples():
    assert exact_count_bruteforce(BlockadeGraph(0, ())) == 1
    assert exact_count_bruteforce(build_chain(1)) == 2
    assert exact_count_bruteforce(build_chain(5)) == 13
    assert exact_count_bruteforce(build_grid(2, 2)) == 7
    assert exact_count_bruteforce(build_grid(3, 3)) == 63
    assert exact_count_dp(build_grid(4, 4)) == 1234
    assert exact_count_dp(build_chain(18)) == 6765
    assert exact_count_dp(BlockadeGraph(3, ())) == 8
    with pytest.raises(ResourceError):
        exact_count_bruteforce(build_chain(30))


def test_dp_square_grids():
    # independent sets of the k x k grid graph, k = 1..8
    known = [2, 7, 63, 1234, 55447, 5598861, 1280128950, 660647962955]
    assert [exact_count_dp(build_grid(k, k)) for k in range(1, 9)] == known
    assert exact_count_dp(build_chain(60)) == fib(62)


def test_dp_matches_bruteforce_on_corpus(corpus):
    assert len(corpus) >= 50
    for name, g in corpus.items():
        assert exact_count_dp(g) == exact_count_bruteforce(g), name


@settings(max_examples=80, deadline=None)
@given(graphs())
def test_dp_matches_bruteforce_random(g):
    # graphs without coordinates fall back to BFS layering
    assert exact_count_dp(g) == exact_count_bruteforce(g)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 6), st.integers(0, 3)), min_size=1, max_size=14, unique=True))
def test_dp_unit_disk(points):
    g = unit_disk_graph([(float(x), float(y)) for x, y in points], 1.5)
    assert exact_count_dp(g) == exact_count_bruteforce(g) == len(enumerate_solutions(g))


def test_likelihoods_examples():
    ss = SampleSet(3, {"001": 2, "100": 1, "000": 1})
    assert likelihoods(ss, [0, 1, 2]) == {0: 0.5, 1: 0.0, 2: 0.25}
    # position i of the bitstring (from the right) belongs to labels[i]
    assert likelihoods(ss, [7, 4, 9]) == {7: 0.5, 4: 0.0, 9: 0.25}
    with pytest.raises(CountError):
        likelihoods(SampleSet(3, {}), [0, 1, 2])
    with pytest.raises(CountError):
        likelihoods(ss, [0, 1])


def test_select_variable():
    assert select_variable({3: 0.2, 1: 0.4, 2: 0.4}) == 1
    assert select_variable({5: 0.0, 6: 0.0}) is None
    with pytest.raises(CountError):
        select_variable({})


def exact_marginal_sampler(g, step):
    b = enumerate_solutions(g)
    return SampleSet(g.n, {b.bitstring(k): 1 for k in range(len(b))})


@pytest.mark.parametrize("g", [build_chain(1), build_chain(7), build_grid(3, 3), build_grid(3, 4)])
def test_exact_marginals_reproduce_count(g):
    est = _self_reduce(Register.from_graph(g), 0, exact_marginal_sampler)
    assert est.kappa == pytest.approx(exact_count_bruteforce(g), rel=1e-12)
    assert satisfies_labels(g, est.final_assignment)
    assert sorted(est.final_assignment) == list(range(g.n))
    assert not est.terminated_early


def test_empty_register():
    est = ryd_count_with_oracle_sampler(BlockadeGraph(0, ()), 10)
    assert est.kappa == 1.0 and est.steps == []


def test_all_zero_termination():
    def zeros(g, step):
        return SampleSet(g.n, {"0" * g.n: 5})

    est = _self_reduce(Register.from_graph(build_chain(4)), 5, zeros)
    assert est.terminated_early and est.kappa == 1.0
    assert est.final_assignment == {0: 0, 1: 0, 2: 0, 3: 0}


def test_oracle_single_vertex_and_square():
    ks = [ryd_count_with_oracle_sampler(build_chain(1), 1000, seed=s).kappa for s in range(20)]
    assert np.median(ks) == pytest.approx(2.0, rel=0.1)
    ks = [ryd_count_with_oracle_sampler(build_grid(2, 2), 4000, seed=s).kappa for s in range(20)]
    assert np.median(ks) == pytest.approx(7.0, rel=0.05)


def signed_errors(g, exact, n_samp, runs=100):
    return np.array([ryd_count_with_oracle_sampler(g, n_samp, seed=s).kappa / exact - 1
                     for s in range(runs)])


def test_oracle_statistics_chain10():
    # taking the argmax of noisy likelihoods overestimates p, so kappa runs low;
    # the bias shrinks like the sampling noise, 1/sqrt(n_samp)
    coarse = signed_errors(build_chain(10), 144, 10_000)
    fine = signed_errors(build_chain(10), 144, 100_000)
    assert -0.08 < np.mean(coarse) < 0
    assert -0.025 < np.mean(fine) < 0
    assert 2.0 < np.mean(coarse) / np.mean(fine) < 5.0
    assert np.mean(np.abs(fine) <= 0.05) >= 0.95


def test_oracle_witness_is_valid():
    g = build_grid(3, 4)
    est = ryd_count_with_oracle_sampler(g, 2000, seed=1)
    assert satisfies_labels(g, est.final_assignment)
    assert all(s.p > 0 for s in est.steps)
    assert est.log_kappa == pytest.approx(-sum(math.log(s.p) for s in est.steps))


def test_oracle_reproducible():
    a = ryd_count_with_oracle_sampler(build_chain(8), 500, seed=3)
    b = ryd_count_with_oracle_sampler(build_chain(8), 500, seed=3)
    assert a.to_dict() == b.to_dict()


def test_quantum_count_small():
    g = build_chain(6)
    cfg = SamplerConfig(protocol="pff", n_samp=6 ** 4, shots_per_step=6, seed=0)
    est = ryd_count(g, cfg)
    assert satisfies_labels(g, est.final_assignment)
    assert relative_error(est.kappa, 21) < 0.3
    assert ryd_count(g, cfg).to_dict() == est.to_dict()


def test_quantum_count_rejects_partial_register():
    from rydcount.instance import fix_zero

    r = fix_zero(Register.from_graph(build_chain(3)), 0)
    with pytest.raises(CountError):
        ryd_count(r, SamplerConfig())


def test_summary_csv_and_json():
    text = summary_csv([{"instance": "c", "n": 3, "protocol": "pff", "kappa": 5.0, "exact": 5}])
    lines = text.splitlines()
    assert lines[0] == "instance,n,protocol,n_samp,kappa,exact,rel_error,seed"
    assert lines[1] == "c,3,pff,,5.0,5,,"
    d = ryd_count_with_oracle_sampler(build_chain(3), 100).to_dict()
    assert json.loads(json.dumps(d)) == d
