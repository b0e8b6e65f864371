from fractions import Fraction as F

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from brwre import presets
from brwre.environment import EnvironmentRealization
from brwre.model import EnvironmentLaw, OffspringVector, SiteLaw
from brwre.simulator import (
    BatchSimulator,
    PopulationState,
    SaturationOverflow,
    SimConfig,
    _LawSampler,
    first_hit,
    first_hits,
    run,
    step,
    write_trajectory,
)


def drift_law(d=1):
    s = presets.nn_steps() if d == 1 else presets.exx_steps()
    e = (1,) if d == 1 else (1, 0)
    w = SiteLaw.of([(OffspringVector.of(s, {e: 1}), F(1))])
    return EnvironmentLaw(s, (w,), (F(1),))


def coin_law():
    s = presets.nn_steps()
    w = SiteLaw.of([(OffspringVector.of(s, {(1,): 1}), F(1, 2)), (OffspringVector.of(s, {(-1,): 1}), F(1, 2))])
    return EnvironmentLaw(s, (w,), (F(1),))


def test_deterministic_drift_shifts():
    env = EnvironmentRealization(drift_law(), 0)
    res = run(env, SimConfig(horizon=7), (0,))
    assert res.final.as_dict() == {(7,): 1}
    assert all(r.total == 1 for r in res.records)


def test_horizon_zero():
    env = EnvironmentRealization(presets.exx_q1(), 0)
    res = run(env, SimConfig(horizon=0), (0, 0))
    assert res.sets[0].B == res.sets[0].barB == {(0, 0)}


def test_binomial_partition():
    env = EnvironmentRealization(coin_law(), 0)
    right = []
    for seed in range(10_000):
        st_ = PopulationState(np.array([[0]]), np.array([10], dtype=object), 0, np.array([[0]]))
        nxt = step(st_, env, SimConfig(walk_seed=seed)).as_dict()
        right.append(nxt.get((1,), 0))
    obs = np.bincount(right, minlength=11)
    exp = stats.binom.pmf(np.arange(11), 10, 0.5) * len(right)
    # pool sparse tails
    obs = np.r_[obs[:2].sum(), obs[2:9], obs[9:].sum()]
    exp = np.r_[exp[:2].sum(), exp[2:9], exp[9:].sum()]
    assert stats.chisquare(obs, exp).pvalue > 0.01


def test_residual_split_preserves_totals_and_means():
    law = presets.exx_q1()
    sampler = _LawSampler(law.support[0], law.step_set)
    k = 10**9 + 7
    n = 2000
    cfg = SimConfig(mode="residual", residual_threshold=1000)
    out = sampler.split(np.array([k] * n, dtype=object), [np.arange(n), np.zeros(n, dtype=np.int64)],
                        np.full(n, 5, dtype=np.uint64), cfg)
    assert all(sum(row) == k for row in out)
    for j, p in enumerate(sampler.probs):
        col = np.array([int(x) - (k * p.numerator) // p.denominator for x in out[:, j]], dtype=float)
        frac = float(k * p - (k * p.numerator) // p.denominator)
        assert abs(col.mean() - frac) <= 5 * max(col.std(), 1e-12) / np.sqrt(n) + 1e-12


def test_residual_counts_exceed_int64():
    env = EnvironmentRealization(presets.d1_shape(), 3)
    res = run(env, SimConfig(mode="residual", horizon=60), (0,), keep_sets=False)
    assert res.final.total > 2**63
    assert res.records[-1].total == res.final.total


def test_exact_and_residual_agree_below_threshold():
    env = EnvironmentRealization(presets.exx_q2(), 4)
    a = run(env, SimConfig(mode="exact", horizon=12, walk_seed=3), (0, 0), keep_sets=False)
    b = run(env, SimConfig(mode="residual", horizon=12, walk_seed=3, residual_threshold=10**9), (0, 0), keep_sets=False)
    assert a.final.as_dict() == b.final.as_dict()


def test_flat_edge_quadrant_is_triangle():
    env = EnvironmentRealization(presets.flatedge(), 11)
    n = 20
    res = run(env, SimConfig(mode="residual", horizon=n), (0, 0))
    quad = {x for x in res.sets[n].B if x[0] >= 0 and x[1] >= 0}
    assert quad == {(i, j) for i in range(n + 1) for j in range(n + 1 - i)}


def test_first_hit_basics():
    env = EnvironmentRealization(drift_law(2), 0)
    cfg = SimConfig(horizon=50)
    assert first_hit(env, cfg, (0, 0), (0, 0)) == 0
    assert first_hit(env, cfg, (0, 0), (9, 0)) == 9
    assert first_hit(env, cfg, (0, 0), (0, 1)) is None


def test_recurrent_model_hits_neighbour():
    law = presets.exx_q1()
    env = EnvironmentRealization(law, 0)
    R = 1000
    ws = [s for s in range(R)]
    es = [10**6 + s for s in range(R)]
    hits, _ = first_hits(env, SimConfig(mode="residual", horizon=1000), (0, 0), [(1, 0)], ws, es)
    assert (hits >= 0).mean() >= 0.99


def test_restriction_discards():
    env = EnvironmentRealization(coin_law(), 0)
    cfg = SimConfig(horizon=30, restriction=frozenset({(-1,), (0,), (1,)}))
    res = run(env, cfg, (0,))
    for s in res.sets:
        assert s.B <= {(-1,), (0,), (1,)}
    assert res.final.total <= 1


def test_saturation_flag_and_error():
    env = EnvironmentRealization(presets.d1_shape(), 1)
    res = run(env, SimConfig(mode="residual", horizon=20, count_cap=1000), (0,), keep_sets=False)
    assert res.records[-1].saturated
    with pytest.raises(SaturationOverflow):
        run(env, SimConfig(mode="exact", horizon=20, count_cap=1000), (0,), keep_sets=False)


def test_trajectory_records(tmp_path):
    import json

    env = EnvironmentRealization(presets.qdecay(), 1)
    res = run(env, SimConfig(horizon=5), (0,), keep_sets=False)
    path = tmp_path / "t.ndjson"
    write_trajectory(res.records, path, res.mode)
    rows = [json.loads(line) for line in path.read_text().splitlines()]
    assert [r["n"] for r in rows] == list(range(6))
    assert set(rows[0]) == {"n", "totalCount", "occupiedCount", "visitedCount", "saturated", "mode"}
    assert isinstance(rows[-1]["totalCount"], str)


def test_batch_replicas_match_single_runs():
    law = presets.exx_q1()
    env = EnvironmentRealization(law, 8)
    cfg = SimConfig(mode="exact", horizon=6)
    sim = BatchSimulator(env, cfg, [(0, 0)], [1, 2, 3])
    for _ in range(6):
        sim.step()
    for r, seed in enumerate([1, 2, 3]):
        single = run(env, SimConfig(mode="exact", horizon=6, walk_seed=seed), (0, 0), keep_sets=False)
        assert sim.state(r).as_dict() == single.final.as_dict()


@settings(max_examples=15)
@given(st.sampled_from(sorted(presets.PRESETS)), st.integers(0, 2**32), st.integers(0, 2**32),
       st.sampled_from(["exact", "residual"]))
def test_integrity_properties(name, env_seed, walk_seed, mode):
    law = presets.build_preset(name)
    env = EnvironmentRealization(law, env_seed)
    d = law.dimension
    cfg = SimConfig(mode=mode, horizon=12, walk_seed=walk_seed, window=3)
    res = run(env, cfg, (0,) * d)
    L0 = law.step_set.L0
    totals = [r.total for r in res.records]
    assert all(b >= a for a, b in zip(totals, totals[1:]))
    for n, s in enumerate(res.sets):
        assert s.tildeB <= s.barB <= s.B
        assert all(max(abs(c) for c in y) <= L0 * n for y in s.B)
    again = run(env, cfg, (0,) * d)
    assert again.final.as_dict() == res.final.as_dict()
    assert [r.total for r in again.records] == totals


@pytest.mark.parametrize("n_rep", [1, 2, 4, 5, 8])
def test_every_replica_slice_is_populated(n_rep):
    law = presets.d1_shape()
    env = EnvironmentRealization(law, 0)
    sim = BatchSimulator(env, SimConfig(horizon=3), [(0,)], list(range(n_rep)))
    for _ in range(3):
        sim.step()
    sizes = [len(sim.replica_slice(sim.keys, r)) for r in range(n_rep)]
    assert sum(sizes) == len(sim.keys) and min(sizes) > 0
