from fractions import Fraction as F

import numpy as np
import pytest
from hypothesis import given, strategies as st

from helpers import random_law
from brwre import criteria, induced, presets
from brwre.environment import EnvironmentRealization
from brwre.model import EnvironmentLaw, OffspringVector, SiteLaw, check_condition_UE, unit_vectors

E1, E2, W1, W2 = (1, 0), (0, 1), (-1, 0), (0, -1)
seeds = st.integers(0, 2**32 - 1)
UNI = induced.SelectionRule(induced.UNIFORM)
PART = induced.SelectionRule(induced.PARTICLE_UNIFORM)


def v5_law():
    s = presets.exx_steps()
    v = OffspringVector.of(s, {E1: 1, E2: 2, W1: 1, W2: 1})
    return s, SiteLaw.of([(v, F(1))])


def test_step_law_examples():
    s, w = v5_law()
    assert induced.induced_step_law(w, s, UNI) == {E1: F(1, 4), E2: F(1, 4), W1: F(1, 4), W2: F(1, 4)}
    assert induced.induced_step_law(w, s, PART) == {E1: F(1, 5), E2: F(2, 5), W1: F(1, 5), W2: F(1, 5)}
    ext = induced.SelectionRule(induced.EXTREMAL, (1, 0))
    assert induced.induced_step_law(w, s, ext) == {E1: 1, E2: 0, W1: 0, W2: 0}


def test_extremal_ties_lexicographic():
    s, w = v5_law()
    diag = induced.SelectionRule(induced.EXTREMAL, (np.sqrt(0.5), np.sqrt(0.5)))
    law = induced.induced_step_law(w, s, diag)
    assert law[(0, 1)] == 1  # (0, 1) < (1, 0) lexicographically


def test_rule_validation():
    with pytest.raises(ValueError):
        induced.SelectionRule(induced.EXTREMAL, (1, 1))
    with pytest.raises(ValueError):
        induced.SelectionRule("greedy")


def test_q1_uniform_drifts_are_collinear():
    out = induced.classify_nestling(presets.exx_q1(), UNI)
    assert out.drifts == ((F(1, 4), 0), (F(-1, 8), 0))
    # both drifts lie on the first axis, so 0 sits on the hull boundary
    assert out.kind == induced.MARGINAL


def test_non_nestling_single_drift():
    s = presets.nn_steps()
    w = SiteLaw.of([(OffspringVector.of(s, {(1,): 1}), F(3, 4)), (OffspringVector.of(s, {(-1,): 1}), F(1, 4))])
    out = induced.classify_nestling(EnvironmentLaw(s, (w,), (F(1),)), UNI)
    assert out.kind == induced.NON_NESTLING
    assert out.witness == (-1,)
    s2, w5 = v5_law()
    d = SiteLaw.of([(OffspringVector.of(s2, {E1: 1}), F(1, 2)), (OffspringVector.of(s2, {E2: 1, W2: 1}), F(1, 2))])
    out2 = induced.classify_nestling(EnvironmentLaw(s2, (d,), (F(1),)), UNI)
    assert out2.kind == induced.NON_NESTLING
    assert sum(a * b for a, b in zip(out2.witness, out2.drifts[0])) < 0


def test_one_dimensional_both_signs_nestle():
    t = presets.trap_laws(F(1, 10))
    law = EnvironmentLaw(presets.nn_steps(), (t["omega1"], t["omega2"]), (F(1, 2), F(1, 2)))
    assert induced.classify_nestling(law, UNI).kind == induced.NESTLING


@given(seeds, st.sampled_from([induced.UNIFORM, induced.PARTICLE_UNIFORM, induced.EXTREMAL]))
def test_step_law_is_distribution(seed, kind):
    law = random_law(np.random.default_rng(seed))
    d = law.dimension
    rule = induced.SelectionRule(kind, (1,) + (0,) * (d - 1) if kind == induced.EXTREMAL else None)
    for w in law.support:
        p = induced.induced_step_law(w, law.step_set, rule)
        assert sum(p.values()) == 1
        assert set(p) == set(law.step_set.steps)
        assert all(x >= 0 for x in p.values())


@given(seeds)
def test_uniform_rule_ellipticity_bound(seed):
    law = random_law(np.random.default_rng(seed))
    ue = check_condition_UE(law)
    assert ue is not None
    for w in law.support:
        p = induced.induced_step_law(w, law.step_set, UNI)
        width = max(len(v.support) for v in w.vectors)
        for e in unit_vectors(law.dimension):
            assert p[e] >= w.mass_towards(law.step_set.index[e]) / width >= ue / width


@given(seeds, st.sampled_from([induced.UNIFORM, induced.PARTICLE_UNIFORM]))
def test_no_nestling_when_transient_certified(seed, kind):
    law = random_law(np.random.default_rng(seed))
    if criteria.condition_L_search(law) is not None:
        assert induced.classify_nestling(law, induced.SelectionRule(kind)).kind != induced.NESTLING


def test_extremal_walk_is_straight():
    s, w = v5_law()
    env = EnvironmentRealization(EnvironmentLaw(s, (w,), (F(1),)), 0)
    path = induced.induced_walk_run(env, induced.SelectionRule(induced.EXTREMAL, (1, 0)), (0, 0), 20, 3)
    assert path.tolist() == [[n, 0] for n in range(21)]


def test_uniform_walks_leave_boxes():
    env = EnvironmentRealization(presets.exx_q1(), 4)
    paths = induced.induced_walks(env, UNI, (0, 0), 1000, list(range(1000)))
    reach = np.abs(paths).max(axis=(1, 2))
    assert (reach > 5).all()


def test_one_step_frequencies():
    law = presets.exx_q2(F(8, 9))
    env = EnvironmentRealization(law, 1)
    n = 20_000
    paths = induced.induced_walks(env, PART, (0, 0), 1, list(range(n)))
    p = induced.induced_step_law(env.law_at((0, 0)), law.step_set, PART)
    for y, q in p.items():
        freq = (paths[:, 1] == np.array(y)).all(axis=1).mean()
        q = float(q)
        assert abs(freq - q) <= 4 * np.sqrt(q * (1 - q) / n) + 1e-12


def test_path_csv(tmp_path):
    env = EnvironmentRealization(presets.qdecay(), 0)
    path = induced.induced_walk_run(env, UNI, (0,), 5, 1)
    out = tmp_path / "p.csv"
    induced.write_path_csv(path, out)
    lines = out.read_text().splitlines()
    assert lines[0] == "n,x1" and len(lines) == 7
