from fractions import Fraction as F

import numpy as np
import pytest
from hypothesis import assume, given, strategies as st
from scipy.spatial import ConvexHull, QhullError

from helpers import brute_L_value, random_law
from brwre import criteria, hull, presets
from brwre.model import EnvironmentLaw, OffspringVector, SiteLaw, StepSet, check_condition_B

seeds = st.integers(0, 2**32 - 1)
small = st.integers(-6, 6)
rat = st.fractions(min_value=-3, max_value=3, max_denominator=20)


def v5():
    s = presets.exx_steps()
    return s, OffspringVector.of(s, {(1, 0): 1, (0, 1): 2, (-1, 0): 1, (0, -1): 1})


# ------------------------------------------------------------------ D, phi


def test_eval_D_examples():
    s, v = v5()
    assert criteria.eval_D((1, 0), v, s) == 1
    s3 = StepSet(1, ((-1,), (0,), (1,)))
    stay = OffspringVector.of(s3, {(0,): 1})
    for r in (-2, F(1, 3), 5):
        assert criteria.eval_D((r,), stay, s3) == 0


@given(seeds, st.tuples(rat, rat), st.tuples(rat, rat), st.fractions(min_value=0, max_value=5))
def test_D_homogeneous_and_subadditive(seed, r1, r2, c):
    law = random_law(np.random.default_rng(seed), max_dim=2)
    assume(law.dimension == 2)
    s = law.step_set
    for w in law.support:
        for v in w.vectors:
            D = lambda r: criteria.eval_D(r, v, s)  # noqa: E731
            assert D(tuple(c * x for x in r1)) == c * D(r1)
            assert D(tuple(a + b for a, b in zip(r1, r2))) <= D(r1) + D(r2)
    phi = lambda r: criteria.phi_Q(law, r)  # noqa: E731
    assert phi(tuple(a + b for a, b in zip(r1, r2))) <= phi(r1) + phi(r2)


@given(seeds, st.tuples(rat, rat))
def test_drift_points_support_function_is_phi(seed, r):
    law = random_law(np.random.default_rng(seed), max_dim=2)
    r = r[: law.dimension]
    cloud = [p for w in law.support for p in criteria.drift_points(w, law.step_set)]
    support = max(sum(a * b for a, b in zip(r, p)) for p in cloud)
    assert support == criteria.phi_Q(law, r)


# ----------------------------------------------------------------- hull


@given(st.lists(st.tuples(small, small), min_size=3, max_size=12))
def test_origin_position_matches_qhull(points):
    arr = np.array(points, dtype=float)
    try:
        ch = ConvexHull(arr)
    except QhullError:
        assume(False)
    offsets = ch.equations[:, -1]  # normal . x + offset <= 0 inside
    worst = float(offsets.max())
    pos = hull.origin_position(points, 2)
    if worst < -1e-9:
        assert pos.kind == hull.INTERIOR
    elif worst > 1e-9:
        assert pos.kind == hull.OUTSIDE
        assert max(sum(a * b for a, b in zip(pos.witness, p)) for p in points) < 0
    else:
        assert pos.kind == hull.BOUNDARY


@given(st.tuples(small, small), st.tuples(small, small), st.lists(st.fractions(0, 1), max_size=4))
def test_degenerate_clouds(a, b, ts):
    # points on the segment [a, b]: no interior
    points = [a, b] + [tuple(x + t * (y - x) for x, y in zip(a, b)) for t in ts]
    pos = hull.origin_position(points, 2)
    cross = a[0] * b[1] - a[1] * b[0]
    on_segment = cross == 0 and min(a[0], b[0]) <= 0 <= max(a[0], b[0]) and min(a[1], b[1]) <= 0 <= max(a[1], b[1])
    if on_segment:
        assert pos.kind == hull.BOUNDARY
    else:
        assert pos.kind == hull.OUTSIDE
        assert max(sum(x * y for x, y in zip(pos.witness, p)) for p in points) < 0


def test_lp_interior_and_outside():
    cube = [(x, y, z) for x in (-1, 1) for y in (-1, 1) for z in (-1, 1)]
    assert hull.origin_position(cube, 3).kind == hull.INTERIOR
    shifted = [(x + 3, y, z) for x, y, z in cube]
    pos = hull.origin_position(shifted, 3)
    assert pos.kind == hull.OUTSIDE
    assert max(np.dot(pos.witness, p) for p in shifted) < 0
    flat = [(x, y, 0) for x in (-1, 1) for y in (-1, 1)]
    assert hull.origin_position(flat, 3).kind == hull.INCONCLUSIVE


# ------------------------------------------------------------ recurrence


@pytest.mark.parametrize("alpha", [F(1, 10), F(1, 2), F(9, 10)])
def test_q1_strict_interior(alpha):
    assert criteria.recurrence_check(presets.exx_q1(alpha)).kind == criteria.STRICT_INTERIOR


def test_q2_boundary_with_ue():
    assert criteria.recurrence_check(presets.exx_q2(F(1, 2))).kind == criteria.BOUNDARY_WITH_UE


def test_q2_transient_negative_witness():
    law = presets.exx_q2(F(8, 9))
    rec = criteria.recurrence_check(law)
    assert rec.kind == criteria.NEGATIVE
    assert criteria.phi_Q(law, rec.witness) < 0
    assert criteria.phi_Q(law, (-1, 0)) == F(-1, 4)


def test_boundary_upgrade_needs_ue():
    s = presets.nn_steps()
    w = SiteLaw.of([(OffspringVector.of(s, {(1,): 1}), F(1, 2)), (OffspringVector.of(s, {(-1,): 2}), F(1, 2))])
    assert criteria.recurrence_check(EnvironmentLaw(s, (w,), (F(1),))).kind == criteria.BOUNDARY_WITH_UE
    s3 = StepSet(1, ((-1,), (0,), (1,)))
    # never sends anyone left: phi(-1) = 0 but Condition E fails
    a = SiteLaw.of([(OffspringVector.of(s3, {(0,): 1, (1,): 1}), F(1))])
    rec = criteria.recurrence_check(EnvironmentLaw(s3, (a,), (F(1),)))
    assert rec.kind == criteria.BOUNDARY
    assert not rec.recurrent


@given(seeds)
def test_one_dimensional_verdict_is_sign_test(seed):
    law = random_law(np.random.default_rng(seed), max_dim=1)
    plus, minus = criteria.phi_Q(law, (1,)), criteria.phi_Q(law, (-1,))
    kind = criteria.recurrence_check(law).kind
    if plus > 0 and minus > 0:
        assert kind == criteria.STRICT_INTERIOR
    elif plus < 0 or minus < 0:
        assert kind == criteria.NEGATIVE
    else:
        assert kind in (criteria.BOUNDARY, criteria.BOUNDARY_WITH_UE)


def test_point_cloud_cap_falls_back():
    law = presets.exx_q1()
    out = criteria.recurrence_check(law, cap=2)
    assert out.kind in (criteria.INCONCLUSIVE, criteria.NEGATIVE)
    assert out.notes


# ------------------------------------------------------------- Condition L


def test_q2_certificate_exact():
    law = presets.exx_q2(F(8, 9))
    cert = criteria.condition_L_search(law)
    assert cert is not None and cert.exact
    assert cert.direction == (1, 0) and cert.lam_exact == F(1, 3)
    assert cert.values == [1, 1]
    assert cert.marginal
    chk = criteria.verify_condition_L(law, (1, 0), F(1, 3))
    assert chk.ok and chk.exact
    assert [brute_L_value(w, law.step_set, (1, 0), F(1, 3)) for w in law.support] == [1, 1]


def test_ex3_certificate_half():
    law = presets.ex3()
    cert = criteria.condition_L_search(law)
    assert cert is not None and cert.lam_exact == F(1, 2)
    assert all(brute_L_value(w, law.step_set, cert.direction, F(1, 2)) <= 1 for w in law.support)


def test_q1_has_no_certificate():
    assert criteria.condition_L_search(presets.exx_q1()) is None


@given(seeds, st.fractions(min_value=F(1, 20), max_value=5))
def test_verify_symmetry(seed, lam):
    law = random_law(np.random.default_rng(seed))
    d = law.dimension
    for s in [tuple(1 if i == j else 0 for i in range(d)) for j in range(d)]:
        a = criteria.verify_condition_L(law, s, lam)
        b = criteria.verify_condition_L(law, tuple(-c for c in s), 1 / lam)
        assert a.values == b.values and a.ok == b.ok
        assert a.values == [brute_L_value(w, law.step_set, s, lam) for w in law.support]


@given(seeds)
def test_lambda_one_never_certifies(seed):
    law = random_law(np.random.default_rng(seed))
    assert check_condition_B(law)
    assert not criteria.verify_condition_L(law, (1,) + (0,) * (law.dimension - 1), F(1)).ok


@given(seeds)
def test_float_verification(seed):
    law = random_law(np.random.default_rng(seed))
    s = np.ones(law.dimension) / np.sqrt(law.dimension)
    chk = criteria.verify_condition_L(law, s, 0.7)
    assert not chk.exact
    expect = [sum(float(m) * 0.7 ** float(np.dot(y, s)) for y, m in brute.items())
              for brute in (criteria.mean_offspring(w, law.step_set) for w in law.support)]
    assert np.allclose(chk.values, expect, rtol=1e-12)


@given(seeds)
def test_g_at_zero_is_total_mean(seed):
    law = random_law(np.random.default_rng(seed))
    obj = criteria._LObjective(law)
    S = np.eye(law.dimension)[:1]
    g0 = obj.g(S, np.zeros(1))[0]
    assert np.isclose(g0, max(float(sum(criteria.mean_offspring(w, law.step_set).values())) for w in law.support))
    assert g0 > 1


@given(seeds)
def test_found_certificates_verify(seed):
    law = random_law(np.random.default_rng(seed))
    cert = criteria.condition_L_search(law)
    if cert is not None:
        lam = cert.lam_exact if cert.exact else cert.lam
        s = cert.direction if cert.exact else cert.s
        assert criteria.verify_condition_L(law, s, lam).ok
        assert lam != 1


# ------------------------------------------------------------------ triv2


def test_triv2():
    s3 = StepSet(1, ((-1,), (0,), (1,)))
    w = SiteLaw.of([(OffspringVector.of(s3, {(0,): 2}), F(3, 5)), (OffspringVector.of(s3, {(1,): 1}), F(2, 5))])
    assert criteria.check_triv2(EnvironmentLaw(s3, (w,), (F(1),))) == 0
    assert criteria.check_triv2(presets.qdecay()) is None
    assert criteria.check_triv2(presets.exx_q1()) is None
    assert criteria.check_triv2(presets.exx_q2()) is None


# --------------------------------------------------------------- classify


def test_classify_examples():
    assert criteria.classify(presets.exx_q1()).verdict == criteria.RECURRENT
    assert criteria.classify(presets.exx_q2(F(8, 9))).verdict == criteria.TRANSIENT
    assert criteria.classify(presets.exx_q2(F(3, 5))).verdict == criteria.UNKNOWN
    assert criteria.classify(presets.ex3()).verdict == criteria.TRANSIENT


def test_classify_requires_standing_conditions():
    t = presets.trap_laws(F(1, 3))
    law = EnvironmentLaw(presets.nn_steps(), (t["omega1"], t["omega2"]), (F(1, 2), F(1, 2)))
    out = criteria.classify(law)
    assert out.verdict == criteria.UNKNOWN
    assert out.notes


@given(seeds)
def test_never_both_certificates(seed):
    law = random_law(np.random.default_rng(seed))
    out = criteria.classify(law)
    assert not (out.recurrence.recurrent and out.condition_L is not None)


def test_report_is_serializable():
    import json

    rep = criteria.classify(presets.exx_q2(F(8, 9))).as_dict()
    text = json.dumps(rep)
    assert '"lambda_exact": "1/3"' in text
