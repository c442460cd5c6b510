import json
import math
from dataclasses import replace
from fractions import Fraction as F

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from isac_im import bia, dof, tim
from isac_im.channel import build_topology, sample_channel
from isac_im.errors import InvalidArgument


# ---------------------------------------------------------------------------
# closed-form points
# ---------------------------------------------------------------------------
def test_ic_k3_point():
    p = dof.scheme_point("bia_ic", {"K": 3})
    assert (p.sdof, p.cdof) == (F(2, 3), F(1))


def test_antidote_512_point():
    p = dof.scheme_point("tim_antidote", {"K": 5, "U": 1, "D": 2, "mode": "replace"})
    assert (p.sdof, p.cdof) == (F(2, 5), F(2))


def test_miso_m_equals_k():
    p = dof.scheme_point("bia_miso", {"m": 4, "K": 4})
    assert (p.sdof, p.cdof) == (F(0), F(4))


@pytest.mark.parametrize("family, params, point", [
    ("bia_miso", {"m": 4, "K": 3}, (F(1, 2), F(2))),
    ("bia_miso", {"m": 6, "K": 3}, (F(1, 2), F(3))),
    ("bia_mimo", {"m": 5, "n": (2, 2)}, (F(1, 2), F(5, 2))),
    ("tim_antidote", {"K": 5, "U": 1, "D": 1, "mode": "add"}, (F(2, 5), F(2))),
    ("tim_regular", {"K": 4, "d": 3, "mode": "replace"}, (F(1, 2), F(2))),
    ("tim_regular", {"K": 5, "d": 2, "mode": "add"}, (F(1, 3), F(10, 3))),
])
def test_worked_points(family, params, point):
    p = dof.scheme_point(family, params)
    assert (p.sdof, p.cdof) == point


def test_scheme_point_rejects_bad_params():
    with pytest.raises(InvalidArgument):
        dof.scheme_point("bia_ic", {"K": 1})
    with pytest.raises(InvalidArgument):
        dof.scheme_point("nope", {})
    with pytest.raises(InvalidArgument):
        dof.scheme_point("tim_antidote", {"K": 2, "U": 1, "D": 3, "mode": "replace"})


def test_point_invariants():
    with pytest.raises(InvalidArgument):
        dof.TradeoffPoint(F(3, 2), F(0))
    with pytest.raises(InvalidArgument):
        dof.TradeoffPoint(F(1, 2), F(-1))
    p = dof.TradeoffPoint(F(2, 4), F(6, 3))
    assert p.sdof.denominator == 2 and p.cdof == 2


def test_comm_extremes():
    assert dof.comm_only_point("bia_ic", {"K": 4}).cdof == 1
    assert dof.comm_only_point("bia_miso", {"m": 2, "K": 3}).cdof == 2
    assert dof.comm_only_point("bia_mimo", {"m": 9, "n": (2, 2)}).cdof == 4
    assert dof.comm_only_point("tim_antidote", {"K": 5, "U": 1, "D": 2, "mode": "replace"}).cdof == F(5 * 2, 5)
    assert dof.comm_only_point("tim_regular", {"K": 5, "d": 2, "mode": "add"}).cdof == F(10, 3)


# ---------------------------------------------------------------------------
# hulls and time sharing
# ---------------------------------------------------------------------------
def _pts(*pairs):
    return [dof.TradeoffPoint(F(a), F(b)) for a, b in pairs]


def test_hull_ic_k3():
    rep = dof.pareto_hull(_pts((1, 0), (F(2, 3), 1), (0, 1)))
    assert [(v.sdof, v.cdof) for v in rep.vertices] == [(0, 1), (F(2, 3), 1), (1, 0)]
    gaps = dict((p.sdof, g) for p, g in rep.gaps)
    assert gaps[F(2, 3)] == F(2, 3)


def test_hull_duplicate_points():
    rep = dof.pareto_hull(_pts((F(1, 2), 1), (F(1, 2), 1)))
    assert len(rep.vertices) == 1


def test_hull_drops_point_below_chord():
    rep = dof.pareto_hull(_pts((1, 0), (F(1, 2), F(1, 4)), (0, 1)))
    assert [(v.sdof, v.cdof) for v in rep.vertices] == [(0, 1), (1, 0)]
    assert dict((p.sdof, g) for p, g in rep.gaps)[F(1, 2)] == F(-1, 4)


def test_hull_json():
    rep = dof.pareto_hull(_pts((1, 0), (F(2, 3), 1), (0, 1)))
    blob = json.loads(rep.to_json())
    assert blob["vertices"] == [[0, 1, 1, 1], [2, 3, 1, 1], [1, 1, 0, 1]]
    assert blob["gaps"] == [[2, 3, 2, 3]]


fracs = st.fractions(min_value=0, max_value=1, max_denominator=12)
cd = st.fractions(min_value=0, max_value=6, max_denominator=12)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.tuples(fracs, cd), min_size=2, max_size=12))
def test_hull_concave_and_covers(pairs):
    pts = [dof.TradeoffPoint(a, b) for a, b in pairs]
    rep = dof.pareto_hull(pts)
    vs = rep.vertices
    assert [v.sdof for v in vs] == sorted({v.sdof for v in vs})
    slopes = [(b.cdof - a.cdof) / (b.sdof - a.sdof) for a, b in zip(vs, vs[1:])]
    assert all(s1 > s2 for s1, s2 in zip(slopes, slopes[1:]))
    for p in pts:
        assert p.sdof >= vs[0].sdof and p.sdof <= vs[-1].sdof
        assert p.cdof <= rep.boundary(p.sdof)


def test_time_sharing_ic_k3():
    p = dof.scheme_point("bia_ic", {"K": 3})
    assert dof.compare_time_sharing(p, dof.extremes("bia_ic", {"K": 3})) == F(2, 3)


@pytest.mark.parametrize("K", [2, 3, 5, 9])
def test_time_sharing_vs_half_k(K):
    p = dof.scheme_point("bia_ic", {"K": K})
    ext = (dof.TradeoffPoint(F(1), F(0)), dof.TradeoffPoint(F(0), F(K, 2)))
    assert dof.compare_time_sharing(p, ext) == F(1, 2)


def test_time_sharing_on_chord_is_zero():
    ext = (dof.TradeoffPoint(F(1), F(0)), dof.TradeoffPoint(F(0), F(4)))
    assert dof.compare_time_sharing(dof.TradeoffPoint(F(1, 4), F(3)), ext) == 0


def test_time_sharing_antidote_exact():
    K, U, D = 6, 2, 2
    params = {"K": K, "U": U, "D": D, "mode": "replace"}
    p = dof.scheme_point("tim_antidote", params)
    c = F(K * (U + 1), K - D + U + 1)
    assert dof.compare_time_sharing(p, dof.extremes("tim_antidote", params)) == p.cdof - c * (1 - p.sdof)
    # with c_max equal to the scheme's own cdof the gap is c * sdof
    assert p.cdof - c * (1 - p.sdof) == p.cdof * p.sdof


def test_time_sharing_out_of_range():
    ext = (dof.TradeoffPoint(F(1, 2), F(0)), dof.TradeoffPoint(F(0), F(4)))
    with pytest.raises(InvalidArgument):
        dof.compare_time_sharing(dof.TradeoffPoint(F(3, 4), F(1)), ext)


# ---------------------------------------------------------------------------
# certification
# ---------------------------------------------------------------------------
def _ic_channel(K, t0, seed):
    return sample_channel(build_topology("full", K=K, n_tx=K), None, t0, "heterogeneous", seed)


def _tim_channel(plan, seed):
    return sample_channel(plan.topology, None, plan.t0, "block", seed)


def test_certify_ic_k3():
    plan = bia.plan_ic(3)
    rep = dof.certify_plan(plan, _ic_channel(3, plan.t0, 0), tol=1e-8)
    assert rep.passed, rep.failures
    assert rep.sensor_leakage <= 1e-9
    assert all(r.desired_rank == 1 and r.interference_rank == 2 for r in rep.receivers)


def test_certify_leakage_matches_perturbation():
    # brute force: perturb one symbol at a time through the public encoder
    plan = bia.plan_ic(3)
    H = _ic_channel(3, plan.t0, 1)
    from isac_im.pilots import generate_pilots
    from isac_im.channel import propagate
    pilots = generate_pilots(3, plan.pilot_columns)
    W = np.zeros((plan.n_periods, plan.n_messages), dtype=complex)
    base = bia.sensor_differences(plan, propagate(H, bia.encode_block(plan, W, pilots).x)[:, -1])
    worst = 0.0
    for j in range(plan.n_periods):
        for s in range(plan.n_messages):
            W2 = W.copy()
            W2[j, s] = 1.0
            y = propagate(H, bia.encode_block(plan, W2, pilots).x)[:, -1]
            worst = max(worst, np.abs(bia.sensor_differences(plan, y) - base).max())
    rep = dof.certify_plan(plan, H, tol=1e-8)
    assert worst <= 1e-9 and rep.sensor_leakage <= 1e-9


def test_certify_antidote_512_receiver1():
    plan = tim.plan_antidote(5, 1, 2, "replace", rng=0)
    rep = dof.certify_plan(plan, _tim_channel(plan, 0), tol=1e-8)
    assert rep.passed, rep.failures
    r1 = rep.receivers[0]
    assert r1.interference_rank == 3 and r1.desired_rank == 2
    assert r1.margin > 1e-8


def test_certify_flags_zeroed_vector():
    plan = tim.plan_antidote(5, 1, 2, "replace", rng=0)
    V = plan.V.copy()
    V[:, 0] = 0
    bad = replace(plan, V=V)
    rep = dof.certify_plan(bad, _tim_channel(plan, 0), tol=1e-8)
    assert not rep.passed
    # vector 1 carries only the first symbol of receiver 1
    assert rep.failed_receivers == (1,)


def test_certify_report_json():
    plan = tim.plan_regular(5, 3, "replace", rng=0)
    rep = dof.certify_plan(plan, _tim_channel(plan, 0), tol=1e-8)
    blob = json.loads(rep.to_json())
    assert blob["passed"] is True
    assert blob["claimed"] == [1, 2, 5, 2]
    assert len(blob["receivers"]) == 5


def _grid():
    for K in (2, 3, 5):
        yield "ic", {"K": K}
    for m in range(2, 13):
        for K in (2, 3, 5):
            if math.ceil(m / K) >= 2:
                yield "miso", {"m": m, "K": K}
    for m, n in [(5, (2, 2)), (7, (2, 1)), (9, (3, 2)), (12, (2, 2, 1))]:
        yield "mimo", {"m": m, "n": n}
    for K in range(2, 9):
        for U in range(0, 4):
            for D in range(U, 4):
                if K + 1 > U + D:
                    yield "antidote", {"K": K, "U": U, "D": D, "mode": "replace"}
                if K > U + D + 1:
                    yield "antidote", {"K": K, "U": U, "D": D, "mode": "add"}
        for d in range(2, 7):
            if d <= K:
                yield "regular", {"K": K, "d": d, "mode": "replace"}
            if d <= K - 1:
                yield "regular", {"K": K, "d": d, "mode": "add"}


def _build(kind, p, seed):
    if kind == "ic":
        plan = bia.plan_ic(p["K"])
        return plan, _ic_channel(p["K"], plan.t0, seed)
    if kind in ("miso", "mimo"):
        rx = [1] * p["K"] if kind == "miso" else list(p["n"])
        a = math.ceil(p["m"] / sum(rx))
        t0 = a * math.ceil(p["m"] / (a - 1))
        topo = build_topology("full", K=len(rx), n_tx=1)
        H = sample_channel(topo, (rx, [p["m"]]), t0, "heterogeneous", seed)
        plan = bia.plan_miso(p["m"], p["K"], H) if kind == "miso" else bia.plan_mimo(p["m"], p["n"], H)
        return plan, H
    if kind == "antidote":
        plan = tim.plan_antidote(p["K"], p["U"], p["D"], p["mode"], rng=seed)
    else:
        plan = tim.plan_regular(p["K"], p["d"], p["mode"], rng=seed)
    return plan, _tim_channel(plan, seed)


@pytest.mark.parametrize("kind, params", list(_grid()))
def test_certified_counts_match_theory(kind, params):
    for seed in range(20):
        plan, H = _build(kind, params, seed)
        rep = dof.certify_plan(plan, H, tol=1e-8)
        assert rep.passed, (seed, rep.failures)
        assert rep.counting_ok
        assert (rep.achieved.sdof, rep.achieved.cdof) == (rep.claimed.sdof, rep.claimed.cdof)
