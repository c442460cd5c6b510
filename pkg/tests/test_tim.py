import itertools
import json
from fractions import Fraction

import numpy as np
import pytest

from isac_im import tim
from isac_im.channel import build_topology, propagate, rayleigh, sample_channel
from isac_im.errors import InvalidTopology
from isac_im.pilots import generate_pilots, ls_estimate


def _setup(plan, seed):
    pilots = generate_pilots(plan.m_prime, plan.pilot_columns)
    plan = tim.solve_sensing_signals(plan, pilots)
    H = sample_channel(plan.topology, None, plan.t0, "block", seed)
    return plan, pilots, H


def _run(plan, H, W, **kw):
    sig = tim.encode_block(plan, W, **kw)
    return sig, propagate(H, sig.x)


def _vector_sets(plan, k):
    """Vector indices seen by receiver k, split into desired and interfering."""
    heard = set(plan.topology.Rc[k - 1])
    desired = {s.vector for s in plan.streams if s.receiver == k}
    seen = {s.vector for s in plan.streams if s.tx in heard}
    return desired, seen - desired


def test_antidote_512_structure():
    plan = tim.plan_antidote(5, 1, 2, "replace", rng=1)
    assert plan.L == 5 and plan.n0 == 2 and plan.n_vectors == 6
    assert plan.t0 == 10 and plan.pilot_columns == 4 and plan.m_prime == 3
    tx3 = sorted((s.vector, s.receiver, s.symbol) for s in plan.streams if s.tx == 3)
    assert tx3 == [(3, 3, 1), (4, 3, 2)]
    assert not [s for s in plan.streams if s.tx == 6]
    assert plan.sensor_interference == (3, 4, 5)
    assert Fraction(plan.observations_per_block, plan.t0) == Fraction(2, 5)
    assert Fraction(plan.decoded_per_block, plan.t0) == 2


def test_antidote_512_receiver1_alignment():
    plan = tim.plan_antidote(5, 1, 2, "replace", rng=2)
    desired, interf = _vector_sets(plan, 1)
    assert desired == {1, 2}
    assert interf == {4, 5, 6}
    plan, pilots, H = _setup(plan, 3)
    W = rayleigh(np.random.default_rng(0), (plan.n_periods, plan.n_messages))
    sig, Y = _run(plan, H, W)
    dec = tim.decode_receivers(plan, Y, H, sig)
    assert dec.interference_rank[0] == 3
    assert dec.desired_rank[0] == 2
    assert np.abs(dec.symbols - W).max() <= 1e-9


def test_antidote_512_null_rows_and_sensing_solve():
    plan, pilots, H = _setup(tim.plan_antidote(5, 1, 2, "replace", rng=4), 5)
    VI = plan.V[:, [v - 1 for v in plan.sensor_interference]]
    assert np.abs(plan.v0 @ VI).max() <= 1e-8
    for j in range(plan.n_periods):
        cols = [j * plan.n0 + u for u in range(plan.n0)]
        for r, i in enumerate(plan.sensing_tx):
            back = plan.v0 @ plan.xs[j, r]
            assert np.abs(back - pilots.X[r, cols]).max() <= 1e-10
    # minimum norm: no component outside the row space of v0
    P = plan.v0.conj().T @ plan.v0
    assert np.allclose(P @ plan.xs[0, 0], plan.xs[0, 0])


def test_zero_pilots_give_zero_sensing():
    plan = tim.plan_antidote(5, 1, 2, "replace", rng=0)
    zero = generate_pilots(plan.m_prime, plan.pilot_columns)
    zero = type(zero)(np.zeros_like(zero.X))
    solved = tim.solve_sensing_signals(plan, zero)
    assert np.all(solved.xs == 0)


def test_antidote_512_transmit_equations():
    plan, pilots, H = _setup(tim.plan_antidote(5, 1, 2, "replace", rng=6), 6)
    W = rayleigh(np.random.default_rng(1), (plan.n_periods, plan.n_messages))
    sig = tim.encode_block(plan, W)
    a, b = sig.comm_scale, sig.sensing_scale
    idx = {(s.receiver, s.symbol): n for n, s in enumerate(plan.streams)}
    x3 = a * (plan.V[:, 2] * W[0, idx[3, 1]] + plan.V[:, 3] * W[0, idx[3, 2]])
    x3 = x3 + b * plan.xs[0, plan.sensing_tx.index(3)]
    assert np.allclose(sig.x[:5, 2], x3)
    assert np.allclose(sig.x[:5, 5], b * plan.xs[0, plan.sensing_tx.index(6)])
    zero = tim.encode_block(plan, np.zeros_like(W))
    assert np.array_equal(zero.x, zero.sensing)


def test_antidote_512_sensor_observations():
    plan, pilots, H = _setup(tim.plan_antidote(5, 1, 2, "replace", rng=7), 7)
    rng = np.random.default_rng(2)
    W = rayleigh(rng, (plan.n_periods, plan.n_messages))
    sig, Y = _run(plan, H, W)
    obs = tim.sensor_observations(plan, Y[:, -1])
    assert len(obs) == 4
    h = H.gains[0, -1, [i - 1 for i in plan.sensing_tx]]
    Xb = sig.sensing_scale * pilots.X
    for o in obs:
        assert o.value == pytest.approx(h @ Xb[:, o.column - 1], abs=1e-12)
    assert [o.row for o in obs] == [1, 2, 1, 2]
    W2 = W.copy()
    W2[1, 3] += 1.0
    _, Y2 = _run(plan, H, W2)
    moved = tim.sensor_projections(plan, Y2[:, -1]) - tim.sensor_projections(plan, Y[:, -1])
    assert np.abs(moved).max() <= 1e-9
    est = ls_estimate(tim.sensor_projections(plan, Y[:, -1]), Xb, h)
    assert est.cee <= 1e-18


def test_antidote_add_511():
    plan = tim.plan_antidote(5, 1, 1, "add", rng=3)
    assert plan.L == 5 and plan.n_vectors == 5 and plan.n0 == 2
    assert plan.sensing_tx == (3, 4)
    assert Fraction(plan.observations_per_block, plan.t0) == Fraction(2, 5)
    assert Fraction(plan.decoded_per_block, plan.t0) == 2


def test_equal_u_d_interference_dimension():
    # U = D: a receiver that does not hear the silent extra transmitter sees
    # exactly K-D interfering vectors; one that does sees fewer
    for K, U in [(4, 1), (6, 2), (7, 3)]:
        plan = tim.plan_antidote(K, U, U, "replace", rng=K)
        for k in range(1, K + 1):
            n_int = len(_vector_sets(plan, k)[1])
            if K + 1 in plan.topology.Rc[k - 1]:
                assert n_int < K - U
            else:
                assert n_int == K - U


def test_regular_replace_structure():
    plan = tim.plan_regular(5, 3, "replace", rng=1)
    assert plan.L == 4 and plan.n0 == 2 and plan.m_prime == 3
    assert plan.sensing_tx == (1, 2, 6)
    assert Fraction(plan.observations_per_block, plan.t0) == Fraction(2, 4)
    assert Fraction(plan.decoded_per_block, plan.t0) == Fraction(10, 4)
    # transmitter d-1 carries only its own first-slot message
    tx2 = [(s.vector, s.receiver, s.symbol) for s in plan.streams if s.tx == 2]
    assert tx2 == [(2, 2, 1)]
    # the extra transmitter carries the second message of receiver K-d+2 on v^1
    tx6 = [(s.vector, s.receiver, s.symbol) for s in plan.streams if s.tx == 6]
    assert tx6 == [(1, 4, 2)]


def test_regular_add_structure():
    plan = tim.plan_regular(5, 2, "add", rng=1)
    assert plan.L == 3 and plan.n0 == 1 and plan.sensing_tx == (2,)
    assert Fraction(plan.observations_per_block, plan.t0) == Fraction(1, 3)
    assert Fraction(plan.decoded_per_block, plan.t0) == Fraction(10, 3)
    plan, pilots, H = _setup(plan, 1)
    obs = tim.sensor_observations(plan, np.zeros(plan.t0))
    assert len(obs) == plan.n_periods


def test_regular_replace_rejects_d1():
    with pytest.raises(InvalidTopology):
        tim.plan_regular(4, 1, "replace")


def test_regular_full_ring_interference():
    K = 5
    plan = tim.plan_regular(K, K, "replace", rng=2)
    for k in range(1, K + 1):
        assert len(_vector_sets(plan, k)[1]) == K - 1


def test_regular_interior_receivers():
    K, d = 7, 3
    plan, pilots, H = _setup(tim.plan_regular(K, d, "replace", rng=5), 5)
    W = rayleigh(np.random.default_rng(5), (plan.n_periods, plan.n_messages))
    sig, Y = _run(plan, H, W)
    dec = tim.decode_receivers(plan, Y, H, sig)
    for k in range(d, K - d + 2):
        assert dec.interference_rank[k - 1] == d - 1


def _grid():
    for K in range(2, 9):
        for U in range(0, 4):
            for D in range(U, 4):
                if K + 1 > U + D:
                    yield ("antidote", K, U, D, "replace")
                if K > U + D + 1:
                    yield ("antidote", K, U, D, "add")
        for d in range(1, 7):
            if 2 <= d <= K:
                yield ("regular", K, d, None, "replace")
            if 2 <= d <= K - 1:
                yield ("regular", K, d, None, "add")


@pytest.mark.parametrize("case", list(_grid()))
def test_grid_decodes_and_accounts(case):
    fam, K, p1, p2, mode = case
    if fam == "antidote":
        plan = tim.plan_antidote(K, p1, p2, mode, rng=K * 100 + p1 * 10 + p2)
        bound = K - p2 if mode == "replace" else K - p2 - 1
        per_rx = p1 + 1
    else:
        plan = tim.plan_regular(K, p1, mode, rng=K * 10 + p1)
        bound = p1 - 1
        per_rx = 2
    plan, pilots, H = _setup(plan, hash(case) % 1000)
    assert np.abs(plan.v0 @ plan.V[:, [v - 1 for v in plan.sensor_interference]]).max(initial=0.0) <= 1e-8
    W = rayleigh(np.random.default_rng(0), (plan.n_periods, plan.n_messages))
    sig, Y = _run(plan, H, W)
    dec = tim.decode_receivers(plan, Y, H, sig)
    assert np.abs(dec.symbols - W).max() <= 1e-8
    for k in range(K):
        assert dec.interference_rank[k] <= bound
        assert dec.desired_rank[k] + dec.interference_rank[k] <= plan.L
    assert plan.n_messages == per_rx * K
    est = ls_estimate(tim.sensor_projections(plan, Y[:, -1]), sig.sensing_scale * pilots.X,
                      H.gains[0, -1, [i - 1 for i in plan.sensing_tx]])
    assert est.cee <= 1e-16


def test_coding_vectors_generic():
    rng = np.random.default_rng(11)
    first_try = 0
    for _ in range(1000):
        plan = tim.plan_antidote(5, 1, 2, "replace", rng=rng)
        first_try += plan.attempts == 1
    assert first_try >= 999
    V = plan.V
    for cols in itertools.combinations(range(plan.n_vectors), plan.L):
        assert np.linalg.svd(V[:, cols], compute_uv=False)[-1] >= 1e-8
    assert np.allclose(np.linalg.norm(V, axis=0), 1.0)


def test_power_budget():
    plan, pilots, H = _setup(tim.plan_antidote(6, 2, 2, "replace", rng=8), 8)
    W = np.exp(1j * np.random.default_rng(3).uniform(0, 2 * np.pi, (plan.n_periods, plan.n_messages)))
    sig = tim.encode_block(plan, W, power=1.0)
    comm = np.zeros((plan.L, plan.n_tx))
    for s in plan.streams:
        comm[:, s.tx - 1] += np.abs(plan.V[:, s.vector - 1]) ** 2
    total = sig.comm_scale ** 2 * np.tile(comm, (plan.n_periods, 1)) + np.abs(sig.sensing) ** 2
    assert total.max() <= 1.0 + 1e-9


def test_plan_json():
    plan, pilots, H = _setup(tim.plan_antidote(5, 1, 2, "replace", rng=9), 9)
    blob = json.loads(tim.plan_to_json(plan))
    assert blob["topology"]["Rs"] == [3, 4, 6]
    V = np.array(blob["V"]["re"]) + 1j * np.array(blob["V"]["im"])
    assert np.allclose(V, plan.V)
    assert len(blob["v0"]["re"]) == 2
    assert len(blob["schedule"]) == plan.n_messages
