"""Topological interference management with a sensor in the network.

Each transmitter spreads its messages over a period of ``L`` slots with
generic coding vectors.  The vector assignment is cyclic, so that at every
receiver the interfering streams pile up on a few shared vectors while the
desired ones stay separate.  The sensor projects its period onto the left
null space of the vectors it hears, which wipes out all communication and
leaves ``n0`` clean pilot observations per period.

Vectors are indexed cyclically over the transmitters of the network: K+1
vectors for the replace kinds and K for the add kinds.

Stream layouts (tx i sends ``v^vector * W_symbol^[receiver]``):

* antidote: transmitter i <= K sends W_1..W_{U+1} of receiver i on
  v^<i>, ..., v^<i+U>.
* regular (cooperative): transmitter j sends W_1^[j] on v^<j> and
  W_2^[<j-d+1>] on v^<j+1>, skipping the parts whose receiver does not
  exist (the sensor slot in the replace kind).
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, replace

import numpy as np

from .channel import ChannelTensor, TopologyGraph, build_topology, cyclic_residue, make_rng, rayleigh
from .errors import DegenerateChannel, InfeasibleScheme, InvalidArgument, InvalidTopology, PowerViolation
from .pilots import COND_LIMIT, PilotMatrix

SUBSET_TOL = 1e-8
RANK_RTOL = 1e-9
MAX_SUBSETS = 2000


@dataclass(frozen=True)
class Stream:
    tx: int
    vector: int
    receiver: int
    symbol: int


@dataclass(frozen=True)
class TimPlan:
    topology: TopologyGraph
    L: int
    V: np.ndarray
    v0: np.ndarray
    streams: tuple
    sensor_interference: tuple
    n_periods: int
    xs: np.ndarray | None = None
    attempts: int = 1

    @property
    def kind(self) -> str:
        return self.topology.kind

    @property
    def K(self) -> int:
        return self.topology.K

    @property
    def n_tx(self) -> int:
        return self.topology.n_tx

    @property
    def n_vectors(self) -> int:
        return self.V.shape[1]

    @property
    def n0(self) -> int:
        return self.v0.shape[0]

    @property
    def t0(self) -> int:
        return self.L * self.n_periods

    @property
    def n_messages(self) -> int:
        return len(self.streams)

    @property
    def sensing_tx(self) -> tuple:
        return self.topology.Rs

    @property
    def m_prime(self) -> int:
        return len(self.topology.Rs)

    @property
    def pilot_columns(self) -> int:
        return self.n0 * self.n_periods

    @property
    def decoded_per_block(self) -> int:
        return self.n_periods * self.n_messages

    @property
    def observations_per_block(self) -> int:
        return self.n_periods * self.n0

    @property
    def message_owner(self) -> np.ndarray:
        return np.array([s.receiver for s in self.streams])

    @property
    def family(self) -> tuple:
        t = self.topology
        mode = "replace" if t.kind.endswith("replace") else "add"
        if t.kind.startswith("antidote"):
            return "tim_antidote", {"K": t.K, "U": t.U, "D": t.D, "mode": mode}
        return "tim_regular", {"K": t.K, "d": t.d, "mode": mode}


def _antidote_streams(topo: TopologyGraph, n_v: int) -> list:
    return [Stream(i, cyclic_residue(i + u, n_v), i, u + 1)
            for i in range(1, topo.K + 1) for u in range(topo.U + 1)]


def _regular_streams(topo: TopologyGraph, n_v: int) -> list:
    K, d = topo.K, topo.d
    out = []
    for j in range(1, topo.n_tx + 1):
        if j <= K:
            out.append(Stream(j, cyclic_residue(j, n_v), j, 1))
        target = cyclic_residue(j - d + 1, topo.n_tx)
        if target <= K:
            out.append(Stream(j, cyclic_residue(j + 1, n_v), target, 2))
    return out


def left_null_rows(A: np.ndarray, dim: int) -> np.ndarray:
    """Orthonormal rows w with w @ A = 0, shape (dim, A.shape[0]).

    A larger null space (the sensor hears fewer vectors than the scheme
    budgets for) is trimmed to its first ``dim`` rows.
    """
    L = A.shape[0]
    if A.shape[1] == 0:
        basis = np.eye(L, dtype=complex)
    else:
        U, s, _ = np.linalg.svd(A, full_matrices=True)
        rank = int(np.sum(s > RANK_RTOL * s[0]))
        basis = U[:, rank:].conj().T
    if basis.shape[0] < dim:
        raise DegenerateChannel(f"sensor null space has dimension {basis.shape[0]}, expected {dim}")
    return basis[:dim]


def _subsets_ok(V: np.ndarray, L: int, rng) -> bool:
    n_v = V.shape[1]
    if n_v <= L:
        return np.linalg.svd(V, compute_uv=False)[-1] >= SUBSET_TOL
    combos = list(itertools.combinations(range(n_v), L)) if math.comb(n_v, L) <= MAX_SUBSETS else [
        tuple(sorted(rng.choice(n_v, L, replace=False))) for _ in range(MAX_SUBSETS)
    ]
    stack = V[:, np.array(combos)].transpose(1, 0, 2)
    return bool(np.min(np.linalg.svd(stack, compute_uv=False)[:, -1]) >= SUBSET_TOL)


def _build(topo: TopologyGraph, L: int, n_v: int, streams: list, n0: int, rng, max_tries: int) -> TimPlan:
    rng = make_rng(rng)
    sensed = sorted({s.vector for s in streams if s.tx in topo.Rs})
    for attempt in range(1, max_tries + 1):
        V = rayleigh(rng, (L, n_v))
        V /= np.linalg.norm(V, axis=0)
        if not _subsets_ok(V, L, rng):
            continue
        v0 = left_null_rows(V[:, [v - 1 for v in sensed]], n0)
        n_periods = math.ceil(len(topo.Rs) / n0)
        return TimPlan(topo, L, V, v0, tuple(streams), tuple(sensed), n_periods, attempts=attempt)
    raise DegenerateChannel("could not draw generic coding vectors")


def plan_antidote(K: int, U: int, D: int, mode: str = "replace", anchor: int = 1,
                  rng=None, max_tries: int = 100) -> TimPlan:
    """Plan for the neighboring-antidotes network with a sensor.

    ``replace``: the sensor is user K+1 of a (K+1, U, D) network, period
    L = K-D+U+1.  ``add``: the sensor is added to a (K, U, D) network and
    copies receiver ``anchor``'s set without its own transmitter, L = K-D+U.
    """
    if mode == "replace":
        topo = build_topology("antidote_replace", K=K, U=U, D=D)
        L = K - D + U + 1
        n_v = K + 1
    elif mode == "add":
        topo = build_topology("antidote_add", K=K, U=U, D=D, anchor=anchor)
        L = K - D + U
        n_v = K
    else:
        raise InvalidArgument(f"mode must be 'replace' or 'add', got {mode!r}")
    return _build(topo, L, n_v, _antidote_streams(topo, n_v), U + 1, rng, max_tries)


def plan_regular(K: int, d: int, mode: str = "replace", anchor: int = 1,
                 rng=None, max_tries: int = 100) -> TimPlan:
    """Plan for the regular network with cooperative transmitters.

    Every receiver gets two messages per period of L = d+1 slots.  The
    replace kind leaves two null rows at the sensor, the add kind one.
    """
    if mode == "replace":
        if d < 2:
            raise InvalidTopology("the regular replace scheme needs d >= 2")
        topo = build_topology("regular_replace", K=K, d=d)
        n_v, n0 = K + 1, 2
    elif mode == "add":
        if d < 2:
            raise InvalidTopology("the regular add scheme needs d >= 2")
        if d >= K:
            raise InfeasibleScheme("the regular add scheme needs d <= K-1")
        topo = build_topology("regular_add", K=K, d=d, anchor=anchor)
        n_v, n0 = K, 1
    else:
        raise InvalidArgument(f"mode must be 'replace' or 'add', got {mode!r}")
    return _build(topo, d + 1, n_v, _regular_streams(topo, n_v), n0, rng, max_tries)


def solve_sensing_signals(plan: TimPlan, pilots: PilotMatrix) -> TimPlan:
    """Minimum-norm sensing signals with v0 @ x_s^[i] equal to the pilot entries.

    Period j uses pilot columns (j-1)*n0+1 .. j*n0; row r of the pilots
    belongs to the r-th sensing transmitter in ascending order.
    """
    if pilots.m_prime != plan.m_prime:
        raise InvalidArgument(f"pilots need {plan.m_prime} rows, got {pilots.m_prime}")
    if pilots.N < plan.pilot_columns:
        raise InvalidArgument(f"plan consumes {plan.pilot_columns} pilot columns, got {pilots.N}")
    pinv = np.linalg.pinv(plan.v0)
    if np.abs(plan.v0 @ pinv - np.eye(plan.n0)).max() > 1e-9:
        raise DegenerateChannel("null rows are linearly dependent")
    cols = pilots.X[:, : plan.pilot_columns].reshape(plan.m_prime, plan.n_periods, plan.n0)
    xs = np.einsum("lu,rju->jrl", pinv, cols)
    return replace(plan, xs=xs)


# ---------------------------------------------------------------------------
# transmit / receive
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class TimSignal:
    x: np.ndarray
    comm: np.ndarray
    sensing: np.ndarray
    comm_scale: float
    sensing_scale: float


def _comm_tensor(plan: TimPlan) -> np.ndarray:
    """G[t, i, s]: weight of stream s on transmitter i in slot t of a period."""
    G = np.zeros((plan.L, plan.n_tx, plan.n_messages), dtype=complex)
    for n, s in enumerate(plan.streams):
        G[:, s.tx - 1, n] = plan.V[:, s.vector - 1]
    return G


def encode_block(plan: TimPlan, messages, power: float = 1.0, comm_fraction: float = 0.5,
                 comm_scale: float | None = None, sensing_scale: float | None = None) -> TimSignal:
    """Per-transmitter signals (..., t0, n_tx) for ``messages`` (..., n_periods, n_messages)."""
    if plan.xs is None:
        raise InvalidArgument("solve the sensing signals before encoding")
    W = np.asarray(messages, dtype=complex)
    if W.shape[-2:] != (plan.n_periods, plan.n_messages):
        raise InvalidArgument(f"messages must end in {(plan.n_periods, plan.n_messages)}")
    Pc, Ps = comm_fraction * power, (1 - comm_fraction) * power
    G = _comm_tensor(plan)
    # expected per-slot power of a transmitter for unit-power symbols
    unit = np.sum(np.abs(G) ** 2, axis=-1)
    raw_s = np.zeros((plan.n_periods, plan.L, plan.n_tx), dtype=complex)
    for r, i in enumerate(plan.sensing_tx):
        raw_s[:, :, i - 1] = plan.xs[:, r, :]
    if comm_scale is None:
        comm_scale = float(np.sqrt(Pc / unit.max()))
    if sensing_scale is None:
        peak = np.max(np.abs(raw_s) ** 2)
        sensing_scale = float(np.sqrt(Ps / peak)) if peak > 0 else 0.0
    xs = sensing_scale * raw_s
    budget = np.max(comm_scale ** 2 * unit[None] + np.abs(xs) ** 2)
    if budget > power * (1 + 1e-9):
        raise PowerViolation(f"expected per-slot power {budget:.6g} exceeds {power:.6g}")
    xc = comm_scale * np.einsum("tis,...js->...jti", G, W)
    shape = xc.shape[:-3] + (plan.t0, plan.n_tx)
    xc = xc.reshape(shape)
    xs_full = np.broadcast_to(xs.reshape(plan.t0, plan.n_tx), shape)
    return TimSignal(xc + xs_full, xc, xs_full, comm_scale, sensing_scale)


@dataclass(frozen=True)
class TimDecode:
    symbols: np.ndarray
    desired_rank: tuple
    interference_rank: tuple
    max_condition: float
    ill_conditioned: bool


def _rank(A: np.ndarray) -> int:
    if A.size == 0:
        return 0
    s = np.linalg.svd(A, compute_uv=False)
    return int(np.sum(s > RANK_RTOL * max(s[0], 1e-300)))


def decode_receivers(plan: TimPlan, Y, H: ChannelTensor, signal: TimSignal) -> TimDecode:
    """Decode every receiver's streams from its L-slot observations.

    The channel is taken constant within each period.  After removing the
    known sensing signals the receiver expands its observation in the basis
    of all coding vectors it can hear and reads off the coefficients of its
    own vectors.
    """
    g = H.gains
    clean = np.asarray(Y) - np.einsum("...trm,...tm->...tr", g, signal.sensing)
    J, L = plan.n_periods, plan.L
    batch = np.broadcast_shapes(clean.shape[:-2], g.shape[:-3])
    clean = np.broadcast_to(clean, batch + clean.shape[-2:]).reshape(batch + (J, L, clean.shape[-1]))
    gp = np.broadcast_to(g, batch + g.shape[-3:]).reshape(batch + (J, L) + g.shape[-2:])[..., 0, :, :]

    out = np.zeros(batch + (J, plan.n_messages), dtype=complex)
    d_rank, i_rank, worst = [], [], 1.0
    for k in range(1, plan.K + 1):
        heard = set(plan.topology.Rc[k - 1])
        seen = sorted({s.vector for s in plan.streams if s.tx in heard})
        own = [(n, s) for n, s in enumerate(plan.streams) if s.receiver == k]
        own_vecs = {s.vector for _, s in own}
        for n, s in own:
            sharing = [o for o in plan.streams if o.vector == s.vector and o.tx in heard]
            if len(sharing) != 1:
                raise InvalidArgument(f"receiver {k}: vector {s.vector} carries more than its stream")
        B = plan.V[:, [v - 1 for v in seen]]
        cond = np.linalg.cond(B)
        worst = max(worst, float(cond))
        coef = clean[..., k - 1] @ np.linalg.pinv(B).T
        for n, s in own:
            gain = signal.comm_scale * gp[..., k - 1, s.tx - 1]
            out[..., n] = coef[..., seen.index(s.vector)] / gain
        d_rank.append(_rank(plan.V[:, [v - 1 for v in sorted(own_vecs)]]))
        i_rank.append(_rank(plan.V[:, [v - 1 for v in seen if v not in own_vecs]]))
    return TimDecode(out, tuple(d_rank), tuple(i_rank), worst, worst > COND_LIMIT)


# ---------------------------------------------------------------------------
# sensor
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class TimObservation:
    value: complex
    column: int
    row: int


def sensor_projections(plan: TimPlan, y_s) -> np.ndarray:
    """v0-projected sensor samples ordered by pilot column, shape (..., N)."""
    y = np.asarray(y_s)
    per = y.reshape(y.shape[:-1] + (plan.n_periods, plan.L))
    proj = per @ plan.v0.T
    return proj.reshape(y.shape[:-1] + (plan.pilot_columns,))


def sensor_observations(plan: TimPlan, y_s) -> list:
    vals = sensor_projections(plan, y_s)
    return [TimObservation(complex(v), n + 1, n % plan.n0 + 1) for n, v in enumerate(vals)]


def plan_to_json(plan: TimPlan) -> str:
    def cplx(a):
        return None if a is None else {"re": np.real(a).tolist(), "im": np.imag(a).tolist()}

    blob = {
        "topology": plan.topology.to_dict(),
        "L": plan.L,
        "n_periods": plan.n_periods,
        "t0": plan.t0,
        "V": cplx(plan.V),
        "v0": cplx(plan.v0),
        "xs": cplx(plan.xs),
        "sensing_tx": list(plan.sensing_tx),
        "sensor_interference": list(plan.sensor_interference),
        "schedule": [{"tx": s.tx, "vector": s.vector, "receiver": s.receiver, "symbol": s.symbol}
                     for s in plan.streams],
    }
    return json.dumps(blob)
