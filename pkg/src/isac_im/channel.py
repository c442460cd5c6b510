"""Channel realizations, network topologies and small indexing helpers.

Users are numbered from 1 as in the usual cyclic-network notation: receivers
1..K and the sensor as the last user.  Array axes are plain 0-based numpy
axes; ``ChannelTensor.link`` converts.

A ``ChannelTensor`` keeps every receive antenna of every user as a row of
one big per-slot matrix, so with a stacked transmit vector ``x(t)`` the
received samples are simply ``gains[t] @ x(t)``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import InvalidArgument, InvalidTopology

FAST = "fast_per_slot"
CONSTANT = "constant_block"

TOPOLOGY_KINDS = (
    "antidote_replace",
    "antidote_add",
    "regular_replace",
    "regular_add",
    "full",
)


def cyclic_residue(a: int, b: int) -> int:
    """Residue of ``a`` modulo ``b`` taken in 1..b (``b`` instead of 0)."""
    if b < 1:
        raise InvalidArgument(f"modulus must be >= 1, got {b}")
    r = a % b
    return r if r else b


# ---------------------------------------------------------------------------
# random numbers
# ---------------------------------------------------------------------------
def make_rng(seed=None) -> np.random.Generator:
    """Philox-backed generator from an int, SeedSequence or Generator."""
    if isinstance(seed, np.random.Generator):
        return seed
    if isinstance(seed, np.random.SeedSequence):
        return np.random.Generator(np.random.Philox(seed))
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))


def trial_rng(seed: int, trial: int) -> np.random.Generator:
    """Independent substream for one Monte Carlo trial.

    The stream only depends on (seed, trial), never on which worker runs
    the trial, so results do not move with the thread count.
    """
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(trial,))
    return np.random.Generator(np.random.Philox(ss))


def rayleigh(rng: np.random.Generator, shape) -> np.ndarray:
    """CN(0, 1) samples: real and imaginary parts each N(0, 1/2)."""
    re = rng.standard_normal(shape)
    im = rng.standard_normal(shape)
    return (re + 1j * im) * np.sqrt(0.5)


# ---------------------------------------------------------------------------
# topology
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class TopologyGraph:
    """Connectivity sets of a partially (or fully) connected network.

    ``Rc[k-1]`` lists the transmitters heard by receiver k and ``Rs`` the
    transmitters heard by the sensor.  Both are sorted tuples of 1-based
    transmitter indices.
    """

    kind: str
    K: int
    n_tx: int
    Rc: tuple
    Rs: tuple
    U: int | None = None
    D: int | None = None
    d: int | None = None
    anchor: int | None = None

    @property
    def n_receivers(self) -> int:
        return len(self.Rc)

    @property
    def n_users(self) -> int:
        return len(self.Rc) + 1

    def connected(self, user: int) -> tuple:
        """Transmitters heard by ``user`` (the sensor is user n_users)."""
        if user == self.n_users:
            return self.Rs
        return self.Rc[user - 1]

    def to_dict(self) -> dict:
        out = {"kind": self.kind, "K": self.K}
        if self.kind.startswith("antidote"):
            out["U"] = self.U
            out["D"] = self.D
        elif self.kind.startswith("regular"):
            out["d"] = self.d
        else:
            out["n_tx"] = self.n_tx
        if self.anchor is not None:
            out["anchor"] = self.anchor
        out["Rc"] = [list(r) for r in self.Rc]
        out["Rs"] = list(self.Rs)
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def topology_from_json(text: str) -> TopologyGraph:
    blob = json.loads(text)
    params = {k: blob[k] for k in ("K", "U", "D", "d", "anchor", "n_tx") if k in blob}
    topo = build_topology(blob["kind"], **params)
    if [list(r) for r in topo.Rc] != blob["Rc"] or list(topo.Rs) != blob["Rs"]:
        raise InvalidTopology("connectivity sets do not match the named kind")
    return topo


def _antidote_sets(n: int, U: int, D: int, user: int) -> tuple:
    # user hears itself plus everything except U before and D after it
    others = (cyclic_residue(user + j, n) for j in range(D + 1, n - U))
    return tuple(sorted({user, *others}))


def _regular_sets(n: int, d: int, user: int) -> tuple:
    return tuple(sorted(cyclic_residue(user + j, n) for j in range(d)))


def build_topology(kind: str, **params) -> TopologyGraph:
    """Construct the connectivity sets for one of the supported networks.

    Parameters
    ----------
    kind : str
        ``antidote_replace`` (K receivers plus the sensor in place of user
        K+1 of a (K+1, U, D) network), ``antidote_add`` (sensor added to a
        (K, U, D) network), ``regular_replace``, ``regular_add`` or
        ``full``.
    K, U, D, d :
        Network parameters for the kind.
    anchor : int, optional
        For add kinds, the receiver whose set the sensor copies minus the
        receiver's own transmitter.  Defaults to 1.
    n_tx : int, optional
        Number of transmitters for ``full`` (defaults to K).
    """
    if kind not in TOPOLOGY_KINDS:
        raise InvalidTopology(f"unknown topology kind {kind!r}")
    K = int(params.get("K", 0))
    if K < 1:
        raise InvalidTopology("K must be >= 1")

    if kind == "full":
        n_tx = int(params.get("n_tx") or K)
        if n_tx < 1:
            raise InvalidTopology("n_tx must be >= 1")
        allc = tuple(range(1, n_tx + 1))
        return TopologyGraph(kind, K, n_tx, tuple(allc for _ in range(K)), allc)

    if kind.startswith("antidote"):
        U, D = int(params["U"]), int(params["D"])
        if U < 0 or D < U:
            raise InvalidTopology(f"need 0 <= U <= D, got U={U}, D={D}")
        if kind == "antidote_replace":
            if not K + 1 > U + D:
                raise InvalidTopology(f"need K+1 > U+D, got K={K}, U={U}, D={D}")
            n = K + 1
            sets = [_antidote_sets(n, U, D, j) for j in range(1, n + 1)]
            return TopologyGraph(kind, K, n, tuple(sets[:K]), sets[K], U=U, D=D)
        if not K > U + D:
            raise InvalidTopology(f"need K > U+D, got K={K}, U={U}, D={D}")
        anchor = int(params.get("anchor") or 1)
        if not 1 <= anchor <= K:
            raise InvalidTopology(f"anchor {anchor} outside 1..{K}")
        sets = [_antidote_sets(K, U, D, j) for j in range(1, K + 1)]
        rs = tuple(i for i in sets[anchor - 1] if i != anchor)
        if not rs:
            raise InvalidTopology("sensor would hear no transmitter (need K > U+D+1)")
        return TopologyGraph(kind, K, K, tuple(sets), rs, U=U, D=D, anchor=anchor)

    d = int(params["d"])
    if not 1 <= d <= K:
        raise InvalidTopology(f"need 1 <= d <= K, got d={d}, K={K}")
    if kind == "regular_replace":
        n = K + 1
        sets = [_regular_sets(n, d, j) for j in range(1, n + 1)]
        return TopologyGraph(kind, K, n, tuple(sets[:K]), sets[K], d=d)
    anchor = int(params.get("anchor") or 1)
    if not 1 <= anchor <= K:
        raise InvalidTopology(f"anchor {anchor} outside 1..{K}")
    sets = [_regular_sets(K, d, j) for j in range(1, K + 1)]
    rs = tuple(i for i in sets[anchor - 1] if i != anchor)
    if not rs:
        raise InvalidTopology("sensor would hear no transmitter (need d >= 2)")
    return TopologyGraph(kind, K, K, tuple(sets), rs, d=d, anchor=anchor)


# ---------------------------------------------------------------------------
# channel tensor
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class LinkGeometry:
    rx_distances: Sequence[float]
    target_distance: float
    pathloss_exponent: float = 3.5

    def __post_init__(self):
        dist = np.asarray(self.rx_distances, dtype=float)
        if np.any(dist <= 0) or self.target_distance <= 0:
            raise InvalidArgument("distances must be positive")
        if self.pathloss_exponent <= 0:
            raise InvalidArgument("path-loss exponent must be positive")
        object.__setattr__(self, "rx_distances", tuple(float(v) for v in dist))


def path_gain(distance, exponent: float):
    """Power gain d^(-exponent)."""
    return np.asarray(distance, dtype=float) ** (-exponent)


@dataclass(frozen=True)
class ChannelTensor:
    """Per-slot gains from every transmit antenna to every receive antenna.

    ``gains`` has shape ``(..., t0, R, M)``: optional leading batch axes,
    then slot, receive row and transmit column.  Rows are grouped per user
    (receivers first, the sensor last) according to ``rx_antennas``;
    columns are grouped per transmitter according to ``tx_antennas``.
    """

    gains: np.ndarray
    rx_antennas: tuple
    tx_antennas: tuple
    coherence: tuple = field(default=())

    def __post_init__(self):
        g = np.asarray(self.gains, dtype=complex)
        if g.ndim < 3:
            raise InvalidArgument("gains need at least (t0, R, M) axes")
        if g.shape[-2] != sum(self.rx_antennas) or g.shape[-1] != sum(self.tx_antennas):
            raise InvalidArgument("antenna counts do not match gain dimensions")
        if not np.all(np.isfinite(g)):
            raise InvalidArgument("non-finite channel gains")
        g.setflags(write=False)
        object.__setattr__(self, "gains", g)
        object.__setattr__(self, "rx_antennas", tuple(int(v) for v in self.rx_antennas))
        object.__setattr__(self, "tx_antennas", tuple(int(v) for v in self.tx_antennas))
        if not self.coherence:
            object.__setattr__(self, "coherence", (FAST,) * len(self.rx_antennas))

    @property
    def n_rx(self) -> int:
        """Number of users, sensor included."""
        return len(self.rx_antennas)

    @property
    def n_receivers(self) -> int:
        return len(self.rx_antennas) - 1

    @property
    def n_slots(self) -> int:
        return self.gains.shape[-3]

    def rows(self, user: int) -> slice:
        start = sum(self.rx_antennas[: user - 1])
        return slice(start, start + self.rx_antennas[user - 1])

    def cols(self, tx: int) -> slice:
        start = sum(self.tx_antennas[: tx - 1])
        return slice(start, start + self.tx_antennas[tx - 1])

    @property
    def sensor_rows(self) -> slice:
        return self.rows(self.n_rx)

    def link(self, k: int, i: int, t: int) -> np.ndarray:
        """H^[ki](t), 1-based user, transmitter and slot."""
        return self.gains[..., t - 1, self.rows(k), self.cols(i)]

    def sensor_channel(self) -> np.ndarray:
        """Sensor row at the first slot, shape (..., M)."""
        return self.gains[..., 0, self.sensor_rows.start, :]


def _coherence_rows(spec, n_users: int) -> tuple:
    if isinstance(spec, str):
        if spec == "heterogeneous":
            return (FAST,) * (n_users - 1) + (CONSTANT,)
        if spec in ("block", CONSTANT):
            return (CONSTANT,) * n_users
        if spec in ("fast", FAST):
            return (FAST,) * n_users
        raise InvalidArgument(f"unknown coherence spec {spec!r}")
    rows = tuple(spec)
    if len(rows) != n_users or any(r not in (FAST, CONSTANT) for r in rows):
        raise InvalidArgument("coherence spec must name one regime per user")
    return rows


def sample_channel(
    topology: TopologyGraph,
    antennas,
    t0: int,
    coherence_spec="heterogeneous",
    rng_seed=None,
) -> ChannelTensor:
    """Draw a Rayleigh channel for ``topology`` over ``t0`` slots.

    ``antennas`` is ``None`` (everyone single-antenna) or a pair
    ``(rx_antennas, tx_antennas)`` with one entry per receiver and per
    transmitter; the sensor always has a single antenna.  Fast rows are
    redrawn in every slot, constant rows once per block.  Links missing from
    the topology are exactly zero.
    """
    if t0 < 1:
        raise InvalidArgument("t0 must be >= 1")
    if antennas is None:
        rx = [1] * topology.n_receivers
        tx = [1] * topology.n_tx
    else:
        rx, tx = list(antennas[0]), list(antennas[1])
        if len(rx) != topology.n_receivers or len(tx) != topology.n_tx:
            raise InvalidArgument("antenna lists do not match the topology")
    rx_all = tuple(rx) + (1,)
    coherence = _coherence_rows(coherence_spec, len(rx_all))
    rng = make_rng(rng_seed)
    M = sum(tx)
    blocks = []
    for user, (n_k, regime) in enumerate(zip(rx_all, coherence), start=1):
        if regime == FAST:
            g = rayleigh(rng, (t0, n_k, M))
        else:
            g = np.broadcast_to(rayleigh(rng, (1, n_k, M)), (t0, n_k, M)).copy()
        heard = topology.connected(user)
        col = 0
        for i, m_i in enumerate(tx, start=1):
            if i not in heard:
                g[:, :, col : col + m_i] = 0
            col += m_i
        blocks.append(g)
    return ChannelTensor(np.concatenate(blocks, axis=1), rx_all, tuple(tx), coherence)


def apply_pathloss(tensor: ChannelTensor, geometry: LinkGeometry) -> ChannelTensor:
    """Scale receiver rows by d_k^(-alpha/2) and the sensor row by the target distance."""
    if len(geometry.rx_distances) != tensor.n_receivers:
        raise InvalidArgument("one distance per receiver is required")
    dists = list(geometry.rx_distances) + [geometry.target_distance]
    amp = np.concatenate(
        [np.full(n_k, d ** (-geometry.pathloss_exponent / 2)) for n_k, d in zip(tensor.rx_antennas, dists)]
    )
    scaled = tensor.gains * amp[:, None]
    return ChannelTensor(scaled, tensor.rx_antennas, tensor.tx_antennas, tensor.coherence)


def propagate(H: ChannelTensor, x: np.ndarray, noise: np.ndarray | None = None) -> np.ndarray:
    """Received samples y(t) = H(t) x(t) (+ noise), shape (..., t0, R)."""
    y = np.einsum("...trm,...tm->...tr", H.gains, x)
    if noise is not None:
        y = y + noise
    return y
