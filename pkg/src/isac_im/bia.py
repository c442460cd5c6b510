"""Blind interference alignment with first-slot differencing at the sensor.

The user channels fade from slot to slot while the sensor channel stays put
for the whole block.  Every transmitter therefore repeats its communication
signal across a period of ``a`` slots and varies only the dedicated sensing
signal; subtracting the sensor's later samples from its first one removes
the repeated part and leaves clean pilot observations.

Three variants are built here:

* ``ic``   K single-antenna transmitters and receivers, period length K.
* ``miso`` one m-antenna transmitter, K single-antenna receivers, period
  ceil(m/K) with zero-forcing precoders taken from null spaces of stacked
  receiver rows.
* ``mimo`` the same with multi-antenna receivers, period ceil(m/sum n).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .channel import ChannelTensor, cyclic_residue
from .errors import DegenerateChannel, InfeasibleScheme, InvalidArgument, PowerViolation
from .pilots import COND_LIMIT, PilotMatrix

NULL_RTOL = 1e-10
OWN_ROW_MIN = 1e-6


@dataclass(frozen=True)
class Group:
    """Streams that one receiver decodes in one slot of a period.

    ``slot`` is 0 for the interference channel, where each symbol lasts the
    whole period.  ``antennas`` are the receiver's own antenna indices
    (1-based) used for decoding; ``streams`` index the per-period message
    vector.
    """

    receiver: int
    slot: int
    antennas: tuple
    streams: tuple


@dataclass(frozen=True)
class BiaPlan:
    variant: str
    K: int
    m: int
    n: tuple
    a: int
    n_periods: int
    pattern: np.ndarray
    groups: tuple
    precoders: np.ndarray | None = None
    r: int | None = None
    S: int | None = None
    q: int | None = None

    @property
    def t0(self) -> int:
        return self.a * self.n_periods

    @property
    def n_messages(self) -> int:
        """Message symbols per period."""
        return sum(len(g.streams) for g in self.groups)

    @property
    def pilot_columns(self) -> int:
        return self.n_periods * (self.a - 1)

    @property
    def decoded_per_block(self) -> int:
        return self.n_periods * self.n_messages

    @property
    def observations_per_block(self) -> int:
        return self.n_periods * (self.a - 1)

    @property
    def message_owner(self) -> np.ndarray:
        """Receiver (1-based) of every per-period stream."""
        owner = np.zeros(self.n_messages, dtype=int)
        for g in self.groups:
            owner[list(g.streams)] = g.receiver
        return owner

    @property
    def family(self) -> tuple:
        if self.variant == "ic":
            return "bia_ic", {"K": self.K}
        if self.variant == "miso":
            return "bia_miso", {"m": self.m, "K": self.K}
        return "bia_mimo", {"m": self.m, "n": self.n}

    def pilot_column(self, period: int, tau: int) -> int:
        """Pilot column (1-based) observed at slot tau+1 of a period (both 1-based)."""
        return (period - 1) * (self.a - 1) + tau


def sensing_pattern(a: int) -> np.ndarray:
    """a x (a-1) on/off matrix: row 1 all ones, row t drops column t-1."""
    P = np.ones((a, a - 1), dtype=int)
    for t in range(2, a + 1):
        P[t - 1, t - 2] = 0
    return P


def plan_ic(K: int, n_periods: int | None = None) -> BiaPlan:
    """Plan for the K-user interference channel (two periods of K slots)."""
    if K < 2:
        raise InfeasibleScheme("the interference-channel scheme needs K >= 2")
    n_periods = n_periods or math.ceil(K / (K - 1))
    groups = tuple(Group(k, 0, (1,), (k - 1,)) for k in range(1, K + 1))
    return BiaPlan("ic", K, K, (1,) * K, K, n_periods, sensing_pattern(K), groups)


def null_space(M: np.ndarray, dim: int) -> np.ndarray:
    """Orthonormal right null basis of the last two axes of ``M``.

    Returns shape (..., cols, dim).  Raises ``DegenerateChannel`` when the
    numerical null space (singular values below 1e-10 of the largest) is not
    exactly ``dim``-dimensional.  Each basis vector is rotated so that its
    first entry of magnitude above 1e-12 is real and positive.
    """
    rows, cols = M.shape[-2:]
    _, s, Vh = np.linalg.svd(M, full_matrices=True)
    rank = np.sum(s > NULL_RTOL * s[..., :1], axis=-1) if rows else np.zeros(M.shape[:-2], int)
    if np.any(cols - rank != dim):
        raise DegenerateChannel(f"null space dimension differs from {dim}")
    V = np.swapaxes(Vh[..., cols - dim:, :], -1, -2).conj()
    lead = np.argmax(np.abs(V) > 1e-12, axis=-2)
    ph = np.take_along_axis(V, lead[..., None, :], axis=-2)
    return V * (np.abs(ph) / ph)


def _mimo_layout(m: int, n: tuple):
    total = sum(n)
    b = math.ceil(m / total)
    r = cyclic_residue(m, total)
    S, acc = 0, 0
    while S < len(n) and acc + n[S] <= r:
        acc += n[S]
        S += 1
    q = r - acc
    blocks = []  # (receiver, slot, antennas)
    for t in range(1, b):
        for k, nk in enumerate(n, start=1):
            blocks.append((k, t, tuple(range(1, nk + 1))))
    for k in range(1, S + 1):
        blocks.append((k, b, tuple(range(1, n[k - 1] + 1))))
    if q:
        blocks.append((S + 1, b, tuple(range(1, q + 1))))
    return b, r, S, q, blocks


def _plan_precoded(variant: str, m: int, n: tuple, H: ChannelTensor) -> BiaPlan:
    K = len(n)
    if m <= sum(n):
        raise InfeasibleScheme(f"m={m} <= total receive antennas {sum(n)}: point collapses to (0, m)")
    if H.tx_antennas != (m,) or tuple(H.rx_antennas[:-1]) != n:
        raise InvalidArgument("channel does not match the antenna configuration")
    b, r, S, q, blocks = _mimo_layout(m, n)
    if H.n_slots % b:
        raise InvalidArgument(f"channel covers {H.n_slots} slots, not a multiple of the period {b}")
    n_periods = H.n_slots // b

    groups, first = [], 0
    for k, t, ants in blocks:
        groups.append(Group(k, t, ants, tuple(range(first, first + len(ants)))))
        first += len(ants)

    g = H.gains
    batch = g.shape[:-3]
    periods = g.reshape(batch + (n_periods, b) + g.shape[-2:])
    row_sets = [[H.rows(grp.receiver).start + a - 1 for a in grp.antennas] for grp in groups]
    V = np.zeros(batch + (n_periods, m, m), dtype=complex)
    for gi, grp in enumerate(groups):
        excl = [periods[..., other.slot - 1, row_sets[oi], :]
                for oi, other in enumerate(groups) if oi != gi]
        M = np.concatenate(excl, axis=-2)
        basis = null_space(M, len(grp.antennas))
        own = periods[..., grp.slot - 1, row_sets[gi], :] @ basis
        if np.any(np.linalg.svd(own, compute_uv=False)[..., -1] < OWN_ROW_MIN):
            raise DegenerateChannel("precoder nearly orthogonal to its own receiver")
        V[..., list(grp.streams)] = basis
    return BiaPlan(variant, K, m, n, b, n_periods, sensing_pattern(b), tuple(groups),
                   V, r=r, S=S, q=q)


def plan_miso(m: int, K: int, H: ChannelTensor) -> BiaPlan:
    """MU-MISO plan; the exclusion null vectors are computed per period of H."""
    return _plan_precoded("miso", m, (1,) * K, H)


def plan_mimo(m: int, n, H: ChannelTensor) -> BiaPlan:
    """MU-MIMO plan for receivers with ``n`` antennas (nonincreasing)."""
    n = tuple(int(v) for v in n)
    if list(n) != sorted(n, reverse=True):
        raise InvalidArgument("receiver antenna counts must be nonincreasing")
    return _plan_precoded("mimo", m, n, H)


# ---------------------------------------------------------------------------
# transmit side
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class BlockSignal:
    """Transmitted block, split into its communication and sensing parts."""

    x: np.ndarray
    comm: np.ndarray
    sensing: np.ndarray
    comm_scale: float
    sensing_scale: float


def sensing_block(plan: BiaPlan, pilots: PilotMatrix) -> np.ndarray:
    """Unscaled sensing signals per slot, shape (t0, m)."""
    if pilots.m_prime != plan.m:
        raise InvalidArgument(f"pilots have {pilots.m_prime} rows, plan needs {plan.m}")
    if pilots.N < plan.pilot_columns:
        raise InvalidArgument(f"plan consumes {plan.pilot_columns} pilot columns, got {pilots.N}")
    out = np.zeros((plan.t0, plan.m), dtype=complex)
    w = plan.a - 1
    for j in range(plan.n_periods):
        Xj = pilots.X[:, j * w:(j + 1) * w]
        out[j * plan.a:(j + 1) * plan.a] = plan.pattern @ Xj.T
    return out


def _per_tx_power(plan: BiaPlan, signal: np.ndarray) -> np.ndarray:
    # IC: one antenna per transmitter; precoded variants: a single transmitter
    if plan.variant == "ic":
        return np.abs(signal) ** 2
    return np.sum(np.abs(signal) ** 2, axis=-1, keepdims=True)


def encode_block(plan: BiaPlan, messages, pilots: PilotMatrix, power: float = 1.0,
                 comm_fraction: float = 0.5, comm_scale: float | None = None,
                 sensing_scale: float | None = None) -> BlockSignal:
    """Transmit signals for one block, shape (..., t0, m).

    ``messages`` has shape (..., n_periods, n_messages).  Communication
    symbols are assumed unit power; by default the communication part gets
    ``comm_fraction * power`` per slot and the sensing part the rest.
    """
    W = np.asarray(messages, dtype=complex)
    if W.shape[-2:] != (plan.n_periods, plan.n_messages):
        raise InvalidArgument(f"messages must end in {(plan.n_periods, plan.n_messages)}, got {W.shape}")
    Pc, Ps = comm_fraction * power, (1 - comm_fraction) * power

    raw_s = sensing_block(plan, pilots)
    if sensing_scale is None:
        peak = _per_tx_power(plan, raw_s).max()
        sensing_scale = float(np.sqrt(Ps / peak)) if peak > 0 else 0.0
    if comm_scale is None:
        per_symbol = 1.0 if plan.variant == "ic" else float(plan.n_messages)
        comm_scale = float(np.sqrt(Pc / per_symbol))

    if plan.variant == "ic":
        comm_power = comm_scale ** 2
        xc = np.repeat(W, plan.a, axis=-2)
    else:
        # unit-norm precoder columns, independent unit-power symbols
        comm_power = comm_scale ** 2 * plan.n_messages
        xc = np.einsum("...jms,...js->...jm", plan.precoders, W)
        xc = np.repeat(xc, plan.a, axis=-2)
    xc = comm_scale * xc
    xs = sensing_scale * raw_s
    budget = comm_power + _per_tx_power(plan, xs).max()
    if budget > power * (1 + 1e-9):
        raise PowerViolation(f"expected per-slot power {budget:.6g} exceeds {power:.6g}")
    xs_full = np.broadcast_to(xs, xc.shape)
    return BlockSignal(xc + xs_full, xc, xs_full, comm_scale, sensing_scale)


# ---------------------------------------------------------------------------
# receivers
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class BiaDecode:
    symbols: np.ndarray
    all_estimates: np.ndarray | None
    max_condition: float
    ill_conditioned: bool


def decode_receivers(plan: BiaPlan, Y, H: ChannelTensor, signal: BlockSignal) -> BiaDecode:
    """Zero-forcing decode of every receiver's streams.

    ``Y`` holds the received samples (..., t0, R) as produced by
    ``channel.propagate``.  The known sensing contribution is subtracted
    first.  For the interference channel each receiver solves the full
    K x K system of its period; the precoded variants only need the small
    per-group system because the null-space precoders already removed the
    other streams.
    """
    Y = np.asarray(Y)
    g = H.gains
    clean = Y - np.einsum("...trm,...tm->...tr", g, signal.sensing)
    batch = np.broadcast_shapes(clean.shape[:-2], g.shape[:-3])
    a, J = plan.a, plan.n_periods
    clean = np.broadcast_to(clean, batch + clean.shape[-2:])
    g = np.broadcast_to(g, batch + g.shape[-3:])

    if plan.variant == "ic":
        K = plan.K
        # A[..., j, k, t, i] = alpha * H^[ki](period j, slot t)
        A = signal.comm_scale * g[..., :K, :].reshape(batch + (J, a, K, K))
        A = np.swapaxes(A, -3, -2)
        rhs = np.swapaxes(clean[..., :K].reshape(batch + (J, a, K)), -1, -2)
        sol = np.linalg.solve(A, rhs[..., None])[..., 0]
        cond = np.linalg.cond(A)
        own = np.diagonal(sol, axis1=-2, axis2=-1)
        worst = float(np.max(cond))
        return BiaDecode(own, sol, worst, worst > COND_LIMIT)

    Vp = plan.precoders
    gp = g.reshape(batch + (J, a) + g.shape[-2:])
    cp = clean.reshape(batch + (J, a, clean.shape[-1]))
    out = np.zeros(batch + (J, plan.n_messages), dtype=complex)
    worst = 1.0
    for grp in plan.groups:
        rows = [H.rows(grp.receiver).start + x - 1 for x in grp.antennas]
        cols = list(grp.streams)
        A = signal.comm_scale * gp[..., grp.slot - 1, rows, :] @ Vp[..., cols]
        rhs = cp[..., grp.slot - 1, rows]
        out[..., cols] = np.linalg.solve(A, rhs[..., None])[..., 0]
        worst = max(worst, float(np.max(np.linalg.cond(A))))
    return BiaDecode(out, None, worst, worst > COND_LIMIT)


# ---------------------------------------------------------------------------
# sensor
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class EffectiveObservation:
    value: complex
    column: int
    noise_multiplier: int = 2


def sensor_differences(plan: BiaPlan, y_s) -> np.ndarray:
    """Differenced sensor samples ordered by pilot column, shape (..., N)."""
    y = np.asarray(y_s)
    per = y.reshape(y.shape[:-1] + (plan.n_periods, plan.a))
    diff = per[..., :1] - per[..., 1:]
    return diff.reshape(y.shape[:-1] + (plan.pilot_columns,))


def sensor_observations(plan: BiaPlan, y_s) -> list:
    """Effective observations y_s(1) - y_s(tau) of every period."""
    vals = sensor_differences(plan, y_s)
    return [EffectiveObservation(complex(v), n + 1) for n, v in enumerate(vals)]


def plan_to_json(plan: BiaPlan) -> str:
    blob = {
        "variant": plan.variant,
        "K": plan.K,
        "m": plan.m,
        "n": list(plan.n),
        "a": plan.a,
        "n_periods": plan.n_periods,
        "t0": plan.t0,
        "pattern": plan.pattern.tolist(),
        "schedule": [
            {"receiver": g.receiver, "slot": g.slot, "antennas": list(g.antennas), "streams": list(g.streams)}
            for g in plan.groups
        ],
        "precoders": None,
    }
    if plan.precoders is not None:
        blob["precoders"] = {"re": plan.precoders.real.tolist(), "im": plan.precoders.imag.tolist()}
    return json.dumps(blob)
