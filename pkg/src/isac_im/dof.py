"""Sensing/communication DoF points, their upper hull and numeric certification.

All points and gaps are exact fractions.  The hull is the upper concave
boundary of cdof as a function of sdof, which is what time sharing between
achievable points can reach.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from fractions import Fraction

import numpy as np

from . import bia, tim
from .channel import ChannelTensor, propagate
from .errors import InvalidArgument
from .pilots import PilotMatrix

FAMILIES = ("bia_ic", "bia_miso", "bia_mimo", "tim_antidote", "tim_regular")


@dataclass(frozen=True)
class TradeoffPoint:
    sdof: Fraction
    cdof: Fraction
    label: str = ""

    def __post_init__(self):
        s, c = Fraction(self.sdof), Fraction(self.cdof)
        if not 0 <= s <= 1:
            raise InvalidArgument(f"sdof must lie in [0, 1], got {s}")
        if c < 0:
            raise InvalidArgument(f"cdof must be >= 0, got {c}")
        object.__setattr__(self, "sdof", s)
        object.__setattr__(self, "cdof", c)

    def as_list(self) -> list:
        return [self.sdof.numerator, self.sdof.denominator, self.cdof.numerator, self.cdof.denominator]


def _need_int(params: dict, key: str, lo: int) -> int:
    if key not in params:
        raise InvalidArgument(f"missing parameter {key!r}")
    v = params[key]
    if isinstance(v, bool) or int(v) != v or v < lo:
        raise InvalidArgument(f"{key} must be an integer >= {lo}, got {v!r}")
    return int(v)


def _mode(params: dict) -> str:
    mode = params.get("mode", "replace")
    if mode not in ("replace", "add"):
        raise InvalidArgument(f"mode must be 'replace' or 'add', got {mode!r}")
    return mode


def _antidote(params: dict):
    K, U, D = _need_int(params, "K", 2), _need_int(params, "U", 0), _need_int(params, "D", 0)
    mode = _mode(params)
    if D < U:
        raise InvalidArgument("antidote networks need D >= U")
    if mode == "replace" and K + 1 <= U + D:
        raise InvalidArgument("replace kind needs K+1 > U+D")
    if mode == "add" and K <= U + D + 1:
        raise InvalidArgument("add kind needs K > U+D+1")
    L = K - D + U + 1 if mode == "replace" else K - D + U
    return K, U, D, mode, L


def _regular(params: dict):
    K, d = _need_int(params, "K", 2), _need_int(params, "d", 2)
    mode = _mode(params)
    if d > (K if mode == "replace" else K - 1):
        raise InvalidArgument(f"d={d} too large for the {mode} kind with K={K}")
    return K, d, mode


def _mimo_n(params: dict) -> tuple:
    n = params.get("n")
    if n is None or len(n) < 1 or any(int(x) != x or x < 1 for x in n):
        raise InvalidArgument("n must be a non-empty list of positive antenna counts")
    return tuple(int(x) for x in n)


def scheme_point(family: str, params: dict) -> TradeoffPoint:
    """Exact (sdof, cdof) reached by the scheme of ``family``."""
    if family == "bia_ic":
        K = _need_int(params, "K", 2)
        return TradeoffPoint(Fraction(K - 1, K), Fraction(1), f"bia_ic K={K}")
    if family in ("bia_miso", "bia_mimo"):
        m = _need_int(params, "m", 1)
        if family == "bia_miso":
            total = _need_int(params, "K", 1)
            label = f"bia_miso m={m} K={total}"
        else:
            n = _mimo_n(params)
            total = sum(n)
            label = f"bia_mimo m={m} n={list(n)}"
        a = math.ceil(m / total)
        return TradeoffPoint(Fraction(a - 1, a), Fraction(m, a), label)
    if family == "tim_antidote":
        K, U, D, mode, L = _antidote(params)
        return TradeoffPoint(Fraction(U + 1, L), Fraction(K * (U + 1), L), f"tim_antidote_{mode} K={K} U={U} D={D}")
    if family == "tim_regular":
        K, d, mode = _regular(params)
        n0 = 2 if mode == "replace" else 1
        return TradeoffPoint(Fraction(n0, d + 1), Fraction(2 * K, d + 1), f"tim_regular_{mode} K={K} d={d}")
    raise InvalidArgument(f"unknown family {family!r}; expected one of {FAMILIES}")


def comm_only_point(family: str, params: dict) -> TradeoffPoint:
    """The communication-only extreme (0, c_max) of a family."""
    if family == "bia_ic":
        _need_int(params, "K", 2)
        c = Fraction(1)
    elif family == "bia_miso":
        c = Fraction(min(_need_int(params, "m", 1), _need_int(params, "K", 1)))
    elif family == "bia_mimo":
        c = Fraction(min(_need_int(params, "m", 1), sum(_mimo_n(params))))
    elif family == "tim_antidote":
        K, U, D, mode, L = _antidote(params)
        c = Fraction(K * (U + 1), L)
    elif family == "tim_regular":
        K, d, _ = _regular(params)
        c = Fraction(2 * K, d + 1)
    else:
        raise InvalidArgument(f"unknown family {family!r}")
    return TradeoffPoint(Fraction(0), c, "communication only")


SENSING_ONLY = TradeoffPoint(Fraction(1), Fraction(0), "sensing only")


def extremes(family: str, params: dict) -> tuple:
    return SENSING_ONLY, comm_only_point(family, params)


# ---------------------------------------------------------------------------
# hull
# ---------------------------------------------------------------------------
def _chord(a: TradeoffPoint, b: TradeoffPoint, s: Fraction) -> Fraction:
    if a.sdof == b.sdof:
        return max(a.cdof, b.cdof)
    return a.cdof + (b.cdof - a.cdof) * (s - a.sdof) / (b.sdof - a.sdof)


@dataclass(frozen=True)
class HullReport:
    vertices: tuple
    gaps: tuple = field(default=())
    orientation: str = "upper concave boundary of cdof over sdof"

    def boundary(self, s) -> Fraction:
        """cdof of the hull boundary at sdof ``s``."""
        s = Fraction(s)
        vs = self.vertices
        if not vs[0].sdof <= s <= vs[-1].sdof:
            raise InvalidArgument(f"sdof {s} outside the hull range")
        for a, b in zip(vs, vs[1:]):
            if a.sdof <= s <= b.sdof:
                return _chord(a, b, s)
        return vs[0].cdof

    def to_dict(self) -> dict:
        return {
            "orientation": self.orientation,
            "vertices": [v.as_list() for v in self.vertices],
            "gaps": [[p.sdof.numerator, p.sdof.denominator, g.numerator, g.denominator] for p, g in self.gaps],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def _cross(o, a, b) -> Fraction:
    return (a.sdof - o.sdof) * (b.cdof - o.cdof) - (a.cdof - o.cdof) * (b.sdof - o.sdof)


def pareto_hull(points) -> HullReport:
    """Upper concave hull of ``points`` plus time-sharing gaps.

    The gap of every point with 0 < sdof < 1 is its cdof minus the chord
    between (1, 0) and (0, c_max), where c_max is the best cdof among the
    given points at sdof 0 (zero if there is none).
    """
    pts = list(points)
    if not pts:
        raise InvalidArgument("need at least one point")
    best = {}
    for p in pts:
        if p.sdof not in best or p.cdof > best[p.sdof].cdof:
            best[p.sdof] = p
    hull = []
    for p in sorted(best.values(), key=lambda q: q.sdof):
        while len(hull) >= 2 and _cross(hull[-2], hull[-1], p) >= 0:
            hull.pop()
        hull.append(p)
    c_max = best[Fraction(0)].cdof if Fraction(0) in best else Fraction(0)
    ext = (SENSING_ONLY, TradeoffPoint(Fraction(0), c_max))
    seen, gaps = set(), []
    for p in sorted(pts, key=lambda q: (q.sdof, q.cdof)):
        key = (p.sdof, p.cdof)
        if 0 < p.sdof < 1 and key not in seen:
            seen.add(key)
            gaps.append((p, compare_time_sharing(p, ext)))
    return HullReport(tuple(hull), tuple(gaps))


def compare_time_sharing(point: TradeoffPoint, extremes) -> Fraction:
    """cdof of ``point`` minus the time-sharing chord between the two extremes."""
    a, b = extremes
    lo, hi = sorted((a.sdof, b.sdof))
    if not lo <= point.sdof <= hi:
        raise InvalidArgument(f"sdof {point.sdof} outside [{lo}, {hi}]")
    return point.cdof - _chord(a, b, point.sdof)


# ---------------------------------------------------------------------------
# certification
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class ReceiverCertificate:
    receiver: int
    desired_rank: int
    interference_rank: int
    margin: float
    n_desired: int
    passed: bool


@dataclass(frozen=True)
class Certificate:
    receivers: tuple
    sensor_leakage: float
    claimed: TradeoffPoint
    achieved: TradeoffPoint
    counting_ok: bool
    passed: bool
    failures: tuple
    tol: float

    @property
    def failed_receivers(self) -> tuple:
        return tuple(r.receiver for r in self.receivers if not r.passed)

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "tol": self.tol,
            "claimed": self.claimed.as_list(),
            "achieved": self.achieved.as_list(),
            "counting_ok": self.counting_ok,
            "sensor_leakage": self.sensor_leakage,
            "receivers": [
                {"receiver": r.receiver, "desired_rank": r.desired_rank, "interference_rank": r.interference_rank,
                 "margin": r.margin, "n_desired": r.n_desired, "passed": r.passed}
                for r in self.receivers
            ],
            "failures": list(self.failures),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def _unit_signals(plan, batch: np.ndarray) -> tuple:
    """Communication-only transmit signals for a batch of message arrays, plus period length."""
    if isinstance(plan, bia.BiaPlan):
        zero = PilotMatrix(np.zeros((plan.m, plan.pilot_columns), dtype=complex))
        sig = bia.encode_block(plan, batch, zero, power=np.inf, comm_scale=1.0, sensing_scale=0.0)
        return sig.x, plan.a
    if isinstance(plan, tim.TimPlan):
        silent = replace(plan, xs=np.zeros((plan.n_periods, plan.m_prime, plan.L), dtype=complex))
        sig = tim.encode_block(silent, batch, power=np.inf, comm_scale=1.0, sensing_scale=0.0)
        return sig.x, plan.L
    raise InvalidArgument(f"cannot certify {type(plan).__name__}")


def _sensor_effective(plan, y_s: np.ndarray) -> np.ndarray:
    if isinstance(plan, bia.BiaPlan):
        return bia.sensor_differences(plan, y_s)
    return tim.sensor_projections(plan, y_s)


def _orth(A: np.ndarray, tol: float) -> tuple:
    """Orthonormal column basis of A and its numerical rank."""
    if A.shape[1] == 0:
        return A, 0
    U, s, _ = np.linalg.svd(A, full_matrices=False)
    r = int(np.sum(s > tol * max(1.0, s[0])))
    return U[:, :r], r


def certify_plan(plan, H: ChannelTensor, tol: float = 1e-8) -> Certificate:
    """Check a plan numerically on the channel ``H``.

    Every message symbol is sent on its own with all sensing switched off.
    In each period a receiver's desired responses must be independent of
    one another and of everything else it hears; the sensor's effective
    observations must not move at all.  The counted decodable symbols and
    observations per block are compared with the closed-form point.
    """
    J, S = plan.n_periods, plan.n_messages
    B = J * S
    batch = np.zeros((B, J, S), dtype=complex)
    batch.reshape(B, B)[np.arange(B), np.arange(B)] = 1.0
    x, P = _unit_signals(plan, batch)
    Y = propagate(H, x)
    owner = np.tile(plan.message_owner, J)
    period = np.repeat(np.arange(J), S)

    failures, certs = [], []
    decoded = 0
    for k in range(1, plan.K + 1):
        rows = H.rows(k)
        d_ranks, i_ranks, margins = [], [], []
        n_own = int(np.sum(plan.message_owner == k))
        for j in range(J):
            R = Y[:, j * P:(j + 1) * P, rows].reshape(B, -1).T
            own = (owner == k) & (period == j)
            Qd, rd = _orth(R[:, own], tol)
            Qi, ri = _orth(R[:, ~own], tol)
            stacked = np.hstack([Qd, Qi])
            margin = float(np.linalg.svd(stacked, compute_uv=False)[-1]) if stacked.shape[1] else 1.0
            if rd < n_own:
                margin = 0.0
            d_ranks.append(rd)
            i_ranks.append(ri)
            margins.append(margin)
        ok = min(d_ranks) == n_own and min(margins) > tol
        if ok:
            decoded += n_own * J
        else:
            failures.append(f"receiver {k}: desired rank {min(d_ranks)} of {n_own}, margin {min(margins):.3g}")
        certs.append(ReceiverCertificate(k, min(d_ranks), max(i_ranks), min(margins), n_own, ok))

    eff = _sensor_effective(plan, Y[:, :, H.sensor_rows][..., 0])
    leakage = float(np.abs(eff).max(initial=0.0))
    if leakage > tol:
        failures.append(f"sensor: communication leaks through with size {leakage:.3g}")

    family, params = plan.family
    claimed = scheme_point(family, params)
    achieved = TradeoffPoint(Fraction(eff.shape[-1], plan.t0), Fraction(decoded, plan.t0))
    counting_ok = (achieved.sdof, achieved.cdof) == (claimed.sdof, claimed.cdof)
    if not counting_ok:
        failures.append(f"counting: achieved ({achieved.sdof}, {achieved.cdof}) "
                        f"vs claimed ({claimed.sdof}, {claimed.cdof})")
    return Certificate(tuple(certs), leakage, claimed, achieved, counting_ok, not failures, tuple(failures), tol)
