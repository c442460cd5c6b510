"""Monte Carlo SNR sweeps comparing the proposed sensor path with TIN and SIC.

One trial draws user and target distances, a Rayleigh channel with path
loss, DQPSK message streams and a unit-power noise realisation.  The same
transmitted block is then observed at every SNR point with the noise scaled
so that P / sigma^2 equals the target SNR after path loss at each receiver
and at the sensor.  Sensor errors are divided by the sensor path gain so
that they are comparable across trials.

The proposed scheme shapes its sensing signals together with the
communication precoding.  The TIN and SIC baselines send the same
communication signal plus a plain orthonormal pilot sequence, one fresh
column per slot at the same sensing power.  Receivers know and remove
whichever sensing signal was sent, so every pipeline decodes the same
communication observation.
"""

from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from . import __version__, baselines, bia, dof, tim
from .channel import (LinkGeometry, apply_pathloss, build_topology, path_gain, propagate, rayleigh,
                      sample_channel, trial_rng)
from .config import SimConfig
from .errors import CapExceeded, DegenerateChannel, InfeasibleScheme, InvalidArgument, InvalidTopology
from .pilots import generate_pilots, ls_estimate

METHODS = ("proposed", "tin", "sic")
CSV_HEADER = ["snr_db", "cee_proposed", "cee_tin", "cee_sic", "ser_proposed", "ser_tin", "ser_sic"]
SNR_DEFINITION = "SNR = P / sigma^2 after path loss: sigma_r^2 = P * g_r / SNR for every receiver row and the sensor"
CEE_DEFINITION = "CEE = ||h - h_hat||^2 / g_s, with g_s the sensor path gain"


# ---------------------------------------------------------------------------
# per-scheme set-up
# ---------------------------------------------------------------------------
@dataclass
class _Setup:
    plan: object
    H: object
    pilots: object
    sensed: np.ndarray
    hold: int
    row_gain: np.ndarray
    sensor_gain: float


def _per_rx_per_period(plan) -> int:
    if isinstance(plan, bia.BiaPlan):
        owners = plan.message_owner
        return int(min(np.sum(owners == k) for k in range(1, plan.K + 1)))
    return plan.n_messages // plan.K


def _geometry(cfg: SimConfig, n_rx: int, rng) -> LinkGeometry:
    lo, hi = cfg.rx_distance_range_m
    tlo, thi = cfg.target_distance_range_m
    return LinkGeometry(tuple(rng.uniform(lo, hi, n_rx)), float(rng.uniform(tlo, thi)), cfg.pathloss_exponent)


def _row_gains(H, geom: LinkGeometry) -> np.ndarray:
    dists = list(geom.rx_distances) + [geom.target_distance]
    return np.concatenate([np.full(n_k, path_gain(d, geom.pathloss_exponent)) for n_k, d in zip(H.rx_antennas, dists)])


def _build_setup(cfg: SimConfig, rng) -> _Setup:
    """Plan, path-lossed channel and pilots for one trial; may raise DegenerateChannel."""
    p = cfg.scheme_params()
    if cfg.scheme == "bia_ic":
        K = p["K"]
        plan = bia.plan_ic(K, n_periods=max(cfg.n_symbols, math.ceil(K / (K - 1))))
        topo = build_topology("full", K=K, n_tx=K)
        H = sample_channel(topo, None, plan.t0, "heterogeneous", rng)
        sensed = np.arange(K)
        hold = plan.a
    elif cfg.scheme in ("bia_miso", "bia_mimo"):
        m = p["m"]
        rx = [1] * p["K"] if cfg.scheme == "bia_miso" else list(p["n"])
        a = math.ceil(m / sum(rx))
        if a < 2:
            raise InfeasibleScheme(f"m={m} leaves no room for sensing with {sum(rx)} receive antennas")
        # every receiver gets at least a-1 symbols per period
        n_periods = max(math.ceil(m / (a - 1)), math.ceil(cfg.n_symbols / (a - 1)))
        topo = build_topology("full", K=len(rx), n_tx=1)
        H = sample_channel(topo, (rx, [m]), a * n_periods, "heterogeneous", rng)
        plan = bia.plan_miso(m, p["K"], H) if cfg.scheme == "bia_miso" else bia.plan_mimo(m, p["n"], H)
        sensed = np.arange(m)
        hold = plan.a
    else:
        if cfg.scheme == "tim_antidote":
            plan = tim.plan_antidote(p["K"], p["U"], p["D"], p["mode"], rng=rng)
        else:
            plan = tim.plan_regular(p["K"], p["d"], p["mode"], rng=rng)
        n_periods = max(plan.n_periods, math.ceil(cfg.n_symbols / _per_rx_per_period(plan)))
        plan = replace(plan, n_periods=n_periods)
        H = sample_channel(plan.topology, None, plan.t0, "block", rng)
        sensed = np.array(plan.sensing_tx) - 1
        hold = 1
    m_prime = sensed.size
    pilots = generate_pilots(m_prime, plan.pilot_columns)
    if isinstance(plan, tim.TimPlan):
        plan = tim.solve_sensing_signals(plan, pilots)
    geom = _geometry(cfg, H.n_receivers, rng)
    gains = _row_gains(H, geom)
    H = apply_pathloss(H, geom)
    return _Setup(plan, H, pilots, sensed, hold, gains, float(gains[-1]))


def _encode(setup: _Setup, W, cfg: SimConfig):
    if isinstance(setup.plan, bia.BiaPlan):
        return bia.encode_block(setup.plan, W, setup.pilots, power=cfg.tx_power_w, comm_fraction=cfg.comm_fraction)
    return tim.encode_block(setup.plan, W, power=cfg.tx_power_w, comm_fraction=cfg.comm_fraction)


def _decode(setup: _Setup, Y, sig):
    if isinstance(setup.plan, bia.BiaPlan):
        return bia.decode_receivers(setup.plan, Y, setup.H, sig)
    return tim.decode_receivers(setup.plan, Y, setup.H, sig)


def _baseline_signal(setup: _Setup, sig, cfg: SimConfig):
    """Same communication part with an unshaped pilot sequence for sensing."""
    t0 = sig.x.shape[-2]
    X = generate_pilots(setup.sensed.size, t0).X
    per_tx = np.abs(X) ** 2
    if isinstance(setup.plan, bia.BiaPlan) and setup.plan.variant != "ic":
        per_tx = per_tx.sum(axis=0)
    beta = np.sqrt((1 - cfg.comm_fraction) * cfg.tx_power_w / per_tx.max())
    sensing = np.zeros_like(sig.x)
    sensing[:, setup.sensed] = beta * X.T
    return replace(sig, x=sig.comm + sensing, sensing=sensing, sensing_scale=float(beta))


def _ser(setup: _Setup, Y, sig, idx) -> float:
    est = _decode(setup, Y, sig).symbols
    errors = sum(int(np.sum(baselines.dqpsk_differential_detect(est[:, s]) != idx[s]))
                 for s in range(setup.plan.n_messages))
    return errors / idx.size


def _effective(setup: _Setup, y_s):
    if isinstance(setup.plan, bia.BiaPlan):
        return bia.sensor_differences(setup.plan, y_s)
    return tim.sensor_projections(setup.plan, y_s)


# ---------------------------------------------------------------------------
# trials
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class TrialResult:
    trial: int
    cee: np.ndarray
    ser: np.ndarray
    resamples: int


def _draw(cfg: SimConfig, rng, max_tries: int):
    """Set-up plus signals, redrawing while the channel realisation is degenerate."""
    resamples = 0
    while True:
        try:
            setup = _build_setup(cfg, rng)
            plan = setup.plan
            idx = rng.integers(0, 4, (plan.n_messages, plan.n_periods - 1))
            W = np.stack([baselines.dqpsk_modulate(i, 0.0, include_reference=True) for i in idx], axis=-1)
            sig = _encode(setup, W, cfg)
            Y0 = propagate(setup.H, sig.x)
            if _decode(setup, Y0, sig).ill_conditioned:
                raise DegenerateChannel("receiver zero-forcing is ill-conditioned")
            return setup, idx, sig, Y0, resamples
        except DegenerateChannel:
            resamples += 1
            if resamples > max_tries:
                raise CapExceeded(f"{resamples} degenerate draws within one trial") from None


def run_trial(cfg: SimConfig, trial: int, max_tries: int = 10) -> TrialResult:
    rng = trial_rng(cfg.seed, trial)
    setup, idx, sig, Y0, resamples = _draw(cfg, rng, max_tries)
    plan = setup.plan
    Z = rayleigh(rng, Y0.shape)
    base = _baseline_signal(setup, sig, cfg)
    Yb0 = propagate(setup.H, base.x)
    h = setup.H.sensor_channel()[setup.sensed]
    S = base.sensing[:, setup.sensed].T
    Xb = sig.sensing_scale * setup.pilots.X[:, : plan.pilot_columns]
    snrs = cfg.snr_db_range
    cee = np.zeros((len(snrs), len(METHODS)))
    ser = np.zeros((len(snrs), len(METHODS)))
    for n, snr_db in enumerate(snrs):
        noise = Z * np.sqrt(cfg.tx_power_w * setup.row_gain / 10 ** (snr_db / 10))
        Y = Y0 + noise
        Yb = Yb0 + noise
        ser[n, 0] = _ser(setup, Y, sig, idx)
        # TIN and SIC differ only at the sensor
        ser[n, 1] = ser[n, 2] = _ser(setup, Yb, base, idx)
        prop = ls_estimate(_effective(setup, Y[:, -1]), Xb, h).cee
        tin = baselines.tin_sensor_estimate(Yb[:, -1], S, h).cee
        sic = baselines.sic_sensor_estimate(Yb[:, -1], S, hold=setup.hold, h=h).cee
        cee[n] = np.array([prop, tin, sic]) / setup.sensor_gain
    return TrialResult(trial, cee, ser, resamples)


# ---------------------------------------------------------------------------
# sweep
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class SweepRow:
    snr_db: float
    cee: dict
    cee_db: dict
    ser: dict
    trials: int
    degenerate_resamples: int


@dataclass(frozen=True)
class SweepResult:
    config: SimConfig
    rows: tuple
    trials: tuple
    degenerate_resamples: int
    point: dof.TradeoffPoint

    def cee_array(self, method: str) -> np.ndarray:
        return np.array([r.cee[method] for r in self.rows])

    def gain_db(self, baseline: str) -> np.ndarray:
        """Baseline CEE over proposed CEE in dB at each SNR."""
        return 10 * np.log10(self.cee_array(baseline) / self.cee_array("proposed"))


def check_feasible(cfg: SimConfig) -> dof.TradeoffPoint:
    """Closed-form point of the configured scheme, or InfeasibleScheme."""
    family, params = cfg.scheme, cfg.scheme_params()
    try:
        point = dof.scheme_point(family, params)
    except (InvalidArgument, InvalidTopology) as exc:
        raise InfeasibleScheme(f"{family} {params}: {exc}") from None
    if point.sdof == 0:
        raise InfeasibleScheme(f"{family} {params}: the scheme leaves no sensing observations")
    return point


def run_sweep(cfg: SimConfig, workers: int | None = None) -> SweepResult:
    point = check_feasible(cfg)
    workers = workers or cfg.workers
    if workers == 1:
        results = [run_trial(cfg, t) for t in range(cfg.n_trials)]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(lambda t: run_trial(cfg, t), range(cfg.n_trials)))
    resamples = sum(r.resamples for r in results)
    cap = math.floor(cfg.max_degenerate_fraction * cfg.n_trials)
    if resamples > cap:
        raise CapExceeded(f"{resamples} degenerate channel draws over {cfg.n_trials} trials; the cap is {cap}")
    rows = []
    for n, snr_db in enumerate(cfg.snr_db_range):
        cee = {m: math.fsum(r.cee[n, j] for r in results) / len(results) for j, m in enumerate(METHODS)}
        ser = {m: math.fsum(r.ser[n, j] for r in results) / len(results) for j, m in enumerate(METHODS)}
        cee_db = {m: 10 * math.log10(v) if v > 0 else -math.inf for m, v in cee.items()}
        rows.append(SweepRow(float(snr_db), cee, cee_db, ser, len(results), resamples))
    return SweepResult(cfg, tuple(rows), tuple(results), resamples, point)


# ---------------------------------------------------------------------------
# outputs
# ---------------------------------------------------------------------------
def sweep_csv(result: SweepResult) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in result.rows:
        w.writerow([repr(r.snr_db)] + [repr(r.cee[m]) for m in METHODS] + [repr(r.ser[m]) for m in METHODS])
    return buf.getvalue()


def tradeoff_report(cfg: SimConfig) -> dof.HullReport:
    family, params = cfg.scheme, cfg.scheme_params()
    point = dof.scheme_point(family, params)
    return dof.pareto_hull([dof.SENSING_ONLY, point, dof.comm_only_point(family, params)])


def manifest(result: SweepResult) -> dict:
    cfg = result.config
    return {
        "package": "isac_im",
        "version": __version__,
        "git_describe": "",
        "seed": cfg.seed,
        "config": cfg.to_dict(),
        "snr_definition": SNR_DEFINITION,
        "cee_definition": CEE_DEFINITION,
        "degenerate_resamples": result.degenerate_resamples,
        "table_rows": {
            "honoured": ["SNR range", "number of symbols", "transmit power", "path loss exponent",
                         "Monte Carlo trials", "modulation order (DQPSK)", "user distances", "target distances"],
            "substituted": {
                "LDPC code rate": "uncoded DQPSK; SER reported instead of coded BER",
                "samples per symbol / sampling frequency / symbol rate": "symbol-rate complex baseband",
                "rolloff factor / filter span": "no pulse shaping; the matched-filter output is the symbol",
                "carrier frequency": "baseband only",
            },
        },
    }


def summary(result: SweepResult) -> dict:
    rows = []
    for r, g_tin, g_sic in zip(result.rows, result.gain_db("tin"), result.gain_db("sic")):
        rows.append({"snr_db": r.snr_db, "cee_db": r.cee_db, "ser": r.ser,
                     "gain_vs_tin_db": float(g_tin), "gain_vs_sic_db": float(g_sic)})
    p = result.point
    return {"scheme": result.config.scheme, "params": {k: list(v) if isinstance(v, tuple) else v
                                                       for k, v in result.config.scheme_params().items()},
            "point": [p.sdof.numerator, p.sdof.denominator, p.cdof.numerator, p.cdof.denominator],
            "trials": result.config.n_trials, "degenerate_resamples": result.degenerate_resamples, "rows": rows}


def emit_outputs(result: SweepResult, out_dir=None) -> dict:
    """Write sweep.csv, tradeoff.json, manifest.json, summary.json and the figures."""
    import os

    out_dir = out_dir or result.config.out_dir
    os.makedirs(out_dir, exist_ok=True)
    paths = {name: os.path.join(out_dir, name)
             for name in ("sweep.csv", "tradeoff.json", "manifest.json", "summary.json")}
    hull = tradeoff_report(result.config)
    with open(paths["sweep.csv"], "w", encoding="utf-8", newline="") as fh:
        fh.write(sweep_csv(result))
    with open(paths["tradeoff.json"], "w", encoding="utf-8") as fh:
        json.dump(hull.to_dict(), fh, indent=2)
    with open(paths["manifest.json"], "w", encoding="utf-8") as fh:
        json.dump(manifest(result), fh, indent=2)
    with open(paths["summary.json"], "w", encoding="utf-8") as fh:
        json.dump(summary(result), fh, indent=2)
    if result.config.plots:
        from . import plotting

        paths["cee_vs_snr.png"] = plotting.plot_cee_vs_snr(result, os.path.join(out_dir, "cee_vs_snr.png"))
        paths["tradeoff.png"] = plotting.plot_tradeoff(hull, result.point, os.path.join(out_dir, "tradeoff.png"))
    return paths
