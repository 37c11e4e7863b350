"""Seeded Monte-Carlo trials, sweeps over (scheme, SNR, block length) and CSV output.

Random streams
--------------
Every trial owns two streams built from ``numpy.random.SeedSequence``:

* the scene stream ``[seed, key("scene"), snr_index, rho_index, trial]``,
  spawned into source / mask / gain / noise generators, so every scheme of
  a cell sees the same latent, mask, channel draw and channel noise;
* the scheme stream ``[seed, key(scheme), snr_index, rho_index, trial]``
  for receiver-side randomness (water-filling noise).

``key(label)`` is the first 8 bytes of the BLAKE2b digest of the label.
Re-running a single cell therefore reproduces its rows exactly.
"""

import hashlib
import io
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from .channel import (LEVEL_CEIL, EqualizedOutput, clamp_levels, draw_channel, equalize,
                      transmit)
from .denoiser import AnalyticDenoiser, NetworkDenoiser
from .engine import denoise_fast, denoise_slow
from .errors import ChandiffError, ModelFileError
from .estimator import (ALPHA_CEIL, ALPHA_FLOOR, MomentPhaseEstimator, MomentSnrEstimator,
                        NetworkPhaseEstimator, NetworkSnrEstimator, joint_estimate, wrap_phase)
from .latent_ops import element_mask, mask_tokens, mse, psnr, to_tokens
from .serialization import read_model
from .signal import l2_normalize, power_normalize, to_complex, to_real
from .sources import ConditioningVector, sample_source

SCHEMA = "chandiff-trials v1"
COLUMNS = ("trial", "seed", "scheme", "snr_db", "rho", "mask_ratio", "mse", "psnr_db",
           "est_alpha_error", "est_phase_error", "iterations", "status", "wall_time")
SUMMARY_COLUMNS = ("scheme", "snr_db", "rho", "mask_ratio", "n", "mse_mean", "mse_se",
                   "psnr_db_of_mean")
WORKERS_ENV = "CHANDIFF_WORKERS"
NA = "NA"


def label_key(label: str) -> int:
    return int.from_bytes(hashlib.blake2b(label.encode("utf-8"), digest_size=8).digest(), "little")


def scene_streams(seed: int, snr_index: int, rho_index: int, trial: int):
    ss = np.random.SeedSequence([seed, label_key("scene"), snr_index, rho_index, trial])
    return [np.random.default_rng(s) for s in ss.spawn(4)]


def scheme_stream(seed: int, scheme: str, snr_index: int, rho_index: int, trial: int):
    return np.random.default_rng(
        np.random.SeedSequence([seed, label_key(scheme), snr_index, rho_index, trial]))


@dataclass
class TrialRecord:
    trial: int
    seed: int
    scheme: str
    snr_db: float
    rho: int
    mask_ratio: float
    mse: float = math.nan
    psnr_db: float = math.nan
    est_alpha_error: float = math.nan
    est_phase_error: float = math.nan
    iterations: Optional[int] = None
    status: str = "ok"
    wall_time: float = 0.0

    def row(self) -> List[str]:
        return [_fmt(getattr(self, c)) for c in COLUMNS]


def _fmt(value) -> str:
    if value is None:
        return NA
    if isinstance(value, float):
        if math.isnan(value):
            return NA
        return repr(value)
    return str(value)


# -- models -----------------------------------------------------------------

@dataclass
class Models:
    denoiser: object
    snr: object = None
    phase: object = None


def load_models(cfg) -> Models:
    """Build the denoiser (and estimators when pilot-free) named by the config."""
    source = cfg.source.build()
    n = cfg.source.n_dims
    den_spec = cfg.denoiser
    if den_spec.kind == "analytic_mmse":
        denoiser = AnalyticDenoiser(source, den_spec.conditioning)
    else:
        mlp, header = read_model(cfg.resolve(den_spec.model_path),
                                 {"role": "denoiser", "conditioning_mode": den_spec.conditioning})
        try:
            denoiser = NetworkDenoiser(mlp, n, den_spec.conditioning, int(header["n_labels"]),
                                       int(header["seed"]))
        except ChandiffError as exc:
            raise ModelFileError(f"{den_spec.model_path}: {exc}") from None
    models = Models(denoiser)
    if cfg.pipeline.pilot_free:
        est = cfg.estimator
        if est.kind == "moment_based":
            models.snr = MomentSnrEstimator.for_source(source)
            models.phase = MomentPhaseEstimator.for_source(source)
        else:
            mlp, header = read_model(cfg.resolve(est.snr_model), {"role": "snr_estimator"})
            models.snr = NetworkSnrEstimator(mlp, n, int(header["seed"]))
            mlp, header = read_model(cfg.resolve(est.phase_model), {"role": "phase_estimator"})
            models.phase = NetworkPhaseEstimator(mlp, n, int(header["seed"]))
    return models


# -- one trial --------------------------------------------------------------

def run_pipeline(cfg, trial_index: int, scheme: str = None, snr_index: int = 0,
                 rho_index: int = 0, models: Optional[Models] = None) -> TrialRecord:
    """Run one end-to-end trial and return its record.

    source -> power normalize -> complex symbols -> channel -> equalize (true
    CSI, or pilot-free joint estimation) -> denoiser loop -> metrics.
    Package errors and non-finite metrics are recorded in ``status``.
    """
    scheme = scheme or cfg.pipeline.schemes[0]
    snr_db = cfg.channel.snr_db[snr_index]
    rho = cfg.channel.block_length[rho_index]
    mask_spec = cfg.pipeline.mask
    masked = mask_spec.strategy != "none" and mask_spec.ratio > 0
    rec = TrialRecord(trial_index, cfg.seed, scheme, snr_db, rho,
                      mask_spec.ratio if masked else 0.0)
    start = time.perf_counter()
    try:
        _trial(cfg, rec, scheme, snr_index, rho_index, masked, models or load_models(cfg))
    except (ChandiffError, ArithmeticError) as exc:
        rec.status = f"error:{type(exc).__name__}"
        rec.mse = rec.psnr_db = math.nan
    rec.wall_time = time.perf_counter() - start
    return rec


def _trial(cfg, rec, scheme, snr_index, rho_index, masked, models):
    n = cfg.source.n_dims
    source = cfg.source.build()
    sched = cfg.schedule.build()
    src_rng, mask_rng, gain_rng, noise_rng = scene_streams(cfg.seed, snr_index, rho_index, rec.trial)
    rx_rng = scheme_stream(cfg.seed, scheme, snr_index, rho_index, rec.trial)

    f, cond = sample_source(source, n, src_rng)
    f = power_normalize(f)
    cond = cond if cfg.denoiser.conditioning == "label" else None
    drop = None
    if masked:
        grid = mask_tokens(to_tokens(f, cfg.pipeline.mask.embed_dim), cfg.pipeline.mask.ratio,
                           cfg.pipeline.mask.strategy, mask_rng)
        drop = element_mask(grid)

    ch = draw_channel(cfg.channel.kind, rec.snr_db, n // 2, rec.rho, gain_rng,
                      cfg.channel.fixed_gain)
    y = transmit(to_complex(f), ch, noise_rng)

    if cfg.pipeline.pilot_free:
        est = joint_estimate(models.snr, models.phase, l2_normalize(to_real(y)),
                             cfg.estimator.max_iters, cfg.estimator.tol)
        h = complex(ch.gains[0])
        true_alpha = abs(h) ** 2 / (abs(h) ** 2 + ch.noise_variance)
        rec.est_alpha_error = abs(est.alpha - true_alpha)
        rec.est_phase_error = abs(float(wrap_phase(est.phase - np.angle(h))))
        rec.iterations = est.iterations
        values = est.equalized
        levels = clamp_levels(np.full(n, 1.0 - est.alpha))
    else:
        eq = equalize(y, ch)
        values, levels = eq.values, eq.noise_levels

    if cfg.pipeline.alpha_error:
        alpha = np.clip(1.0 - levels + cfg.pipeline.alpha_error, ALPHA_FLOOR, ALPHA_CEIL)
        levels = clamp_levels(1.0 - alpha)
    if drop is not None:
        # dropped tokens never reach the receiver: fresh noise at the ceiling level
        values = np.where(drop, mask_rng.standard_normal(n), values)
        levels = np.where(drop, LEVEL_CEIL, levels)
    eq = EqualizedOutput(values, levels)

    T = cfg.schedule.steps
    step = cfg.pipeline.step
    den = models.denoiser
    if scheme == "equalized":
        out = values
    elif scheme == "slow":
        out = denoise_slow(eq, den, sched, T, cond, step=step or "matched")
    else:
        out = denoise_fast(eq, den, sched, T, cond, fill=(scheme == "fill"), rng=rx_rng,
                           step=step or "unit")
    rec.mse = mse(out, f)
    rec.psnr_db = psnr(out, f, cfg.pipeline.peak)
    if not np.all(np.isfinite(out)) or not math.isfinite(rec.mse):
        rec.status = "nonfinite"
        rec.mse = rec.psnr_db = math.nan


# -- sweeps -----------------------------------------------------------------

def cells(cfg):
    return [(scheme, si, ri) for scheme in cfg.pipeline.schemes
            for si in range(len(cfg.channel.snr_db))
            for ri in range(len(cfg.channel.block_length))]


def run_cell(cfg, cell, trials=None) -> List[TrialRecord]:
    scheme, si, ri = cell
    models = load_models(cfg)
    trials = range(cfg.trials) if trials is None else trials
    return [run_pipeline(cfg, t, scheme, si, ri, models) for t in trials]


def _run_chunk(args):
    cfg, cell, lo, hi = args
    return run_cell(cfg, cell, range(lo, hi))


def worker_count(requested: Optional[int] = None) -> int:
    env = os.environ.get(WORKERS_ENV)
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    if requested is not None:
        return max(1, int(requested))
    return os.cpu_count() or 1


def run_records(cfg, workers: Optional[int] = None) -> List[TrialRecord]:
    """All trial records in deterministic (scheme, snr, rho, trial) order."""
    load_models(cfg)  # fail fast on bad model files
    n_workers = worker_count(workers)
    jobs = []
    chunk = max(1, math.ceil(cfg.trials / max(1, n_workers)))
    for cell in cells(cfg):
        for lo in range(0, cfg.trials, chunk):
            jobs.append((cfg, cell, lo, min(cfg.trials, lo + chunk)))
    if n_workers == 1:
        parts = [_run_chunk(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=n_workers) as pool:
            parts = list(pool.map(_run_chunk, jobs))
    return [rec for part in parts for rec in part]


def summarize(records: List[TrialRecord], peak: float = 1.0):
    groups = {}
    for rec in records:
        groups.setdefault((rec.scheme, rec.snr_db, rec.rho, rec.mask_ratio), []).append(rec)
    rows = []
    for key, recs in groups.items():
        vals = np.array([r.mse for r in recs if r.status == "ok"])
        n = len(vals)
        mean = float(vals.mean()) if n else math.nan
        se = float(vals.std(ddof=1) / np.sqrt(n)) if n > 1 else math.nan
        p = float(10 * np.log10(peak * peak / mean)) if n and mean > 0 else (
            math.inf if n else math.nan)
        rows.append(list(key) + [n, mean, se, p])
    return rows


def format_csv(records: List[TrialRecord], peak: float = 1.0) -> str:
    buf = io.StringIO()
    buf.write(f"# {SCHEMA}\n")
    buf.write(",".join(COLUMNS) + "\n")
    for rec in records:
        buf.write(",".join(rec.row()) + "\n")
    buf.write("# summary\n")
    buf.write(",".join(SUMMARY_COLUMNS) + "\n")
    for row in summarize(records, peak):
        buf.write(",".join(_fmt(v) for v in row) + "\n")
    return buf.getvalue()


def run_sweep(cfg, workers: Optional[int] = None, path: Optional[str] = None):
    """Run every cell, write the CSV and return ``(records, n_failed)``.

    The output file is opened before any computation so an unwritable path
    fails immediately.
    """
    path = path or cfg.output
    with open(path, "w", encoding="utf-8", newline="") as fh:
        records = run_records(cfg, workers)
        fh.write(format_csv(records, cfg.pipeline.peak))
    failed = sum(r.status != "ok" for r in records)
    return records, failed


# -- CSI estimation trials --------------------------------------------------

CSI_COLUMNS = ("trial", "snr_db", "true_alpha", "est_alpha", "true_phase", "est_phase",
               "iterations", "converged")


def run_csi_trials(cfg, snr_model=None, phase_model=None):
    """Pilot-free joint estimation on random-phase channels; one row per trial.

    AWGN trials use a unit-magnitude gain with uniform phase; slow fading
    draws a Rayleigh gain.  The source is the configured one.
    """
    source = cfg.source.build()
    if snr_model is None or phase_model is None:
        snr_model = snr_model or MomentSnrEstimator.for_source(source)
        phase_model = phase_model or MomentPhaseEstimator.for_source(source)
    n = cfg.source.n_dims
    rows = []
    for si, snr_db in enumerate(cfg.channel.snr_db):
        for trial in range(cfg.trials):
            ss = np.random.SeedSequence([cfg.seed, label_key("csi"), si, trial])
            src_rng, gain_rng, noise_rng = [np.random.default_rng(s) for s in ss.spawn(3)]
            f, _ = sample_source(source, n, src_rng)
            f = power_normalize(f)
            if cfg.channel.kind == "slow_fading":
                ch = draw_channel("slow_fading", snr_db, n // 2, rng=gain_rng)
            else:
                phi = gain_rng.uniform(-np.pi, np.pi)
                ch = draw_channel("slow_fading", snr_db, n // 2, fixed_gain=np.exp(1j * phi))
            y = transmit(to_complex(f), ch, noise_rng)
            est = joint_estimate(snr_model, phase_model, l2_normalize(to_real(y)),
                                 cfg.estimator.max_iters, cfg.estimator.tol)
            h = complex(ch.gains[0])
            true_alpha = abs(h) ** 2 / (abs(h) ** 2 + ch.noise_variance)
            rows.append([trial, snr_db, true_alpha, est.alpha, float(np.angle(h)), est.phase,
                         est.iterations, est.converged])
    return rows
