"""
Batch pipeline behind the command line: scenario generation, separation
plus scaling, evaluation, and (p, q) sweeps.

Configuration is an INI file with one section per stage (``[mix]``,
``[stft]``, ``[auxiva]``, ``[scaling]``, ``[sweep]``); every key has a
default. Microphone indices in configs, flags, file names and reports are
1-based.

On-disk layout written by :func:`cmd_mix`::

    out/manifest.jsonl                one JSON object per scenario
    out/<id>/mix_m<m>.wav             microphone signals
    out/<id>/image_k<k>_m<m>.wav      clean source images

:func:`cmd_separate` writes ``<out>/<id>/est_k<k>.wav``, the separated
spectrograms ``y_k<k>.spec`` and a ``run.json`` record per scenario.
"""
from __future__ import annotations

import configparser
import csv
import io
import json
import logging
import os
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import auxiva, metrics, scaling, simulate, stft
from .core import ConfigError, GMDPError, MixedNormParams, save_spectrogram

log = logging.getLogger(__name__)

MANIFEST = "manifest.jsonl"

SWEEP_COLUMNS = [
    "method", "p", "q", "n_scenarios", "seeds", "mean_si_sdr", "mean_si_sir",
    "median_iters", "max_iters", "rel_tol", "floor", "ref_mic", "auxiva_iters",
]
EVAL_COLUMNS = [
    "scenario", "seed", "K", "method", "p", "q", "ref_mic", "si_sdr", "si_sir",
    "mean_si_sdr", "mean_si_sir", "permutation", "iterations",
]


class MissingReference(GMDPError, FileNotFoundError):
    pass


@dataclass(frozen=True)
class MixSettings:
    mix: simulate.MixConfig = simulate.MixConfig()
    n_scenarios: int = 1
    duration: float = 5.0
    sample_rate: int = 16000
    sources: tuple = ()


@dataclass(frozen=True)
class RunConfig:
    stft: stft.StftConfig = stft.StftConfig()
    auxiva: auxiva.AuxIvaConfig = auxiva.AuxIvaConfig()
    method: str = "gmdp"
    params: MixedNormParams = MixedNormParams()
    ref_mic: int = 1

    def __post_init__(self):
        if self.method not in scaling.METHODS:
            raise ConfigError(f"method must be one of {scaling.METHODS}, got {self.method!r}")
        if self.ref_mic < 1:
            raise ConfigError("ref_mic is 1-based and must be at least 1")


@dataclass(frozen=True)
class SweepSettings:
    p_grid: tuple = field(default_factory=lambda: parse_grid("0.1:2.0:0.1"))
    q_grid: tuple = field(default_factory=lambda: parse_grid("0.1:2.0:0.1"))
    workers: int = 1
    baselines: bool = False


def parse_grid(text):
    """Parse ``start:stop:step`` or a comma-separated list into a tuple."""
    text = str(text).strip()
    if not text:
        return ()
    try:
        if ":" in text:
            start, stop, step = (float(v) for v in text.split(":"))
            if step <= 0:
                raise ConfigError(f"grid step must be positive in {text!r}")
            n = int(round((stop - start) / step)) + 1
            return tuple(round(start + i * step, 10) for i in range(max(n, 0)))
        return tuple(float(v) for v in text.replace(";", ",").split(",") if v.strip())
    except ValueError as e:
        raise ConfigError(f"cannot parse grid {text!r}: {e}") from None


def _get(section, key, conv, default):
    if section is None or key not in section:
        return default
    raw = section[key].strip()
    try:
        return conv(raw)
    except ValueError:
        raise ConfigError(f"[{section.name}] {key} = {raw!r} is not valid") from None


def _opt_float(raw):
    return None if raw.lower() in ("", "off", "none") else float(raw)


def load_config(path=None):
    """Read an INI file into ``(MixSettings, RunConfig, SweepSettings)``."""
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    if path is not None:
        if not Path(path).is_file():
            raise ConfigError(f"config file not found: {path}")
        cp.read(path)
    sec = {name: (cp[name] if cp.has_section(name) else None)
           for name in ("mix", "stft", "auxiva", "scaling", "sweep")}

    try:
        m = sec["mix"]
        K = _get(m, "K", int, 2)
        mix_cfg = simulate.MixConfig(
            K=K,
            M=_get(m, "M", int, K),
            filter_length=_get(m, "filter_length", int, 256),
            decay=_get(m, "decay", float, 0.98),
            direct_gain=_get(m, "direct_gain", float, 1.0),
            tap_std=_get(m, "tap_std", float, 0.2),
            noise_snr=_get(m, "noise_snr", _opt_float, None),
            seed=_get(m, "seed", int, 0),
        )
        sources = _get(m, "sources", lambda s: tuple(
            v.strip() for v in s.replace("\n", ",").split(",") if v.strip()), ())
        mix_settings = MixSettings(
            mix=mix_cfg,
            n_scenarios=_get(m, "n_scenarios", int, 1),
            duration=_get(m, "duration", float, 5.0),
            sample_rate=_get(m, "sample_rate", int, 16000),
            sources=sources,
        )

        s = sec["stft"]
        stft_cfg = stft.StftConfig(
            window_length=_get(s, "window_length", int, 2048),
            hop=_get(s, "hop", int, 512),
            window=_get(s, "window", str, "sqrt_hann"),
            sample_rate=mix_settings.sample_rate,
        )
        a = sec["auxiva"]
        aux_cfg = auxiva.AuxIvaConfig(
            n_iters=_get(a, "n_iters", int, 50),
            weight_floor=_get(a, "weight_floor", float, 1e-10),
        )
        c = sec["scaling"]
        params = MixedNormParams(
            p=_get(c, "p", float, 1.0),
            q=_get(c, "q", float, 2.0),
            max_iters=_get(c, "max_iters", int, 100),
            rel_tol=_get(c, "rel_tol", float, 0.01),
            floor=_get(c, "floor", float, 1e-10),
        )
        run = RunConfig(
            stft=stft_cfg,
            auxiva=aux_cfg,
            method=_get(c, "method", str, "gmdp"),
            params=params,
            ref_mic=_get(c, "ref_mic", int, 1),
        )
        w = sec["sweep"]
        sweep = SweepSettings(
            p_grid=_get(w, "p_grid", parse_grid, parse_grid("0.1:2.0:0.1")),
            q_grid=_get(w, "q_grid", parse_grid, parse_grid("0.1:2.0:0.1")),
            workers=_get(w, "workers", int, 1),
            baselines=_get(w, "baselines", lambda v: v.lower() in ("1", "true", "yes", "on"), False),
        )
    except ConfigError:
        raise
    except (ValueError, TypeError) as e:
        raise ConfigError(str(e)) from None
    return mix_settings, run, sweep


# ---------------------------------------------------------------------------
# scenario generation


def _load_sources(settings, index):
    """Source signals of scenario ``index`` (synthetic when no files are set)."""
    K = settings.mix.K
    n = int(round(settings.duration * settings.sample_rate))
    seed = settings.mix.seed + index
    if not settings.sources:
        return simulate.synthetic_sources(K, n, settings.sample_rate, seed)

    sigs = []
    for k in range(K):
        path = Path(settings.sources[(index * K + k) % len(settings.sources)])
        if not path.is_file():
            raise ConfigError(f"source file not found: {path}")
        x, fs = stft.read_wav(path)
        if fs != settings.sample_rate:
            raise ConfigError(f"{path}: sample rate {fs} differs from {settings.sample_rate}")
        sigs.append(x[0])
    n = min(n, *(len(s) for s in sigs))
    return np.stack([s[:n] for s in sigs])


def _atomic_write_text(path, text):
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    with os.fdopen(fd, "w", newline="") as f:
        f.write(text)
    os.replace(tmp, path)


def cmd_mix(settings, out_dir):
    """Generate the scenarios of ``settings`` under ``out_dir``.

    Returns the path of the manifest.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    fs = settings.sample_rate
    lines = []
    for i in range(settings.n_scenarios):
        cfg = replace(settings.mix, seed=settings.mix.seed + i)
        sid = f"scn{i:03d}_seed{cfg.seed}"
        sources = _load_sources(settings, i)
        mixtures, images = simulate.mix(sources, cfg)

        sdir = out_dir / sid
        sdir.mkdir(exist_ok=True)
        mix_files = []
        for m in range(cfg.M):
            name = f"{sid}/mix_m{m + 1}.wav"
            stft.write_wav(out_dir / name, mixtures[m], fs)
            mix_files.append(name)
        image_files = []
        for k in range(cfg.K):
            row = []
            for m in range(cfg.M):
                name = f"{sid}/image_k{k + 1}_m{m + 1}.wav"
                stft.write_wav(out_dir / name, images[k, m], fs)
                row.append(name)
            image_files.append(row)

        lines.append(json.dumps({
            "id": sid,
            "seed": cfg.seed,
            "K": cfg.K,
            "M": cfg.M,
            "sample_rate": fs,
            "n_samples": int(sources.shape[1]),
            "mixtures": mix_files,
            "images": image_files,
            "sources": [str(s) for s in settings.sources] or "synthetic",
            "mix_config": asdict(cfg),
        }, sort_keys=True))
    manifest = out_dir / MANIFEST
    _atomic_write_text(manifest, "\n".join(lines) + "\n")
    return manifest


def read_manifest(path):
    """Scenario records with absolute file paths."""
    path = Path(path)
    if path.is_dir():
        path = path / MANIFEST
    if not path.is_file():
        raise ConfigError(f"manifest not found: {path}")
    root = path.parent
    records = []
    for line in path.read_text().splitlines():
        if not line.strip():
            continue
        rec = json.loads(line)
        rec["mixtures"] = [root / f for f in rec["mixtures"]]
        rec["images"] = [[root / f for f in row] for row in rec["images"]]
        records.append(rec)
    return records


# ---------------------------------------------------------------------------
# separation


def separate_scenario(rec, run):
    """STFT and AuxIVA of one scenario; returns ``(X, W, Y, references)``.

    ``references`` are the clean images at the reference microphone.
    """
    m_ref = run.ref_mic - 1
    if m_ref >= rec["M"]:
        raise ConfigError(f"ref_mic {run.ref_mic} exceeds the {rec['M']} microphones")
    mixtures = np.stack([stft.read_wav(f)[0][0] for f in rec["mixtures"]])
    refs = np.stack([stft.read_wav(row[m_ref])[0][0] for row in rec["images"]])
    X = stft.forward(mixtures, run.stft)
    try:
        W, Y = auxiva.separate(X, run.auxiva)
    except GMDPError as e:
        raise type(e)(f"scenario {rec['id']}: {e}") from e
    return X, W, Y, refs


def scale_and_resynthesize(X, W, Y, run, method, params, n_samples):
    """Images at the reference mic in the time domain plus the scaling result."""
    res = scaling.estimate_images(X, Y, method, W=W, params=params, mics=[run.ref_mic - 1])
    y = stft.inverse(res.images[:, 0], run.stft, n_samples)
    return y, res


def cmd_separate(manifest, run, out_dir):
    """Separate and scale every scenario of ``manifest``.

    Returns the list of run records written.
    """
    out_dir = Path(out_dir)
    records = []
    for rec in read_manifest(manifest):
        X, W, Y, _ = separate_scenario(rec, run)
        y, res = scale_and_resynthesize(
            X, W, Y, run, run.method, run.params, rec["n_samples"])

        sdir = out_dir / rec["id"]
        sdir.mkdir(parents=True, exist_ok=True)
        for k in range(y.shape[0]):
            stft.write_wav(sdir / f"est_k{k + 1}.wav", y[k], rec["sample_rate"])
            save_spectrogram(sdir / f"y_k{k + 1}.spec", Y[k])

        gmdp_run = run.method == "gmdp"
        record = {
            "scenario": rec["id"],
            "seed": rec["seed"],
            "K": rec["K"],
            "method": run.method,
            "p": run.params.p if gmdp_run else None,
            "q": run.params.q if gmdp_run else None,
            "max_iters": run.params.max_iters,
            "rel_tol": run.params.rel_tol,
            "ref_mic": run.ref_mic,
            "auxiva_iters": run.auxiva.n_iters,
            "iterations": [
                {"mic": run.ref_mic, "source": k + 1, "iterations": int(res.iterations[0, k])}
                for k in range(y.shape[0])
            ],
            "objective_traces": (
                [[float(v) for v in tr] for tr in res.objective_trace[0]] if gmdp_run else []
            ),
        }
        _atomic_write_text(sdir / "run.json", json.dumps(record, indent=1, sort_keys=True))
        records.append(record)
    return records


# ---------------------------------------------------------------------------
# evaluation


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return f"{v:.10g}"
    return str(v)


def _csv_text(columns, rows):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_fmt(row.get(c)) for c in columns])
    return buf.getvalue()


def cmd_eval(estimates_dir, references_dir, out_csv=None):
    """
    Evaluate every ``run.json`` found under ``estimates_dir``.

    References are the ``image_k*_m<ref>.wav`` files of the same scenario
    under ``references_dir``. One row per (scenario, method) is produced,
    followed by one mean row per method.

    Returns the CSV text (also written to ``out_csv`` when given).
    """
    runs = sorted(Path(estimates_dir).rglob("run.json"))
    if not runs:
        raise MissingReference(f"no run records under {estimates_dir}")

    rows = []
    for run_file in runs:
        rec = json.loads(run_file.read_text())
        K, m = rec["K"], rec["ref_mic"]
        est, ref = [], []
        for k in range(1, K + 1):
            e = run_file.parent / f"est_k{k}.wav"
            r = Path(references_dir) / rec["scenario"] / f"image_k{k}_m{m}.wav"
            for f in (e, r):
                if not f.is_file():
                    raise MissingReference(f"missing file {f}")
            est.append(stft.read_wav(e)[0][0])
            ref.append(stft.read_wav(r)[0][0])
        n = min(min(len(x) for x in est), min(len(x) for x in ref))
        report = metrics.evaluate(
            np.stack([x[:n] for x in est]), np.stack([x[:n] for x in ref]))
        rows.append({
            "scenario": rec["scenario"],
            "seed": rec["seed"],
            "K": K,
            "method": rec["method"],
            "p": rec.get("p"),
            "q": rec.get("q"),
            "ref_mic": m,
            "si_sdr": ";".join(f"{v:.6f}" for v in report.si_sdr),
            "si_sir": ";".join(f"{v:.6f}" for v in report.si_sir),
            "mean_si_sdr": report.mean_si_sdr,
            "mean_si_sir": report.mean_si_sir,
            "permutation": ";".join(str(j + 1) for j in report.permutation),
            "iterations": ";".join(str(it["iterations"]) for it in rec.get("iterations", [])),
        })

    groups = {}
    for row in rows:
        groups.setdefault((row["method"], row["p"], row["q"]), []).append(row)
    for (method, p, q), grp in groups.items():
        rows.append({
            "scenario": "mean",
            "method": method,
            "p": p,
            "q": q,
            "K": grp[0]["K"],
            "ref_mic": grp[0]["ref_mic"],
            "mean_si_sdr": float(np.mean([r["mean_si_sdr"] for r in grp])),
            "mean_si_sir": float(np.mean([r["mean_si_sir"] for r in grp])),
        })

    text = _csv_text(EVAL_COLUMNS, rows)
    if out_csv is not None:
        _atomic_write_text(out_csv, text)
    return text


# ---------------------------------------------------------------------------
# sweep

_SWEEP_STATE = {}


def _init_sweep_worker(state):
    _SWEEP_STATE.clear()
    _SWEEP_STATE.update(state)


def _sweep_cell(cell):
    method, p, q = cell
    run = _SWEEP_STATE["run"]
    params = replace(run.params, p=p, q=q) if method == "gmdp" else None
    sdr, sir, iters = [], [], []
    for X, W, Y, refs in _SWEEP_STATE["separated"]:
        y, res = scale_and_resynthesize(X, W, Y, run, method, params, refs.shape[1])
        report = metrics.evaluate(y, refs)
        sdr.append(report.mean_si_sdr)
        sir.append(report.mean_si_sir)
        iters.extend(res.iterations.ravel().tolist())
    return {
        "method": method,
        "p": p if method == "gmdp" else None,
        "q": q if method == "gmdp" else None,
        "n_scenarios": len(sdr),
        "seeds": ";".join(str(s) for s in _SWEEP_STATE["seeds"]),
        "mean_si_sdr": float(np.mean(sdr)),
        "mean_si_sir": float(np.mean(sir)),
        "median_iters": float(np.median(iters)),
        "max_iters": run.params.max_iters,
        "rel_tol": run.params.rel_tol,
        "floor": run.params.floor,
        "ref_mic": run.ref_mic,
        "auxiva_iters": run.auxiva.n_iters,
    }


def sweep_cells(p_grid, q_grid, baselines=False):
    """Valid ``(method, p, q)`` cells in output order."""
    cells = [("pb", None, None), ("mdp", None, None)] if baselines else []
    pairs = sorted({(float(p), float(q)) for p in p_grid for q in q_grid if 0 < p <= q <= 2})
    return cells + [("gmdp", p, q) for p, q in pairs]


def cmd_sweep(manifest, run, sweep, out_csv=None):
    """
    Mean SI-SDR / SI-SIR and median GMDP iterations for every valid (p, q).

    Separation is done once per scenario and shared by all cells. Pairs with
    ``p > q`` or outside (0, 2] are skipped. With ``sweep.baselines`` the
    projection back and MDP rows come first.

    Returns the CSV text (also written to ``out_csv`` when given).
    """
    for v in (*sweep.p_grid, *sweep.q_grid):
        if not 0 < v <= 2:
            raise ConfigError(f"grid value {v} outside (0, 2]")
    cells = sweep_cells(sweep.p_grid, sweep.q_grid, sweep.baselines)
    if not any(c[0] == "gmdp" for c in cells):
        log.warning("no (p, q) pair with p <= q in the grid; sweep is empty")

    rows = []
    if cells:
        records = read_manifest(manifest)
        separated = [separate_scenario(rec, run) for rec in records]
        state = {"run": run, "separated": separated, "seeds": [r["seed"] for r in records]}
        if sweep.workers > 1:
            with ProcessPoolExecutor(
                sweep.workers, initializer=_init_sweep_worker, initargs=(state,)
            ) as pool:
                rows = list(pool.map(_sweep_cell, cells))
        else:
            _init_sweep_worker(state)
            rows = [_sweep_cell(c) for c in cells]

    text = _csv_text(SWEEP_COLUMNS, rows)
    if out_csv is not None:
        _atomic_write_text(out_csv, text)
    return text
