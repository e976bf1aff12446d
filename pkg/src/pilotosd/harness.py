"""Monte Carlo BLER engine, configuration and result files."""

from __future__ import annotations

import csv
import io
import json
import math
import platform
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from functools import lru_cache
from pathlib import Path

import numpy as np

from . import __version__
from ._kernels import unpack_rows
from .codebook import DEFAULT_INTERLEAVER_SEED, DEFAULT_GENERATORS, DEFAULT_MEMORY, ConvCodeSpec
from .errors import ConfigError, PilotOsdError, RangeError
from .link import Link
from .metrics import EmConfig, FastDecoders
from .osd import OsdConfig
from .phy import FrameGeometry, channel_apply, draw_channel
from .rng import trial_stream

DECODERS = ("pat-osd", "em-osd", "inlist-glrt-osd", "coherent-genie")
PILOT_DECODERS = ("pat-osd", "em-osd", "inlist-glrt-osd")
BLER_HEADER = ("decoder", "n_p", "snr_db", "frames", "errors", "bler", "ci_half_width", "censored")
Z95 = 1.959963984540054


@dataclass(frozen=True)
class SimConfig:
    ell: int = 4
    n_c: int = 13
    n_p: int = 2
    generators: tuple[str, ...] = DEFAULT_GENERATORS
    memory: int = DEFAULT_MEMORY
    k: int = 32
    interleaver_seed: int = DEFAULT_INTERLEAVER_SEED
    decoders: tuple[str, ...] = PILOT_DECODERS
    osd_order: int = 3
    em_iterations: int = 1
    em_rebuild_list: bool = True
    em_include_pilots: bool = False
    snr_db: tuple[float, ...] = ()
    min_errors: int = 100
    max_frames: int = 2_000_000
    master_seed: int = 1
    batch_size: int = 500

    def __post_init__(self):
        object.__setattr__(self, "generators", tuple(str(g) for g in self.generators))
        object.__setattr__(self, "decoders", tuple(self.decoders))
        object.__setattr__(self, "snr_db", tuple(float(s) for s in self.snr_db))
        self.validate()

    def validate(self):
        unknown = [d for d in self.decoders if d not in DECODERS]
        if unknown:
            raise ConfigError(f"unknown decoder(s) {unknown}; choose from {DECODERS}")
        if not self.decoders:
            raise ConfigError("no decoder selected")
        if len(set(self.decoders)) != len(self.decoders):
            raise ConfigError("duplicate decoder names")
        if self.n_p < 1 and any(d in PILOT_DECODERS for d in self.decoders):
            raise ConfigError("pilot-based decoders need n_p >= 1")
        if self.min_errors < 1 or self.max_frames < 1 or self.batch_size < 1:
            raise ConfigError("min_errors, max_frames and batch_size must be positive")
        if self.em_iterations < 0:
            raise ConfigError("em_iterations must be >= 0")
        try:
            geom = self.geometry
            spec = self.code_spec
            if self.k < spec.memory:
                raise ConfigError(f"k={self.k} below code memory {spec.memory}")
            if geom.n_tx_bits > spec.rate_inverse * self.k:
                raise ConfigError(
                    f"frame carries {geom.n_tx_bits} bits, code has {spec.rate_inverse * self.k}")
            OsdConfig(self.osd_order)
            if self.osd_order > self.k:
                raise ConfigError("OSD order exceeds k")
        except ConfigError:
            raise
        except PilotOsdError as exc:
            raise ConfigError(str(exc)) from exc

    @property
    def geometry(self) -> FrameGeometry:
        return FrameGeometry(self.ell, self.n_c, self.n_p)

    @property
    def code_spec(self) -> ConvCodeSpec:
        return ConvCodeSpec(self.generators, self.memory)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["generators"] = list(self.generators)
        d["decoders"] = list(self.decoders)
        d["snr_db"] = list(self.snr_db)
        return d


@dataclass(frozen=True)
class BlerPoint:
    decoder: str
    n_p: int
    snr_db: float
    frames: int
    errors: int
    censored: bool = False

    @property
    def bler(self) -> float:
        return self.errors / self.frames if self.frames else float("nan")

    @property
    def ci_half_width(self) -> float:
        p = self.bler
        return Z95 * math.sqrt(p * (1.0 - p) / self.frames) if self.frames else float("nan")


@dataclass
class TrialResult:
    transmitted: np.ndarray
    decoded: dict
    errors: dict


@dataclass
class RunManifest:
    config: list
    tool_version: str
    master_seed: list
    started: str
    finished: str
    points: list = field(default_factory=list)
    python: str = platform.python_version()
    numpy: str = np.__version__
    rng: str = "numpy Philox4x64-10; key=master_seed+2**64*snr_index, counter=2**64*trial_index"


class _Simulator:
    def __init__(self, cfg: SimConfig):
        self.cfg = cfg
        self.geom = cfg.geometry
        self.link = Link.build(cfg.code_spec, cfg.k, self.geom, cfg.interleaver_seed)
        em = EmConfig(cfg.em_iterations, cfg.em_rebuild_list, cfg.em_include_pilots)
        self.decoders = FastDecoders(self.link, OsdConfig(cfg.osd_order), em)

    def trial(self, snr_index: int, trial_index: int, names):
        """Returns (transmitted codeword, {name: packed decision}, packed transmitted)."""
        cfg = self.cfg
        rng = trial_stream(cfg.master_seed, snr_index, trial_index)
        u = rng.integers(0, 2, cfg.k, dtype=np.uint8)
        c = self.link.encode(u)
        state = draw_channel(self.geom, cfg.snr_db[snr_index], rng)
        y = channel_apply(self.link.frame(c), state, rng)
        out = self.decoders.decode(y, state.sigma2, names, h_true=state.h)
        return c, out, self.decoders.engine.pack_codeword(c)

    def batch(self, snr_index: int, start: int, stop: int, names) -> dict:
        flags = {nm: np.zeros(stop - start, dtype=bool) for nm in names}
        for t in range(start, stop):
            _, out, ref = self.trial(snr_index, t, names)
            for nm in names:
                flags[nm][t - start] = not np.array_equal(out[nm], ref)
        return flags


@lru_cache(maxsize=8)
def _simulator(cfg: SimConfig) -> _Simulator:
    return _Simulator(cfg)


def _batch_job(cfg, snr_index, start, stop, names):
    return _simulator(cfg).batch(snr_index, start, stop, names)


def run_trial(cfg: SimConfig, snr_index: int, trial_index: int, decoders=None) -> TrialResult:
    """One frame at ``cfg.snr_db[snr_index]``; block error iff any codeword bit differs."""
    names = tuple(decoders or cfg.decoders)
    sim = _simulator(cfg)
    c, out, _ = sim.trial(snr_index, trial_index, names)
    eng = sim.decoders.engine
    decoded = {}
    for nm, packed in out.items():
        decoded[nm] = eng.interleaver.deinterleave(unpack_rows(packed[None, :], eng.n)[0])
    errors = {nm: bool(np.any(decoded[nm] != c)) for nm in names}
    return TrialResult(c, decoded, errors)


def _stop_index(flags: np.ndarray, min_errors: int):
    """Frames needed to collect ``min_errors`` errors, or None if not reached."""
    idx = np.flatnonzero(flags)
    return int(idx[min_errors - 1]) + 1 if idx.size >= min_errors else None


def run_bler(cfg: SimConfig, workers: int = 1, progress=None) -> list[BlerPoint]:
    """BLER for every decoder and SNR of ``cfg``.

    Each decoder stops at its ``min_errors``-th error (or at ``max_frames``);
    frames are shared between decoders. Trials are dispatched in fixed
    batches and the stop point is located exactly in trial order, so the
    result does not depend on ``workers``.
    """
    points = []
    pool = ProcessPoolExecutor(max_workers=workers) if workers > 1 else None
    try:
        for si, snr in enumerate(cfg.snr_db):
            history = {nm: [] for nm in cfg.decoders}
            done = {}
            next_start = 0
            while len(done) < len(cfg.decoders) and next_start < cfg.max_frames:
                active = tuple(nm for nm in cfg.decoders if nm not in done)
                spans = []
                for _ in range(max(workers, 1)):
                    if next_start >= cfg.max_frames:
                        break
                    stop = min(next_start + cfg.batch_size, cfg.max_frames)
                    spans.append((next_start, stop))
                    next_start = stop
                if pool is None:
                    results = [_batch_job(cfg, si, a, b, active) for a, b in spans]
                else:
                    futures = [pool.submit(_batch_job, cfg, si, a, b, active) for a, b in spans]
                    results = [f.result() for f in futures]
                for res in results:
                    for nm in active:
                        history[nm].append(res[nm])
                for nm in active:
                    flags = np.concatenate(history[nm])
                    stop = _stop_index(flags, cfg.min_errors)
                    if stop is not None:
                        done[nm] = (stop, cfg.min_errors, False)
                    elif flags.size >= cfg.max_frames:
                        done[nm] = (flags.size, int(flags.sum()), True)
                if progress is not None:
                    progress(snr, next_start, {nm: int(np.concatenate(history[nm]).sum())
                                               for nm in cfg.decoders})
            for nm in cfg.decoders:
                frames, errors, censored = done[nm]
                points.append(BlerPoint(nm, cfg.n_p, snr, frames, errors, censored))
    finally:
        if pool is not None:
            pool.shutdown()
    return points


def snr_at_bler(points, target: float) -> float:
    """SNR where a BLER curve crosses ``target``, log-linear interpolation."""
    pts = sorted((p.snr_db, p.bler) for p in points if p.errors > 0)
    for (s0, b0), (s1, b1) in zip(pts, pts[1:]):
        if (b0 - target) * (b1 - target) <= 0 and b0 != b1:
            l0, l1, lt = math.log10(b0), math.log10(b1), math.log10(target)
            return s0 + (lt - l0) * (s1 - s0) / (l1 - l0)
        if b0 == b1 == target:
            return s0
    raise RangeError(f"target BLER {target:g} is not bracketed by the curve")


def compare_curves(points_a, points_b, target_bler: float) -> float:
    """Horizontal gap ``SNR_a - SNR_b`` at ``target_bler`` in dB."""
    return snr_at_bler(points_a, target_bler) - snr_at_bler(points_b, target_bler)


def bler_csv(points) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(BLER_HEADER)
    for p in points:
        w.writerow([p.decoder, p.n_p, repr(p.snr_db), p.frames, p.errors, repr(p.bler),
                    repr(p.ci_half_width), int(p.censored)])
    return buf.getvalue()


def read_bler_csv(path) -> list[BlerPoint]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return [BlerPoint(r["decoder"], int(r["n_p"]), float(r["snr_db"]), int(r["frames"]),
                      int(r["errors"]), bool(int(r["censored"]))) for r in rows]


def _now() -> str:
    return time.strftime("%Y-%m-%dT%H:%M:%S%z")


def simulate(configs, out_dir, workers: int = 1, progress=None) -> list[BlerPoint]:
    """Run every config and write ``bler.csv`` plus ``manifest.json`` into ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    started = _now()
    points = []
    for cfg in configs:
        points.extend(run_bler(cfg, workers=workers, progress=progress))
    (out / "bler.csv").write_text(bler_csv(points))
    manifest = RunManifest(
        config=[c.to_dict() for c in configs],
        tool_version=__version__,
        master_seed=[c.master_seed for c in configs],
        started=started,
        finished=_now(),
        points=[{"decoder": p.decoder, "n_p": p.n_p, "snr_db": p.snr_db, "frames": p.frames,
                 "errors": p.errors, "censored": p.censored} for p in points],
    )
    (out / "manifest.json").write_text(json.dumps(asdict(manifest), indent=2) + "\n")
    return points


def sim_config_fields() -> set[str]:
    return {f.name for f in fields(SimConfig)}
