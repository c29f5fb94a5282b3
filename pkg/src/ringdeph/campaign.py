"""Batch campaigns: pool → synthesize → scan → test → report.

Every stage writes its outputs under one directory and records their
SHA-256 checksums in ``stages.json``.  A re-run skips any stage whose
recorded outputs are still present and unchanged, so an interrupted
campaign can simply be started again.  ``manifest.json`` is written last.
"""
from __future__ import annotations

import hashlib
import json
import logging
import platform
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from importlib import metadata
from pathlib import Path
from typing import Callable

import numpy as np
import scipy

from .report import export_heatmap, export_scatter
from .sampler import DephasingPool, SamplerConfig, generate_pool
from .sensitivity import (SensitivityRecord, UndefinedSensitivity, analyze_controller,
                          build_error_surface, delta_grid, error_density, load_records,
                          save_records)
from .stats import (classify_orthogonal_pair, run_trend_suite, tally_orthogonal,
                    write_orthogonal_csv, write_tests_csv)
from .synthesis import (OBJECTIVES, Budget, Controller, ObjectiveSpec, SearchBounds,
                        load_controllers, save_controllers, synthesize_top)

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1


class ConfigError(ValueError):
    """Invalid or incomplete campaign configuration."""


def _strict(cls, d: dict, where: str):
    if not isinstance(d, dict):
        raise ConfigError(f"{where}: expected an object, got {type(d).__name__}")
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(d) - known)
    if unknown:
        raise ConfigError(f"{where}: unknown keys {unknown}")
    try:
        return cls(**d)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc


@dataclass(frozen=True)
class SamplerSettings:
    """Pool settings shared by every ring size in a campaign."""

    pool_target: int = 10_000
    batch_size: int = 4096
    offset: int = 0
    tol: float = 1e-10
    schoenberg: bool = True
    min_acceptance: float = 1e-3

    def for_size(self, N: int) -> SamplerConfig:
        return SamplerConfig(N, self.pool_target, self.batch_size, self.offset,
                             tol=self.tol, schoenberg=self.schoenberg,
                             min_acceptance=self.min_acceptance)


@dataclass(frozen=True)
class CampaignConfig:
    seed: int
    transfers: tuple[tuple[int, int, int], ...]
    objectives: tuple[str, ...] = OBJECTIVES
    top: int = 100
    draw: int = 1000
    grid: int = 1001
    alpha: float = 0.5
    J: float = 1.0
    quality: float = 0.98
    max_restarts: int | None = None
    budget: Budget = Budget()
    bounds: SearchBounds = SearchBounds()
    sampler: SamplerSettings = SamplerSettings()
    significance: float = 0.02
    orthogonal_tol: float = 0.05
    heatmaps: int = 1
    heatmap_columns: int = 101
    heatmap_bins: int = 120
    out_dir: str | None = None
    jobs: int = 1
    schema_version: int = SCHEMA_VERSION

    def __post_init__(self):
        if isinstance(self.seed, bool) or not isinstance(self.seed, int) or not 0 <= self.seed < 2 ** 64:
            raise ConfigError("seed must be an explicit integer in [0, 2**64)")
        if self.schema_version != SCHEMA_VERSION:
            raise ConfigError(f"unsupported schema_version {self.schema_version}")
        tr = tuple(tuple(int(v) for v in t) for t in self.transfers)
        if not tr:
            raise ConfigError("at least one transfer is required")
        for N, i, o in tr:
            if N < 3 or not (1 <= i <= N and 1 <= o <= N) or i == o:
                raise ConfigError(f"invalid transfer (N={N}, in={i}, out={o})")
        object.__setattr__(self, "transfers", tr)
        objs = tuple(self.objectives)
        bad = [o for o in objs if o not in OBJECTIVES]
        if bad or not objs:
            raise ConfigError(f"objectives must be drawn from {OBJECTIVES}, got {list(objs)}")
        object.__setattr__(self, "objectives", objs)
        if self.top < 1 or self.draw < 1 or self.grid < 3:
            raise ConfigError("top and draw must be positive, grid at least 3")
        if self.draw > self.sampler.pool_target:
            raise ConfigError(f"draw {self.draw} exceeds pool_target {self.sampler.pool_target}")
        if not 0 <= self.alpha <= 1 or not 0 < self.quality <= 1:
            raise ConfigError("alpha must lie in [0, 1] and quality in (0, 1]")
        if not 0 < self.significance < 1 or self.orthogonal_tol <= 0:
            raise ConfigError("significance must lie in (0, 1), orthogonal_tol be positive")
        if self.heatmaps < 0 or self.heatmap_columns < 2 or self.heatmap_bins < 2 or self.jobs < 1:
            raise ConfigError("invalid heatmap or jobs setting")

    @classmethod
    def from_dict(cls, d: dict) -> "CampaignConfig":
        if not isinstance(d, dict):
            raise ConfigError("campaign config must be a JSON object")
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ConfigError(f"unknown config keys {unknown}")
        if "seed" not in d:
            raise ConfigError("config must set 'seed'")
        if "transfers" not in d:
            raise ConfigError("config must set 'transfers'")
        d = dict(d)
        for key, sub in (("budget", Budget), ("bounds", SearchBounds), ("sampler", SamplerSettings)):
            if key in d:
                d[key] = _strict(sub, d[key], key)
        try:
            return cls(**d)
        except ConfigError:
            raise
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def load(cls, path) -> "CampaignConfig":
        try:
            d = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls.from_dict(d)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["transfers"] = [list(t) for t in self.transfers]
        d["objectives"] = list(self.objectives)
        return d

    def replace(self, **kw) -> "CampaignConfig":
        d = self.to_dict()
        d.update(kw)
        for key, sub in (("budget", Budget), ("bounds", SearchBounds), ("sampler", SamplerSettings)):
            if isinstance(d[key], dict):
                d[key] = sub(**d[key])
        return CampaignConfig(**d)

    @property
    def config_hash(self) -> str:
        """Hash of everything that influences outputs (not ``out_dir`` or ``jobs``)."""
        d = self.to_dict()
        d.pop("out_dir")
        d.pop("jobs")
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()

    def objective(self, kind: str) -> ObjectiveSpec:
        return ObjectiveSpec(kind, self.alpha, self.draw)


def stream_seed(seed: int, name: str) -> int:
    """Integer seed for the named sub-stream of a global seed."""
    key = int.from_bytes(hashlib.sha256(name.encode()).digest()[:4], "big")
    ss = np.random.SeedSequence(seed, spawn_key=(key,))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def transfer_tag(kind: str, transfer) -> str:
    N, i, o = transfer
    return f"{kind}_N{N}_{i}-{o}"


@dataclass
class RunManifest:
    config_hash: str
    config: dict
    versions: dict
    started: str
    finished: str
    status: str
    stages: dict
    failures: list
    files: dict = field(default_factory=dict)

    @property
    def complete(self) -> bool:
        return self.status == "complete"

    def to_dict(self) -> dict:
        return asdict(self)

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path) -> "RunManifest":
        return cls(**json.loads(Path(path).read_text()))


def _versions() -> dict:
    try:
        own = metadata.version("artifact")
    except metadata.PackageNotFoundError:
        own = "unknown"
    return {"artifact": own, "python": platform.python_version(), "numpy": np.__version__,
            "scipy": scipy.__version__}


def _now() -> str:
    return time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime())


class _Stages:
    """Checksummed stage markers kept in ``stages.json``."""

    def __init__(self, root: Path, config_hash: str):
        self.root = root
        self.path = root / "stages.json"
        self.config_hash = config_hash
        self.done: dict = {}
        if self.path.exists():
            data = json.loads(self.path.read_text())
            if data.get("config_hash") == config_hash:
                self.done = data.get("stages", {})
            else:
                log.info("stage markers belong to another config; starting afresh")

    def fingerprint(self, deps) -> str:
        """Digest of the recorded outputs of the stages in ``deps``."""
        blob = json.dumps([self.done.get(d, {}).get("outputs") for d in deps], sort_keys=True)
        return hashlib.sha256(blob.encode()).hexdigest()

    def complete(self, name: str, deps=()) -> bool:
        entry = self.done.get(name)
        if entry is None or entry.get("inputs") != self.fingerprint(deps):
            return False
        for rel, digest in entry["outputs"].items():
            p = self.root / rel
            if not p.exists() or sha256_file(p) != digest:
                return False
        return True

    def mark(self, name: str, paths, deps=()) -> None:
        self.done[name] = {
            "inputs": self.fingerprint(deps),
            "outputs": {str(Path(p).relative_to(self.root)): sha256_file(p) for p in paths}}
        tmp = self.path.with_suffix(".tmp")
        tmp.write_text(json.dumps({"config_hash": self.config_hash, "stages": self.done},
                                  indent=1, sort_keys=True) + "\n")
        tmp.replace(self.path)


def _scan_one(args):
    controller, pool, deltas, cid, tol = args
    try:
        rec, _ = analyze_controller(controller, pool, deltas, cid)
    except UndefinedSensitivity:
        return None
    rec.orthogonal_pair = classify_orthogonal_pair(controller, tol).is_orthogonal_pair
    return rec


def scan_population(controllers, pool: DephasingPool, deltas, ids, tol: float = 0.05,
                    jobs: int = 1) -> tuple[list[SensitivityRecord], int]:
    """Sensitivity records (with orthogonal-pair flags) for a controller list."""
    work = [(c, pool, deltas, cid, tol) for c, cid in zip(controllers, ids)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            out = list(ex.map(_scan_one, work, chunksize=max(1, len(work) // (4 * jobs))))
    else:
        out = [_scan_one(w) for w in work]
    records = [r for r in out if r is not None]
    return records, len(out) - len(records)


def write_heatmap(controller: Controller, pool: DephasingPool, deltas, stem: Path,
                  n_columns: int = 101, bins: int = 120, title: str = "") -> list[Path]:
    surface = build_error_surface(controller, pool, deltas)
    cols = np.unique(np.linspace(0, deltas.size - 1, min(n_columns, deltas.size)).round().astype(int))
    dens = error_density(surface, bins=bins, columns=cols)
    return [export_heatmap(surface, dens, stem.with_suffix(".csv"), cols),
            export_heatmap(surface, dens, stem.with_suffix(".svg"), cols, title=title)]


def run_campaign(cfg: CampaignConfig, out_dir=None, jobs: int | None = None,
                 progress: Callable[[str], None] | None = None) -> RunManifest:
    """Run (or resume) every stage of a campaign and write ``manifest.json``.

    A failing stage does not abort the campaign: stages that depend on it
    are skipped, the failure is recorded and the manifest status becomes
    ``"partial"``.
    """
    root = Path(out_dir or cfg.out_dir or ".")
    jobs = jobs or cfg.jobs
    say = progress or (lambda msg: log.info("%s", msg))
    for sub in ("pools", "controllers", "records", "figures", "tables"):
        (root / sub).mkdir(parents=True, exist_ok=True)
    started = _now()
    stages = _Stages(root, cfg.config_hash)
    status: dict[str, str] = {}
    failures: list[dict] = []
    deltas = delta_grid(cfg.grid)

    def run(name: str, fn, *deps) -> bool:
        if any(status.get(d) not in ("done", "cached") for d in deps):
            status[name] = "skipped"
            return False
        if stages.complete(name, deps):
            status[name] = "cached"
            say(f"{name}: up to date")
            return True
        say(f"{name}: running")
        try:
            paths = fn()
        except Exception as exc:  # recorded, campaign continues
            log.exception("stage %s failed", name)
            status[name] = "failed"
            failures.append({"stage": name, "error": f"{type(exc).__name__}: {exc}"})
            return False
        stages.mark(name, paths, deps)
        status[name] = "done"
        return True

    sizes = sorted({t[0] for t in cfg.transfers})
    for N in sizes:
        pool_path = root / "pools" / f"pool_N{N}.jsonl"
        draw_path = root / "pools" / f"draw_N{N}.jsonl"

        def make_pool(N=N, pool_path=pool_path):
            generate_pool(cfg.sampler.for_size(N)).save(pool_path)
            return [pool_path]

        def make_draw(N=N, pool_path=pool_path, draw_path=draw_path):
            pool = DephasingPool.load(pool_path, verify=False)
            pool.draw(cfg.draw, stream_seed(cfg.seed, f"pool-draw/N{N}")).save(draw_path)
            return [draw_path]

        run(f"pool:N{N}", make_pool)
        run(f"draw:N{N}", make_draw, f"pool:N{N}")

    cells = [(kind, tuple(t)) for t in cfg.transfers for kind in cfg.objectives]
    for kind, transfer in cells:
        tag = transfer_tag(kind, transfer)
        N = transfer[0]
        ctrl_path = root / "controllers" / f"{tag}.jsonl"
        rec_path = root / "records" / f"{tag}.jsonl"

        def make_controllers(kind=kind, transfer=transfer, ctrl_path=ctrl_path, N=N):
            pool = (DephasingPool.load(root / "pools" / f"draw_N{N}.jsonl", verify=False)
                    if kind == "dephasing" else None)
            top = synthesize_top(transfer, cfg.objective(kind), cfg.top, cfg.budget, cfg.bounds,
                                 stream_seed(cfg.seed, f"synthesis/{transfer_tag(kind, transfer)}"),
                                 pool, cfg.J, jobs, cfg.quality, True, cfg.max_restarts)
            save_controllers(top, ctrl_path)
            return [ctrl_path]

        def make_records(tag=tag, ctrl_path=ctrl_path, rec_path=rec_path, N=N):
            controllers = load_controllers(ctrl_path)
            pool = DephasingPool.load(root / "pools" / f"draw_N{N}.jsonl", verify=False)
            ids = [f"{tag}/c{i:03d}" for i in range(len(controllers))]
            records, skipped = scan_population(controllers, pool, deltas, ids,
                                               cfg.orthogonal_tol, jobs)
            if skipped:
                log.warning("%s: %d controllers with zero nominal error excluded", tag, skipped)
            save_records(records, rec_path)
            out = [rec_path]
            for i, c in enumerate(controllers[: cfg.heatmaps]):
                out += write_heatmap(c, pool, deltas, root / "figures" / f"heatmap_{tag}_c{i:03d}",
                                     cfg.heatmap_columns, cfg.heatmap_bins, f"{tag} c{i:03d}")
            return out

        run(f"synthesize:{tag}", make_controllers, f"draw:N{N}")
        run(f"scan:{tag}", make_records, f"synthesize:{tag}")

    ready = []
    for kind, transfer in cells:
        tag = transfer_tag(kind, transfer)
        rec_path = root / "records" / f"{tag}.jsonl"

        def make_cell_tests(kind=kind, transfer=transfer, tag=tag, rec_path=rec_path):
            tests = run_trend_suite(load_records(rec_path), cfg.significance, tag)
            tally = tally_orthogonal(load_controllers(root / "controllers" / f"{tag}.jsonl"),
                                     cfg.orthogonal_tol)
            tp, op = root / "tables" / f"tests_{tag}.csv", root / "tables" / f"orthogonal_{tag}.csv"
            write_tests_csv(tests, tp)
            write_orthogonal_csv([tally], op)
            return [tp, op]

        def make_cell_report(tag=tag, rec_path=rec_path):
            recs = load_records(rec_path)
            return [export_scatter(recs, root / "figures" / f"scatter_{tag}.{ext}", title=tag)
                    for ext in ("csv", "svg")]

        ok = run(f"test:{tag}", make_cell_tests, f"synthesize:{tag}", f"scan:{tag}")
        ok = run(f"report:{tag}", make_cell_report, f"scan:{tag}") and ok
        if ok:
            ready.append(tag)

    def make_tables():
        # concatenation of the per-cell tables, header written once
        out = []
        for stem in ("tests", "orthogonal"):
            lines: list[str] = []
            for tag in ready:
                cell = (root / "tables" / f"{stem}_{tag}.csv").read_text().splitlines()
                lines += cell if not lines else cell[1:]
            path = root / "tables" / f"{stem}.csv"
            path.write_text("\n".join(lines) + "\n")
            out.append(path)
        every = [r for tag in ready for r in load_records(root / "records" / f"{tag}.jsonl")]
        for ext in ("csv", "svg"):
            out.append(export_scatter(every, root / "figures" / f"scatter_all.{ext}",
                                      title="all controllers"))
        return out

    if ready:
        run("summary", make_tables, *(f"{st}:{tag}" for tag in ready for st in ("test", "report")))
    else:
        status["summary"] = "skipped"

    partial = any(s in ("failed", "skipped") for s in status.values())
    inventory = {}
    for p in sorted(root.rglob("*")):
        if p.is_file() and p.name not in ("manifest.json", "stages.json") and p.suffix != ".tmp":
            inventory[str(p.relative_to(root))] = sha256_file(p)
    manifest = RunManifest(cfg.config_hash, cfg.to_dict(), _versions(), started, _now(),
                           "partial" if partial else "complete", status, failures, inventory)
    manifest.save(root / "manifest.json")
    say(f"campaign {manifest.status}: {len(inventory)} files")
    return manifest
