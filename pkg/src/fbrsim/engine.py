"""Simulation loop and experiment harness.

One replication advances window by window: move vehicles, broadcast at the
current rates, let every node's strategy pick its next rate from its own
queue, record metrics. Nodes only learn about each other through the queue
batch built by the radio layer.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import os
import platform
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__, _kernels, mobility
from .domain import Fixed, ScenarioConfig, StrategyKind, dump_config, validate_config
from .metrics import RECORD_FIELDS, RecordTable, ReplicationSummary, aggregate_replication, window_metrics
from .radio import QueueBatch, broadcast_batch
from .strategy import make_policy

log = logging.getLogger(__name__)

STREAMS = {"mobility": 0, "radio": 1, "sdidi": 2}

SUMMARY_HEADER = "strategy,vehicles,replication,median_br,median_eta,median_sigma,adaptations"
RECORDS_HEADER = "replication,node,window,eta,sigma,br,adapted,overflow"


def stream(seed: int, name: str) -> np.random.Generator:
    """Independent named generator derived from one replication seed."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(STREAMS[name],)))


class NodeNetwork:
    """Protocol state of every node (current rate and the DBR it advertises)."""

    def __init__(self, cfg: ScenarioConfig, n: int, debug: bool = False):
        self.cfg = cfg
        self.policy = make_policy(cfg.strategy, cfg.channel, cfg.rate_set, cfg.dedup_senders)
        start = cfg.strategy.rate if isinstance(cfg.strategy, Fixed) else cfg.initial_rate
        self.br = np.full(n, start, dtype=np.int64)
        self.dbr = self.br.copy()
        self.prev_br: np.ndarray | None = None
        self.debug = debug

    @property
    def n(self) -> int:
        return self.br.shape[0]

    def broadcast(self, x, y, rng) -> QueueBatch:
        return broadcast_batch(x, y, self.br, self.dbr, self.cfg.road_length, self.cfg.radio, rng)

    def window(self, x, y, rng_radio, rng_sdidi):
        """Run one adaptation window at fixed positions; returns record columns."""
        batch = self.broadcast(x, y, rng_radio)
        if self.debug:
            assert (batch.own_pending == self.br).all()
            assert (batch.count <= self.br[batch.send]).all()
            assert (batch.recv != batch.send).all()
        eta, sigma, overflow = window_metrics(batch, self.br, self.cfg.channel, self.cfg.cv_textbook)
        adapted = np.zeros(self.n, dtype=bool) if self.prev_br is None else self.br != self.prev_br
        cols = dict(eta=eta, sigma=sigma, br=self.br.copy(), adapted=adapted, overflow=overflow)

        next_br, dbr = self.policy.decide(batch, self.br, rng_sdidi)
        self.prev_br = self.br
        self.br = np.asarray(next_br, dtype=np.int64)
        self.dbr = np.asarray(dbr, dtype=np.int64)
        return cols


@dataclass
class ReplicationResult:
    scenario: str
    strategy: str
    replication: int
    seed: int
    records: RecordTable
    summary: ReplicationSummary


def run_replication(cfg: ScenarioConfig, seed: int, replication: int = 0,
                    trace_path: str | os.PathLike | None = None,
                    debug: bool = False) -> ReplicationResult:
    validate_config(cfg)
    rng_mob, rng_radio, rng_sdidi = (stream(seed, s) for s in ("mobility", "radio", "sdidi"))
    state = mobility.init_traffic(cfg, rng_mob)
    net = NodeNetwork(cfg, state.n, debug=debug)
    n_win = cfg.n_windows
    cols = {f: [] for f in RECORD_FIELDS}
    node_ids = np.arange(state.n, dtype=np.int64)

    trace = open(trace_path, "w", encoding="utf-8") if trace_path else None
    try:
        for w in range(n_win):
            state = mobility.step(state, cfg.window)
            if trace:
                mobility.write_trace(trace, (w + 1) * cfg.window, state, first=(w == 0))
            out = net.window(state.x, state.y, rng_radio, rng_sdidi)
            cols["node"].append(node_ids)
            cols["window"].append(np.full(state.n, w, dtype=np.int64))
            for k, v in out.items():
                cols[k].append(v)
    finally:
        if trace:
            trace.close()

    table = RecordTable(*(np.concatenate(cols[f]) for f in RECORD_FIELDS))
    scored = table if cfg.warmup_windows == 0 else _after_warmup(table, cfg.warmup_windows)
    return ReplicationResult(
        scenario=cfg.label,
        strategy=cfg.strategy.label,
        replication=replication,
        seed=seed,
        records=table,
        summary=aggregate_replication(scored),
    )


def _after_warmup(t: RecordTable, warmup: int) -> RecordTable:
    keep = t.window >= warmup
    return RecordTable(*(getattr(t, f)[keep] for f in RECORD_FIELDS))


# --------------------------------------------------------------------------
# experiments

def expand_experiment(cfg: ScenarioConfig) -> list[ScenarioConfig]:
    """One config per (density, strategy) cell of the experiment grid."""
    densities = cfg.densities or (cfg.vehicle_count,)
    strategies: tuple[StrategyKind, ...] = cfg.strategies or (cfg.strategy,)
    return [
        cfg.replace(vehicle_count=d, strategy=s, densities=(), strategies=())
        for d in densities
        for s in strategies
    ]


@dataclass
class ExperimentResult:
    results: dict[tuple[str, str, int], ReplicationResult] = field(default_factory=dict)
    errors: list[dict] = field(default_factory=list)
    configs: list[ScenarioConfig] = field(default_factory=list)

    def summary_rows(self) -> list[tuple]:
        rows = []
        for cfg in self.configs:
            for rep in range(cfg.replications):
                r = self.results.get((cfg.label, cfg.strategy.label, rep))
                if r is None:
                    continue
                s = r.summary
                rows.append((cfg.strategy.label, cfg.vehicle_count, rep,
                             s.median_br, s.median_eta, s.median_sigma, s.adaptations))
        return rows


def _job(args):
    cfg, seed, rep, trace_path = args
    try:
        return (cfg.label, cfg.strategy.label, rep), run_replication(cfg, seed, rep, trace_path), None
    except Exception as exc:  # recorded, the rest of the experiment continues
        return (cfg.label, cfg.strategy.label, rep), None, f"{type(exc).__name__}: {exc}"


def run_experiment(cfgs: list[ScenarioConfig], workers: int = 1,
                   out_dir: str | os.PathLike | None = None,
                   write_records: bool = True, trace: bool = False) -> ExperimentResult:
    for c in cfgs:
        validate_config(c)
    out = Path(out_dir) if out_dir is not None else None
    if out is not None and trace:
        (out / "traces").mkdir(parents=True, exist_ok=True)

    jobs = []
    for c in cfgs:
        for rep in range(c.replications):
            tp = None
            if out is not None and trace:
                tp = out / "traces" / f"{_slug(c.strategy.label)}_{c.vehicle_count}_rep{rep:03d}.csv"
            jobs.append((c, c.base_seed + rep, rep, tp))

    res = ExperimentResult(configs=list(cfgs))
    if workers <= 1:
        outcomes = map(_job, jobs)
        _collect(res, outcomes)
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            _collect(res, pool.map(_job, jobs, chunksize=max(1, len(jobs) // (4 * workers))))

    if out is not None:
        write_outputs(res, out, write_records=write_records)
    return res


def _collect(res: ExperimentResult, outcomes) -> None:
    for key, result, err in outcomes:
        if err is not None:
            log.warning("replication %s failed: %s", key, err)
            res.errors.append({"scenario": key[0], "strategy": key[1], "replication": key[2], "error": err})
        else:
            res.results[key] = result


def _slug(label: str) -> str:
    return label.replace("(", "_").replace(")", "").replace(",", "_")


def _fmt(x: float) -> str:
    return "" if x != x else f"{x:.6f}"


def format_summary(res: ExperimentResult) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SUMMARY_HEADER.split(","))
    for strat, veh, rep, mbr, meta, msig, adapt in res.summary_rows():
        w.writerow([strat, veh, rep, _fmt(mbr), _fmt(meta), _fmt(msig), adapt])
    return buf.getvalue()


def format_records(results: list[ReplicationResult]) -> str:
    parts = [RECORDS_HEADER + "\n"]
    for r in results:
        t = r.records
        sigma = np.char.mod("%.6f", t.sigma)
        sigma[np.isnan(t.sigma)] = ""
        cols = [
            np.full(len(t), str(r.replication)),
            t.node.astype(str),
            t.window.astype(str),
            np.char.mod("%.4f", t.eta),
            sigma,
            t.br.astype(str),
            t.adapted.astype(np.int8).astype(str),
            t.overflow.astype(np.int8).astype(str),
        ]
        rows = cols[0]
        for c in cols[1:]:
            rows = np.char.add(np.char.add(rows, ","), c)
        parts.append("\n".join(rows.tolist()) + "\n")
    return "".join(parts)


def write_outputs(res: ExperimentResult, out: Path, write_records: bool = True) -> None:
    out.mkdir(parents=True, exist_ok=True)
    (out / "summary.csv").write_text(format_summary(res), encoding="utf-8")
    if write_records:
        rec_dir = out / "records"
        rec_dir.mkdir(exist_ok=True)
        for cfg in res.configs:
            reps = [res.results[k] for k in
                    ((cfg.label, cfg.strategy.label, i) for i in range(cfg.replications))
                    if k in res.results]
            name = f"{_slug(cfg.strategy.label)}_{cfg.vehicle_count}.csv"
            (rec_dir / name).write_text(format_records(reps), encoding="utf-8")
    manifest = {
        "fbrsim": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "kernel_backend": _kernels.BACKEND,
        "scenarios": [
            {
                "scenario": c.label,
                "strategy": c.strategy.label,
                "seeds": [c.base_seed + i for i in range(c.replications)],
                "config": dump_config(c),
            }
            for c in res.configs
        ],
        "errors": res.errors,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
