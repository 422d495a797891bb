"""Benchmark harness: generate, sort, prune and score over repeated seeded trials."""

from __future__ import annotations

import csv
import io
import json
import os
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .ed import EdConfig, EdTrace, ed_hierarchical, ed_linear
from .errors import ParameterError
from .graph import (
    HierarchicalOrder,
    LinearOrder,
    a_top,
    edge_f1,
    erdos_renyi_dag,
    linearize,
    random_order,
    true_hierarchical_order,
)
from .lhts import PopulationBackend, lhts
from .nhts import OracleBackend, nhts
from .stats import STAGE2_KERNEL, STAGE4_KERNEL, KernelSpec, TestConfig
from .synth import IdentifiabilityWarning, Mechanism, Noise, ScmConfig, sample

__all__ = [
    "SORTERS",
    "PRUNERS",
    "CSV_COLUMNS",
    "TrialConfig",
    "TrialRow",
    "SuiteResult",
    "parse_method",
    "run_trial",
    "run_suite",
    "aggregate",
    "emit",
    "load_results",
]

SORTERS = ("lhts", "nhts", "nhts_single", "true", "random")
PRUNERS = ("none", "ed_linear", "ed_hierarchical")
CSV_COLUMNS = (
    "trial", "seed", "d", "n", "density", "mechanism", "noise", "method",
    "a_top", "layers", "f1", "precision", "recall", "tests", "max_z", "wall_ms", "error",
)  # fmt: skip
METRICS = ("a_top", "layers", "f1", "precision", "recall", "tests", "max_z", "wall_ms")
STANDARD_DENSITIES = (1, 2, 3, 4)


def parse_method(method: str) -> tuple[str, str]:
    """``"nhts"`` or ``"nhts+ed_linear"`` to a (sorter, pruner) pair."""
    sorter, _, pruner = method.partition("+")
    pruner = pruner or "none"
    if sorter not in SORTERS:
        raise ParameterError(f"unknown sorter {sorter!r}; choose from {SORTERS}")
    if pruner not in PRUNERS:
        raise ParameterError(f"unknown pruner {pruner!r}; choose from {PRUNERS}")
    return sorter, pruner


@dataclass(frozen=True)
class TrialConfig:
    """One cell of the experiment grid.

    ``density`` multiplies ``d`` to give the expected edge count. With
    ``oracle`` on, sorts and pruning use graph-truth verdicts and no data is
    drawn. With ``record_time`` off, wall times are written as 0 so repeated
    runs produce identical files.
    """

    d: int = 10
    n: int = 1000
    density: float = 1.0
    mechanism: str = "linear"
    noise: str = "uniform"
    method: str = "lhts"
    trials: int = 20
    seed: int = 0
    alpha: float = 0.05
    krr2: KernelSpec = STAGE2_KERNEL
    krr4: KernelSpec = STAGE4_KERNEL
    oracle: bool = False
    refine: bool = True
    record_time: bool = True

    def __post_init__(self) -> None:
        if self.trials < 1:
            raise ParameterError(f"trials must be >= 1, got {self.trials}")
        if self.d < 1:
            raise ParameterError(f"d must be >= 1, got {self.d}")
        if not self.oracle and self.n < 20:
            raise ParameterError(f"n must be >= 20, got {self.n}")
        if self.density < 0:
            raise ParameterError(f"density must be non-negative, got {self.density}")
        Mechanism(self.mechanism)
        Noise(self.noise)
        parse_method(self.method)
        TestConfig(alpha=self.alpha)
        if self.d > 1 and self.density * self.d > self.d * (self.d - 1) / 2:
            raise ParameterError(f"density {self.density} asks for more edges than d={self.d} allows")

    @property
    def nonstandard_density(self) -> bool:
        return self.density not in STANDARD_DENSITIES

    def to_dict(self) -> dict:
        out = asdict(self)
        out["krr2"] = asdict(self.krr2)
        out["krr4"] = asdict(self.krr4)
        return out

    @classmethod
    def from_dict(cls, obj: dict) -> TrialConfig:
        known = {f.name for f in fields(cls)}
        unknown = set(obj) - known
        if unknown:
            raise ParameterError(f"unknown config keys: {sorted(unknown)}")
        obj = dict(obj)
        for key in ("krr2", "krr4"):
            if isinstance(obj.get(key), dict):
                obj[key] = KernelSpec(**obj[key])
        return cls(**obj)


@dataclass
class TrialRow:
    trial: int
    seed: int
    d: int
    n: int
    density: float
    mechanism: str
    noise: str
    method: str
    a_top: float | None = None
    layers: int | None = None
    f1: float | None = None
    precision: float | None = None
    recall: float | None = None
    tests: int | None = None
    max_z: int | None = None
    wall_ms: float | None = None
    error: str = ""

    def __post_init__(self) -> None:
        for name in ("density", "a_top", "f1", "precision", "recall", "wall_ms"):
            v = getattr(self, name)
            if v is not None:
                setattr(self, name, round(float(v), 6))

    def cells(self) -> list[str]:
        out = []
        for name in CSV_COLUMNS:
            v = getattr(self, name)
            if v is None:
                out.append("")
            elif isinstance(v, float):
                out.append(f"{v:.6f}")
            else:
                out.append(str(v))
        return out

    @classmethod
    def from_cells(cls, cells: dict[str, str]) -> TrialRow:
        ints = {"trial", "seed", "d", "n", "layers", "tests", "max_z"}
        floats = {"density", "a_top", "f1", "precision", "recall", "wall_ms"}
        kw = {}
        for name in CSV_COLUMNS:
            raw = cells[name]
            if name in ints:
                kw[name] = int(raw) if raw != "" else None
            elif name in floats:
                kw[name] = float(raw) if raw != "" else None
            else:
                kw[name] = raw
        return cls(**kw)


def _seeds(seed: int) -> tuple[int, int, int, int]:
    children = np.random.SeedSequence(seed).spawn(4)
    return tuple(int(c.generate_state(1)[0]) for c in children)


def run_trial(cfg: TrialConfig, t: int) -> TrialRow:
    """One seeded trial. Failures become a row with the error filled in."""
    seed = cfg.seed + t
    row = TrialRow(t, seed, cfg.d, cfg.n, cfg.density, cfg.mechanism, cfg.noise, cfg.method)
    sorter, pruner = parse_method(cfg.method)
    dag_seed, data_seed, test_seed, order_seed = _seeds(seed)
    start = time.perf_counter()
    try:
        g = erdos_renyi_dag(cfg.d, cfg.density * cfg.d, dag_seed)
        test_cfg = TestConfig(alpha=cfg.alpha, seed=test_seed)
        ds = None
        if not cfg.oracle and (sorter in ("lhts", "nhts", "nhts_single") or pruner != "none"):
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", IdentifiabilityWarning)
                ds = sample(g, cfg.n, ScmConfig(cfg.mechanism, cfg.noise, seed=data_seed))
        tests = 0
        if sorter == "lhts":
            res = lhts(PopulationBackend.random(g, data_seed)) if cfg.oracle else lhts(ds, test_cfg)
            order: HierarchicalOrder | LinearOrder = res.order
            tests += res.diagnostics.tests
        elif sorter in ("nhts", "nhts_single"):
            # nhts_single admits one vertex per round in the last stage
            single = sorter == "nhts_single"
            if cfg.oracle:
                res = nhts(OracleBackend(g), one_per_round=single)
            else:
                res = nhts(ds, test_cfg, cfg.krr2, cfg.krr4, one_per_round=single)
            order = res.order
            tests += res.trace.tests
        elif sorter == "true":
            order = true_hierarchical_order(g)
        else:
            order = random_order(cfg.d, order_seed)
        row.a_top = round(a_top(order, g), 6)
        row.layers = order.n_layers if isinstance(order, HierarchicalOrder) else order.d
        if pruner != "none":
            ed_cfg = EdConfig(ci_config=test_cfg, oracle=g if cfg.oracle else None, refine=cfg.refine)
            trace = EdTrace()
            if pruner == "ed_linear":
                lin = order if isinstance(order, LinearOrder) else linearize(order, order_seed)
                found = ed_linear(ds, lin, ed_cfg, trace)
            else:
                hier = order if isinstance(order, HierarchicalOrder) else HierarchicalOrder(
                    tuple(frozenset([v]) for v in order.perm)
                )
                found = ed_hierarchical(ds, hier, ed_cfg, trace)
            scores = edge_f1(found, g)
            row.f1, row.precision, row.recall = (round(x, 6) for x in (scores.f1, scores.precision, scores.recall))
            row.max_z = trace.max_z
            tests += trace.tests + trace.refine_tests
        row.tests = tests
    except Exception as exc:  # a failed trial must not abort the suite
        row.error = f"{type(exc).__name__}: {exc}".replace("\n", " ")
    row.wall_ms = round((time.perf_counter() - start) * 1000, 6) if cfg.record_time else 0.0
    return row


def _workers() -> int:
    raw = os.environ.get("CAUSAL_HTS_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise ParameterError(f"CAUSAL_HTS_THREADS must be an integer, got {raw!r}") from None
    return max(1, min(n, os.cpu_count() or 1))


def aggregate(rows: list[TrialRow]) -> dict[str, dict[str, float]]:
    """Median and quartiles of every metric over the rows that finished without error."""
    out = {}
    for name in METRICS:
        vals = [getattr(r, name) for r in rows if not r.error and getattr(r, name) is not None]
        if not vals:
            continue
        q1, med, q3 = np.percentile(np.asarray(vals, dtype=float), [25, 50, 75])
        out[name] = {"median": round(float(med), 6), "q1": round(float(q1), 6), "q3": round(float(q3), 6), "count": len(vals)}
    return out


@dataclass
class SuiteResult:
    config: TrialConfig
    rows: list[TrialRow]
    aggregates: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.aggregates:
            self.aggregates = aggregate(self.rows)

    def column(self, name: str) -> list:
        return [getattr(r, name) for r in self.rows if not r.error]

    def median(self, name: str) -> float:
        return self.aggregates[name]["median"]


def run_suite(cfg: TrialConfig) -> SuiteResult:
    workers = _workers()
    if workers > 1 and cfg.trials > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(run_trial, [cfg] * cfg.trials, range(cfg.trials)))
    else:
        rows = [run_trial(cfg, t) for t in range(cfg.trials)]
    return SuiteResult(cfg, rows)


def _csv_text(result: SuiteResult) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for row in result.rows:
        writer.writerow(row.cells())
    return buf.getvalue()


def _json_text(result: SuiteResult) -> str:
    rows = []
    for row in result.rows:
        rows.append({name: getattr(row, name) for name in CSV_COLUMNS})
    doc = {"config": result.config.to_dict(), "rows": rows, "aggregates": result.aggregates}
    return json.dumps(doc, indent=2, sort_keys=False) + "\n"


def emit(result: SuiteResult, fmt: str, path: str | Path) -> Path:
    """Write the rows as CSV, or rows plus config and aggregates as JSON."""
    if not result.rows:
        raise ParameterError("nothing to emit: no rows")
    if fmt not in ("csv", "json"):
        raise ParameterError(f"unknown format {fmt!r}")
    text = _csv_text(result) if fmt == "csv" else _json_text(result)
    path = Path(path)
    try:
        path.write_text(text)
    except OSError as exc:
        raise OSError(f"cannot write results to {path}: {exc}") from exc
    return path


def load_results(path: str | Path) -> SuiteResult:
    """Read back an emitted file; aggregates are recomputed from the rows."""
    path = Path(path)
    text = path.read_text()
    if path.suffix == ".json" or text.lstrip().startswith("{"):
        doc = json.loads(text)
        rows = [TrialRow.from_cells({k: "" if v is None else str(v) for k, v in r.items()}) for r in doc["rows"]]
        cfg = TrialConfig.from_dict(doc["config"])
    else:
        rows = [TrialRow.from_cells(r) for r in csv.DictReader(io.StringIO(text))]
        first = rows[0]
        cfg = TrialConfig(
            d=first.d, n=first.n, density=first.density, mechanism=first.mechanism,
            noise=first.noise, method=first.method, trials=len(rows), seed=first.seed,
        )  # fmt: skip
    return SuiteResult(cfg, rows)
