"""Scheme comparisons over random instance families.

A run solves every scheme on every instance, records values and timings,
computes relative gaps against the family's baseline and aggregates them
with nearest-rank percentiles.  Results are written as CSV, Markdown and
figures.
"""
from __future__ import annotations

import csv
import io
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..conic import SolveOptions, assemble, solve
from ..geometry import bounding_box
from ..lifting import AxialSegmentation, axial_lift, build_GWK_outer, lifted_problem, make_lifting, midpoint_folds
from ..model import MsroProblem
from ..reformulate import build
from ..verify import gap, percentile
from .families import gen_index, gen_inventory, gen_newsvendor, index_quadratic_mask, inventory_folds

FAMILIES = ("newsvendor", "inventory", "index")
SCHEMES = ("LDR-IA", "LDR-AS", "QDR-IA", "QDR-AS", "PLDR-IA", "GWK", "LQDR-IA")
BASELINE = {"newsvendor": "QDR-IA", "inventory": "PLDR-IA", "index": "LQDR-IA"}
BGGN = {"newsvendor": "QDR-AS", "inventory": "LDR-AS", "index": "LDR-AS"}
DEFAULT_SCHEMES = {
    "newsvendor": ("QDR-IA", "QDR-AS"),
    "inventory": ("PLDR-IA", "LDR-AS"),
    "index": ("LQDR-IA", "LDR-AS"),
}
CSV_COLUMNS = ("instance_id", "scheme", "value", "gap_pct", "solve_seconds", "status")


@dataclass
class ExperimentConfig:
    family: str
    T: int = 1
    n_instances: int = 10
    seed: int = 0
    schemes: tuple = ()
    timing: bool = True
    tol: float = 1e-12
    family_options: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}; choose from {FAMILIES}")
        if self.n_instances < 1 or self.T < 1:
            raise ValueError("n_instances and T must be at least 1")
        if self.family == "newsvendor" and self.T != 1:
            raise ValueError("the newsvendor family is two-stage (T = 1)")
        schemes = tuple(normalize_scheme(s) for s in (self.schemes or DEFAULT_SCHEMES[self.family]))
        base = BASELINE[self.family]
        if base not in schemes:
            schemes = (base,) + schemes
        self.schemes = tuple(dict.fromkeys(schemes))

    @property
    def baseline(self) -> str:
        return BASELINE[self.family]

    @property
    def sense(self) -> str:
        return "min" if self.family == "index" else "max"


def normalize_scheme(name: str) -> str:
    s = name.strip().upper().replace("_", "-")
    if s == "BGGN":
        raise ValueError("BGGN depends on the family; name the scheme explicitly")
    if s not in SCHEMES:
        raise ValueError(f"unknown scheme {name!r}; choose from {SCHEMES}")
    return s


def instance_seeds(seed: int, n: int) -> list:
    """Independent per-instance streams derived from the master seed."""
    return np.random.SeedSequence(seed).spawn(n)


def generate(cfg: ExperimentConfig, i: int, ss=None) -> MsroProblem:
    ss = instance_seeds(cfg.seed, i + 1)[i] if ss is None else ss
    opts = dict(cfg.family_options)
    if cfg.family == "newsvendor":
        return gen_newsvendor(ss, **opts)
    if cfg.family == "inventory":
        return gen_inventory(ss, cfg.T, **opts)
    return gen_index(ss, cfg.T, **opts)


@dataclass
class SchemeResult:
    scheme: str
    value: float
    status: str
    seconds: float
    message: str = ""


def _folds(P: MsroProblem, family: str) -> np.ndarray:
    if family == "inventory":
        return inventory_folds(P)
    return midpoint_folds(P.uncertainty)


def prepare(P: MsroProblem, scheme: str, family: str | None = None):
    """Copositive program and assembly options for a scheme (not timed)."""
    family = family or P.names.get("family", "")
    if scheme in ("LDR-IA", "LDR-AS"):
        return build(P, "ldr"), scheme[-2:], {}
    if scheme in ("QDR-IA", "QDR-AS"):
        return build(P, "qdr"), scheme[-2:], {}
    if scheme == "LQDR-IA":
        q = index_quadratic_mask(P) if family == "index" else None
        return build(P, "lqdr", q), "IA", {}
    if scheme == "PLDR-IA":
        lf = make_lifting(P.uncertainty, _folds(P, family), P.stage_dims)
        return build(lifted_problem(P, lf), "ldr"), "IA", {}
    if scheme == "GWK":
        F = _folds(P, family)
        bps = [[] for _ in range(P.K)]
        lo, _ = bounding_box(P.uncertainty)
        for f in F:
            k = int(np.flatnonzero(f[:-1])[0])
            bps[k].append(-f[-1] / f[k])
        bps = [np.r_[lo[k], sorted(b)] for k, b in enumerate(bps)]
        al = axial_lift(P.uncertainty, AxialSegmentation.for_set(P.uncertainty, bps), P.stage_dims, hull=False)
        return build(lifted_problem(P, al.lifting), "ldr"), "IA", {"robust_set": build_GWK_outer(al)}
    raise ValueError(f"unknown scheme {scheme!r}")


def run_scheme(P: MsroProblem, scheme: str, family: str | None = None, tol: float = 1e-12) -> SchemeResult:
    """Solve one scheme; failures are returned as a NaN value with a status.

    The tight default tolerance keeps tied bounds from showing up as small
    negative gaps.
    """
    try:
        cp, approx, kw = prepare(P, scheme, family)
        t0 = time.perf_counter()
        A = assemble(cp, approx, **kw)
        sol = solve(A.program, SolveOptions(tol=tol, max_iter=500))
        secs = time.perf_counter() - t0
    except Exception as exc:  # recorded, not raised
        return SchemeResult(scheme, math.nan, "error", math.nan, f"{type(exc).__name__}: {exc}")
    if sol.status != "optimal":
        return SchemeResult(scheme, math.nan, sol.status, secs, sol.message)
    return SchemeResult(scheme, A.value(sol), "optimal", secs)


def _run_instance(args):
    cfg, i, ss = args
    P = generate(cfg, i, ss)
    return i, [run_scheme(P, s, cfg.family, cfg.tol) for s in cfg.schemes]


@dataclass
class StatTable:
    """Per-instance results and aggregated gap statistics."""

    config: ExperimentConfig
    rows: list  # (instance_id, scheme, value, gap_pct, seconds, status)

    def gaps(self, scheme: str) -> np.ndarray:
        return np.array([r[3] for r in self.rows if r[1] == scheme], dtype=float)

    def values(self, scheme: str) -> np.ndarray:
        return np.array([r[2] for r in self.rows if r[1] == scheme], dtype=float)

    def times(self, scheme: str) -> np.ndarray:
        return np.array([r[4] for r in self.rows if r[1] == scheme], dtype=float)

    def stats(self) -> dict:
        out = {}
        for s in self.config.schemes:
            g = self.gaps(s)
            ok = g[np.isfinite(g)]
            t = self.times(s)
            t = t[np.isfinite(t)]
            out[s] = {
                "p10": percentile(ok, 10) + 0.0 if ok.size else math.nan,
                "mean": float(ok.mean()) + 0.0 if ok.size else math.nan,
                "p90": percentile(ok, 90) + 0.0 if ok.size else math.nan,
                "min": float(ok.min()) + 0.0 if ok.size else math.nan,
                "time": float(t.mean()) if t.size else math.nan,
                "n_ok": int(ok.size),
                "n_failed": int(g.size - ok.size),
            }
        return out

    # -- output -----------------------------------------------------------

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for iid, s, v, g, t, st in self.rows:
            w.writerow([iid, s, _fmt(v, "%.10g"), _fmt(round(g, 6) + 0.0, "%.6f"),
                        _fmt(t, "%.4f") if self.config.timing else "", st])
        return buf.getvalue()

    def to_markdown(self) -> str:
        cfg = self.config
        st = self.stats()
        others = [s for s in cfg.schemes if s != cfg.baseline]
        lines = [
            f"Relative gaps (percent) against {cfg.baseline}, family {cfg.family}, T={cfg.T}, "
            f"{cfg.n_instances} instances, seed {cfg.seed}.",
            "",
            "| Method | Statistic | Value |",
            "|---|---|---|",
        ]
        for s in others:
            label = f"{s} (BGGN)" if s == BGGN[cfg.family] else s
            for key, name in (("p10", "10th prct."), ("mean", "Mean"), ("p90", "90th prct.")):
                lines.append(f"| {label} | {name} | {_fmt(st[s][key], '%.1f')} |")
        lines += ["", "Average solve times (seconds).", "", "| Method | Time | Failed |", "|---|---|---|"]
        for s in cfg.schemes:
            lines.append(f"| {s} | {_fmt(st[s]['time'], '%.2f')} | {st[s]['n_failed']} |")
        return "\n".join(lines) + "\n"

    def plot(self, path) -> None:
        import matplotlib
        matplotlib.use("Agg")
        import matplotlib.pyplot as plt

        cfg = self.config
        others = [s for s in cfg.schemes if s != cfg.baseline]
        fig, axes = plt.subplots(1, 2, figsize=(9, 3.5))
        data = [self.gaps(s)[np.isfinite(self.gaps(s))] for s in others]
        if others:
            axes[0].boxplot(data, showmeans=True)
            axes[0].set_xticks(range(1, len(others) + 1), others)
        axes[0].axhline(0.0, color="grey", lw=0.8)
        axes[0].set_ylabel(f"gap vs {cfg.baseline} (%)")
        axes[0].set_title(f"{cfg.family}, T={cfg.T}")
        times = [np.nanmean(self.times(s)) if np.isfinite(self.times(s)).any() else 0.0 for s in cfg.schemes]
        axes[1].bar(range(len(cfg.schemes)), times)
        axes[1].set_xticks(range(len(cfg.schemes)), cfg.schemes, rotation=30)
        axes[1].set_ylabel("mean solve time (s)")
        fig.tight_layout()
        fig.savefig(path, dpi=120)
        plt.close(fig)

    def write(self, out_dir, stem: str | None = None, figures: bool = True) -> dict:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        stem = stem or f"{self.config.family}_T{self.config.T}"
        paths = {"csv": out / f"{stem}.csv", "markdown": out / f"{stem}.md"}
        paths["csv"].write_text(self.to_csv())
        paths["markdown"].write_text(self.to_markdown())
        if figures:
            paths["figure"] = out / f"{stem}.png"
            self.plot(paths["figure"])
        return paths


def _fmt(x, spec: str) -> str:
    return "nan" if x is None or not np.isfinite(x) else spec % x


def default_jobs() -> int:
    env = os.environ.get("COPODR_JOBS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def run_suite(cfg: ExperimentConfig, jobs: int | None = None) -> StatTable:
    """Solve every scheme on every instance and collect a :class:`StatTable`."""
    jobs = default_jobs() if jobs is None else max(1, int(jobs))
    seeds = instance_seeds(cfg.seed, cfg.n_instances)
    tasks = [(cfg, i, seeds[i]) for i in range(cfg.n_instances)]
    if jobs > 1 and cfg.n_instances > 1:
        with ProcessPoolExecutor(max_workers=min(jobs, cfg.n_instances)) as ex:
            results = dict(ex.map(_run_instance, tasks))
    else:
        results = dict(map(_run_instance, tasks))
    rows = []
    for i in range(cfg.n_instances):
        res = {r.scheme: r for r in results[i]}
        base = res[cfg.baseline].value
        iid = f"{cfg.family}-T{cfg.T}-{i:03d}"
        for s in cfg.schemes:
            r = res[s]
            g = math.nan
            if np.isfinite(r.value) and np.isfinite(base) and base != 0:
                g = gap(r.value, base, cfg.sense)
            status = r.status if not r.message else f"{r.status}: {r.message}"[:200]
            rows.append((iid, s, r.value, g, r.seconds, status))
    return StatTable(cfg, rows)


def run_sweep(family: str, Ts, n_instances: int, seed: int = 0, schemes=(), jobs: int | None = None,
              timing: bool = True) -> list[StatTable]:
    return [run_suite(ExperimentConfig(family, T, n_instances, seed, tuple(schemes), timing), jobs) for T in Ts]


def sweep_markdown(tables: list[StatTable]) -> str:
    """One table across horizons, laid out like the horizon tables of the experiments."""
    if not tables:
        return ""
    cfg = tables[0].config
    Ts = [t.config.T for t in tables]
    others = [s for s in cfg.schemes if s != cfg.baseline]
    head = "| Method | Statistic | " + " | ".join(str(T) for T in Ts) + " |"
    lines = [f"Relative gaps (percent) against {cfg.baseline}, family {cfg.family}.", "", head,
             "|---|---|" + "---|" * len(Ts)]
    stats = [t.stats() for t in tables]
    for s in others:
        label = f"{s} (BGGN)" if s == BGGN[cfg.family] else s
        for key, name in (("p10", "10th prct."), ("mean", "Mean"), ("p90", "90th prct.")):
            lines.append(f"| {label} | {name} | " + " | ".join(_fmt(st[s][key], "%.1f") for st in stats) + " |")
    lines += ["", "Average solve times (seconds).", "", "| Method | " + " | ".join(str(T) for T in Ts) + " |",
              "|---|" + "---|" * len(Ts)]
    for s in cfg.schemes:
        lines.append(f"| {s} | " + " | ".join(_fmt(st[s]["time"], "%.2f") for st in stats) + " |")
    return "\n".join(lines) + "\n"


def plot_sweep(tables: list[StatTable], path) -> None:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    cfg = tables[0].config
    Ts = [t.config.T for t in tables]
    fig, ax = plt.subplots(figsize=(5, 3.5))
    for s in cfg.schemes:
        if s == cfg.baseline:
            continue
        means = [t.stats()[s]["mean"] for t in tables]
        ax.plot(Ts, means, marker="o", label=s)
    ax.set_xlabel("T")
    ax.set_ylabel(f"mean gap vs {cfg.baseline} (%)")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
