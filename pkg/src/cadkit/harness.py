"""Config-driven pipelines and report emission.

A pipeline is a named preset that runs module checks in sequence and collects one
record per check.  Reports are written as JSON, CSV and simple SVG line plots; the JSON
and CSV outputs depend only on the config, so re-running a config reproduces them byte for
byte.  Wall-clock times are kept out of those files; ``timings.json`` holds them on request.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import __version__
from . import elliptic as ell
from . import geometry as geo
from .dyadic import build_grid, fit_thin_boundary, verify_grid

PIPELINES = (
    "grid",
    "whitney",
    "classify",
    "harmonic_measure",
    "boundary_estimates",
    "ainfty_to_nta",
    "kp_appendix",
    "rhq",
)


class ConfigError(ValueError):
    pass


class StageError(RuntimeError):
    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage '{stage}' failed: {type(cause).__name__}: {cause}")
        self.stage = stage
        self.cause = cause


@dataclass
class ExperimentConfig:
    pipeline: str = "classify"
    domain: str = "disk"
    domain_args: dict = field(default_factory=dict)
    coefficient: str = "identity"
    coefficient_args: dict = field(default_factory=dict)
    depth: int = 4
    pitch: float = 1 / 64
    lam: float = 0.125
    k_star: int = 2
    K0: float = 16.0
    c0: float = 1 / 32
    epsilon: float = 0.25
    q: float = 2.0
    K0_stop: float = 2.0
    theta: float = 0.5
    seed: int = 0
    walks: int = 10_000
    scales: list = field(default_factory=list)
    pole: list | None = None
    out: str = "out"

    def validate(self) -> "ExperimentConfig":
        checks = [
            (self.pipeline in PIPELINES, f"unknown pipeline {self.pipeline!r}"),
            (1 <= self.depth <= 14, "depth must be in [1, 14]"),
            (0 < self.pitch <= 1, "pitch must be in (0, 1]"),
            (0 < self.lam < 0.25, "λ must be in (0, 1/4)"),
            (0 <= self.k_star <= 6, "k* must be in [0, 6]"),
            (self.K0 > 0, "K0 must be positive"),
            (0 < self.c0 < 1, "c0 must be in (0, 1)"),
            (0 < self.epsilon <= 1 and float(math.log2(self.epsilon)).is_integer(), "ε must be 2^-m"),
            (self.q > 1, "q must exceed 1"),
            (self.K0_stop >= 1, "K0_stop must be >= 1"),
            (0 < self.theta <= 1, "θ must be in (0, 1]"),
            (self.seed >= 0, "seed must be non-negative"),
            (self.walks >= 1, "walks must be positive"),
            (self.coefficient in ell.PRESETS, f"unknown coefficient preset {self.coefficient!r}"),
        ]
        for ok, msg in checks:
            if not ok:
                raise ConfigError(msg)
        if self.domain not in geo.SHAPES and not Path(self.domain).is_file():
            raise ConfigError(f"domain {self.domain!r} is neither a preset nor a file")
        return self

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        extra = set(data) - known
        if extra:
            raise ConfigError(f"unknown config keys: {sorted(extra)}")
        return cls(**data).validate()

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def canonical(self) -> dict:
        d = asdict(self)
        d.pop("out")
        return d

    @property
    def hash(self) -> str:
        blob = json.dumps(self.canonical(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def build_domain(self) -> geo.Domain:
        if self.domain in geo.SHAPES:
            return geo.SHAPES[self.domain](**self.domain_args)
        return geo.load_domain(self.domain)

    def build_coefficient(self) -> ell.CoefficientField:
        return ell.PRESETS[self.coefficient](**self.coefficient_args)


@dataclass
class CheckRecord:
    check: str
    anchor: str
    criterion: str
    constants: dict
    passed: bool
    tolerance: str
    runtime: float = 0.0


@dataclass
class Report:
    pipeline: str
    config_hash: str
    version: str
    records: list[CheckRecord] = field(default_factory=list)
    tables: dict[str, list[dict]] = field(default_factory=dict)
    plots: dict[str, tuple[str, str]] = field(default_factory=dict)  # table -> (x column, y column)
    extra_csv: dict[str, str] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.records)

    def to_json(self) -> dict:
        return {
            "pipeline": self.pipeline,
            "config_hash": self.config_hash,
            "version": self.version,
            "passed": self.passed,
            "records": [{k: v for k, v in asdict(r).items() if k != "runtime"} for r in self.records],
            "tables": self.tables,
        }


def _clean(x):
    """JSON-safe, deterministic values."""
    if isinstance(x, dict):
        return {str(k): _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, (np.floating, float)):
        v = float(x)
        return v if math.isfinite(v) else str(v)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    if isinstance(x, np.ndarray):
        return _clean(x.tolist())
    return x


class _Stages:
    def __init__(self, report: Report):
        self.report = report

    def run(self, name: str, fn):
        t0 = time.perf_counter()
        try:
            out = fn()
        except Exception as exc:  # any module error names the stage
            raise StageError(name, exc) from exc
        return out, time.perf_counter() - t0

    def record(self, check, anchor, criterion, constants, passed, tolerance, runtime):
        self.report.records.append(
            CheckRecord(check, anchor, criterion, _clean(constants), bool(passed), tolerance, runtime)
        )


# ------------------------------------------------------------------ pipelines
def _grid(cfg: ExperimentConfig, st: _Stages, dom):
    grid, t = st.run("dyadic grid", lambda: build_grid(dom, cfg.depth))
    rep, t2 = st.run("grid axioms", lambda: verify_grid(grid))
    st.record(
        "grid_axioms",
        "dyadic cube axioms",
        "AC1",
        {"a0": grid.a0, "C1": grid.C1, "c": grid.c, "C": grid.C, "covering_error": rep.covering_error},
        rep.passed,
        "covering 1e-9 relative; nesting exact",
        t + t2,
    )
    if dom.closed:
        taus = [2.0**-j for j in range(3, 8) if 2.0**-j < grid.a0]
        if len(taus) >= 2:
            (C, eta, pts), t3 = st.run("thin boundary", lambda: fit_thin_boundary(grid, taus))
            st.record("thin_boundary", "thin boundary fit", "AC1", {"C": C, "eta": eta}, eta > 0, "eta > 0", t3)
            st.report.tables["thin_boundary"] = [{"tau": a, "ratio": b} for a, b in pts]
            st.report.plots["thin_boundary"] = ("tau", "ratio")
    return grid


def _whitney(cfg: ExperimentConfig, st: _Stages, dom):
    from .whitney import whitney_decompose

    wd, t = st.run("whitney", lambda: whitney_decompose(dom, finest=cfg.depth + 4, lam=cfg.lam))
    chk, t2 = st.run("whitney check", wd.check)
    ok = chk["wh1_lower"] and chk["wh1_upper"] and chk["dist4_le_dist"] and chk["max_adjacent_ratio"] <= 4
    st.record("whitney_constants", "Whitney box constants", "AC2", chk, ok, "4 diam <= dist(4I); dist <= 40 diam; ratio <= 4", t + t2)


def _classify(cfg: ExperimentConfig, st: _Stages, dom):
    from .probe import classify, exterior_corkscrew_check, witness_csv

    grid, t = st.run("dyadic grid", lambda: build_grid(dom, cfg.depth))
    scales = cfg.scales or list(range(1, cfg.depth + 1))
    cl, t2 = st.run("classify", lambda: classify(dom, grid, scales, c0=cfg.c0))
    st.record("corkscrew", "interior corkscrew", "AC7", {"c": cl.corkscrew_constant}, cl.interior_ok, "c >= 1/128", t2)
    st.record(
        "harnack_chain",
        "Harnack chain",
        "AC7",
        {"slope": cl.harnack_slope, "max_N": max((n for _, n in cl.harnack), default=0)},
        cl.harnack_ok,
        "N <= 8(1 + log2(1 + Λ))",
        0.0,
    )
    st.record(
        "exterior_corkscrew",
        "exterior corkscrew",
        "AC7",
        {"c": cl.exterior_constant, "failures": sum(len(v) for v in cl.exterior_failures.values())},
        cl.exterior_ok,
        f"c0 = {cfg.c0!r}",
        0.0,
    )
    st.report.tables["verdict"] = [{"verdict": cl.verdict}]
    st.report.tables["harnack"] = [{"Lambda": a, "N": n} for a, n in cl.harnack]
    res, _ = st.run(
        "exterior witnesses",
        lambda: [exterior_corkscrew_check(grid, c, cfg.c0) for k in scales for c in grid.generation(k)],
    )
    st.report.extra_csv["exterior_witnesses"] = witness_csv(res)
    return cl


def _pole(cfg: ExperimentConfig, dom):
    if cfg.pole is not None:
        return np.asarray(cfg.pole, float)
    if dom.interior_hint is None:
        raise ConfigError("config needs a pole")
    return np.asarray(dom.interior_hint, float)


def _harmonic_measure(cfg: ExperimentConfig, st: _Stages, dom):
    grid, t = st.run("dyadic grid", lambda: build_grid(dom, cfg.depth))
    X = _pole(cfg, dom)
    prob, t1 = st.run("assemble", lambda: ell.DirichletProblem(dom, cfg.build_coefficient(), cfg.pitch))
    k = min(cfg.depth, 3)
    est, t2 = st.run("elliptic measure", lambda: ell.elliptic_measure(prob, X, grid, k))
    rows = []
    ok = True
    mc_time = 0.0
    for cid in grid.generation(k):
        q = grid[cid]
        row = {"cube": f"{cid[0]}:{cid[1]}", "solver": est.masses[cid]}
        if cfg.coefficient == "identity":
            mc, tm = st.run(
                "walk on spheres",
                lambda: ell.walk_on_spheres(dom, X, ell.arc_functional(dom, q.s0, q.s1), cfg.walks, cfg.seed),
            )
            mc_time += tm
            tol = max(3 * mc.stderr, 3 * cfg.pitch)
            row.update({"wos": mc.value, "stderr": mc.stderr, "agree": abs(mc.value - est.masses[cid]) <= tol})
            ok &= row["agree"]
        rows.append(row)
    st.report.tables["cube_masses"] = rows
    st.record(
        "harmonic_measure",
        "elliptic measure estimators",
        "AC3",
        {"total": est.total, "generation": k},
        ok,
        "|solver - wos| <= max(3 stderr, 3h)",
        t + t1 + t2 + mc_time,
    )


def _boundary_estimates(cfg: ExperimentConfig, st: _Stages, dom):
    from .probe import find_corkscrew

    A = cfg.build_coefficient()
    X = _pole(cfg, dom)
    scales = cfg.scales or [dom.diameter * 2.0**-j for j in range(3, 7)]
    x = dom.point_at(0.0)
    out = {}
    for h in (cfg.pitch, cfg.pitch / 2):
        prob, _ = st.run("assemble", lambda: ell.DirichletProblem(dom, A, h))
        vals = {"bourgain": [], "doubling": [], "cfms": []}
        for r in scales:
            b, _ = st.run("bourgain", lambda: ell.bourgain_check(prob, x, r))
            d, _ = st.run("doubling", lambda: ell.doubling_check(prob, x, r, X))
            w = find_corkscrew(dom, x, r)
            c, _ = st.run("cfms", lambda: ell.cfms_check(prob, x, r, X, w.center))
            vals["bourgain"].append(b[0])
            vals["doubling"].append(d)
            vals["cfms"].append(c)
        out[h] = vals
    h0, h1 = cfg.pitch, cfg.pitch / 2
    for name in ("bourgain", "doubling", "cfms"):
        b0 = (min(out[h0][name]), max(out[h0][name]))
        b1 = (min(out[h1][name]), max(out[h1][name]))
        drift = max(abs(b0[0] - b1[0]) / abs(b1[0]), abs(b0[1] - b1[1]) / abs(b1[1]))
        st.record(name, f"{name} estimate", "AC4", {"bracket_h": b0, "bracket_h2": b1, "drift": drift}, drift <= 0.2, "bracket drift <= 20%", 0.0)
    st.report.tables["boundary_estimates"] = [
        {"r": r, **{f"{n}_h": out[h0][n][i] for n in out[h0]}, **{f"{n}_h2": out[h1][n][i] for n in out[h1]}}
        for i, r in enumerate(scales)
    ]


def _ainfty_to_nta(cfg: ExperimentConfig, st: _Stages, dom):
    from .carleson import corkscrew_from_packing, packing_test
    from .probe import bad_cubes

    grid, _ = st.run("dyadic grid", lambda: build_grid(dom, cfg.depth))
    bad, t = st.run("exterior corkscrews", lambda: bad_cubes(grid, cfg.c0))
    (M1, profile), t2 = st.run("packing", lambda: packing_test(grid, bad))
    top = grid.generation(min(2, cfg.depth))
    wit, t3 = st.run("corkscrew from packing", lambda: [corkscrew_from_packing(grid, c, M1, bad, cfg.c0) for c in top])
    st.record("packing", "packing of bad cubes", "AC7", {"M1_hat": M1, "bad": len(bad)}, math.isfinite(M1), "M1_hat finite", t + t2)
    st.record("exterior_from_packing", "exterior corkscrews from packing", "AC7", {"witnesses": len(wit), "top_cubes": len(top)}, len(wit) == len(top), "one witness per top cube", t3)
    st.report.tables["witnesses"] = [
        {"cube": f"{w.Q[0]}:{w.Q[1]}", "Q1": f"{w.Q1[0]}:{w.Q1[1]}", "good": f"{w.good[0]}:{w.good[1]}", "c0_prime": w.c0_prime}
        for w in wit
    ]


def _kp_appendix(cfg: ExperimentConfig, st: _Stages, dom):
    A = cfg.build_coefficient()
    ladder = cfg.scales or [2.0**j for j in range(-3, 4)]
    prob, t = st.run("assemble", lambda: ell.DirichletProblem(dom, A, cfg.pitch))
    data = lambda foot, s: ((np.abs(foot[:, 1]) < 1e-12) & (foot[:, 0] < 0)).astype(float)
    (u, rep), t2 = st.run("solve", lambda: prob.solve(prob.boundary_values(data)))
    kp, t3 = st.run("carleson ladder", lambda: ell.kenig_pipher_carleson(u, A, ladder))
    st.record(
        "kp_a1",
        "Kenig-Pipher energy bound",
        "AC11",
        {"sup": kp.sup, "mu": kp.mu, "nu": kp.nu, "bound": kp.bound, "max_principle": rep.maximum_principle},
        kp.holds,
        "sup <= 3(1 + |mu|_C + |nu|_C)",
        t + t2 + t3,
    )
    st.report.tables["ladder"] = [{"r": r, "value": v} for r, v in kp.values.items()]
    st.report.plots["ladder"] = ("r", "value")


def _rhq(cfg: ExperimentConfig, st: _Stages, dom):
    grid, _ = st.run("dyadic grid", lambda: build_grid(dom, cfg.depth))
    X = _pole(cfg, dom)
    prob, t = st.run("assemble", lambda: ell.DirichletProblem(dom, cfg.build_coefficient(), cfg.pitch))
    est, t2 = st.run("elliptic measure", lambda: ell.elliptic_measure(prob, X, grid, cfg.depth))
    fit, t3 = st.run("reverse Hölder", lambda: ell.rhq_fit(est, grid, cfg.q))
    st.record(
        "rhq",
        "reverse Hölder density",
        "AC12",
        {"rh_max": fit.rh_max, "hyp_max": fit.hyp_max, "ainfty_C": fit.ainfty_C, "ainfty_s": fit.ainfty_s},
        math.isfinite(fit.rh_max),
        "finite",
        t + t2 + t3,
    )
    st.report.tables["rhq"] = [{"delta": k, "rh": v, "hyp": fit.hyp[k]} for k, v in fit.rh.items()]


_RUNNERS = {
    "grid": _grid,
    "whitney": _whitney,
    "classify": _classify,
    "harmonic_measure": _harmonic_measure,
    "boundary_estimates": _boundary_estimates,
    "ainfty_to_nta": _ainfty_to_nta,
    "kp_appendix": _kp_appendix,
    "rhq": _rhq,
}


def run_pipeline(cfg: ExperimentConfig) -> Report:
    cfg.validate()
    report = Report(cfg.pipeline, cfg.hash, __version__)
    st = _Stages(report)
    dom, _ = st.run("domain", cfg.build_domain)
    _RUNNERS[cfg.pipeline](cfg, st, dom)
    return report


# ------------------------------------------------------------------ emission
_CSV_FIELDS = ["check", "anchor", "criterion", "passed", "tolerance", "constants", "config_hash"]


def _csv_table(rows: list[dict]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    cols = list(rows[0].keys()) if rows else []
    for r in rows:
        cols += [k for k in r if k not in cols]
    w.writerow(cols)
    for r in rows:
        w.writerow([_fmt(r.get(c, "")) for c in cols])
    return buf.getvalue()


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (bool, np.bool_)):
        return int(v)
    return v


def svg_plot(rows: list[dict], xcol: str, ycol: str, width: int = 480, height: int = 320) -> str:
    """Scatter plus polyline of ``ycol`` against ``xcol`` (log-scaled x when all x > 0)."""
    pts = [(float(r[xcol]), float(r[ycol])) for r in rows]
    head = f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">\n'
    if not pts:
        return head + "</svg>\n"
    xs = np.array([p[0] for p in pts])
    ys = np.array([p[1] for p in pts])
    if np.all(xs > 0):
        xs = np.log2(xs)
    pad = 32

    def scale(v, lo, hi, a, b):
        return (a + b) / 2 if hi == lo else a + (v - lo) / (hi - lo) * (b - a)

    px = [scale(v, xs.min(), xs.max(), pad, width - pad) for v in xs]
    py = [scale(v, ys.min(), ys.max(), height - pad, pad) for v in ys]
    body = f'<text x="{pad}" y="20" font-size="12">{ycol} vs {xcol}</text>\n'
    body += '<polyline fill="none" stroke="black" points="' + " ".join(f"{a:.2f},{b:.2f}" for a, b in zip(px, py)) + '"/>\n'
    body += "".join(f'<circle cx="{a:.2f}" cy="{b:.2f}" r="3"/>\n' for a, b in zip(px, py))
    return head + body + "</svg>\n"


def emit_report(report: Report, out, formats=("csv", "json", "svg"), timings: bool = False) -> list[Path]:
    """Write the report files; run times go to ``timings.json`` only on request so reruns stay byte-identical."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []

    def put(name, text):
        p = out / name
        p.write_text(text)
        written.append(p)

    if "json" in formats:
        put("report.json", json.dumps(_clean(report.to_json()), indent=2) + "\n")
    if "csv" in formats:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(_CSV_FIELDS)
        for r in report.records:
            w.writerow([r.check, r.anchor, r.criterion, int(r.passed), r.tolerance, json.dumps(r.constants, sort_keys=True), report.config_hash])
        put("checks.csv", buf.getvalue())
        for name, text in report.extra_csv.items():
            put(f"{name}.csv", text)
        for name, rows in report.tables.items():
            if name in report.plots:
                put(f"{name}.csv", _csv_table(_clean(rows)))
    if "svg" in formats:
        for name, (xc, yc) in report.plots.items():
            put(f"{name}.svg", svg_plot(report.tables[name], xc, yc))
    if timings:
        put("timings.json", json.dumps({r.check: r.runtime for r in report.records}, indent=2) + "\n")
    return written
