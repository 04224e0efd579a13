"""Monte-Carlo rate experiments.

Draws a target, simulates data at each sample size, fits every configured
estimator, measures L2 risk, and fits log-log slopes.  Every random draw
comes from a seed derived from (master seed, stream, n, replication), so
results do not depend on how cells are scheduled across threads.
"""

import csv
import io
import json
import math
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from . import estimators as est_mod
from . import quadrature, sparse_classes, wavelets
from .relu_net import NetworkArch

STREAM_TARGET, STREAM_DATA, STREAM_FIT, STREAM_RISK = 0, 1, 2, 3
DEFAULT_LAW = "default"
CSV_HEADER = ("estimator", "n", "rep", "risk", "risk_se", "fit_seconds")
LINEAR_KINDS = ("kernel_ridge", "nadaraya_watson")
DEEP_KINDS = ("deep_constructive", "deep_gd")


def cell_rng(master_seed, stream, *key):
    """Generator for one (stream, cell) pair of the seed tree."""
    ss = np.random.SeedSequence(entropy=int(master_seed), spawn_key=(stream,) + tuple(int(k) for k in key))
    return np.random.default_rng(ss)


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

@dataclass
class ExperimentConfig:
    target: dict
    estimators: list
    n_grid: list = field(default_factory=lambda: [128 * 2 ** i for i in range(7)])
    replications: int = 20
    sigma: float = 0.5
    risk: dict = field(default_factory=lambda: {"method": "exact", "mc_points": 100000})
    resample_target: bool = False
    master_seed: int = 0
    threads: int = 1
    record_timing: bool = False
    outputs: dict = field(default_factory=lambda: {"csv": "cells.csv", "json": "rates.json",
                                                   "svg": "rates.svg"})

    def __post_init__(self):
        self.n_grid = [int(n) for n in self.n_grid]
        if any(b <= a for a, b in zip(self.n_grid, self.n_grid[1:])) or not self.n_grid:
            raise ValueError("n grid must be nonempty and strictly increasing")
        if self.n_grid[0] < 1:
            raise ValueError("sample sizes must be positive")
        if self.replications < 1:
            raise ValueError("need at least one replication")
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")
        if not self.estimators:
            raise ValueError("need at least one estimator")
        names = [e.get("name", e["kind"]) for e in self.estimators]
        if len(set(names)) != len(names):
            raise ValueError("estimator names must be unique")

    @classmethod
    def from_dict(cls, d):
        known = {f for f in cls.__dataclass_fields__}
        extra = set(d) - known
        if extra:
            raise ValueError(f"unknown config keys: {sorted(extra)}")
        return cls(**d)

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self):
        return asdict(self)


def draw_target(spec, rng):
    """Sample a target from a class spec such as {"kind": "Jk", "k": 3, "C": 2}."""
    kind = spec["kind"]
    if spec.get("law", DEFAULT_LAW) != DEFAULT_LAW:
        raise ValueError(f"unknown sampling law {spec['law']!r}; only {DEFAULT_LAW!r} is implemented")
    if kind == "Jk":
        return sparse_classes.sample_jk(int(spec["k"]), float(spec["C"]), rng)
    if kind == "I0":
        f = sparse_classes.sample_i0(int(spec["n_s"]), float(spec["C"]),
                                     spec.get("phi_set", ["step"]), rng, int(spec.get("d", 1)))
        bounds = dict(f.bounds, phi_set=list(spec.get("phi_set", ["step"])))
        return sparse_classes.TargetFunction(f.kind, f.params, f.sup_bound, f.dim, bounds)
    if kind in ("Jp", "Kp"):
        d = int(spec.get("d", 1))
        mothers = spec.get("mothers", ["haar"] * d)
        w = wavelets.DyadicWavelet(tuple(mothers))
        args = (float(spec["p"]), float(spec["C1"]), float(spec["C2"]))
        if kind == "Jp":
            e = wavelets.sample_jp(w, *args, float(spec["beta"]), int(spec.get("max_level", 10)), rng)
            return wavelets.synthesize(e)
        return wavelets.sample_kp([w], int(spec["n_s"]), *args, float(spec["C3"]),
                                  float(spec["beta"]), int(spec.get("max_level", 10)), rng)
    raise ValueError(f"unknown target kind {kind!r}")


def target_rng(cfg, n=None, rep=None):
    seed = cfg.target.get("seed")
    if cfg.resample_target:
        return cell_rng(cfg.master_seed if seed is None else seed, STREAM_TARGET, n, rep)
    if seed is not None:
        return np.random.default_rng(np.random.SeedSequence(int(seed)))
    return cell_rng(cfg.master_seed, STREAM_TARGET)


# ---------------------------------------------------------------------------
# data and risk
# ---------------------------------------------------------------------------

def generate_data(f, n, sigma, rng, seed=None):
    """n draws of X ~ U[0,1]^d and Y = f(X) + N(0, sigma^2)."""
    if n < 1 or not sigma > 0:
        raise ValueError("need n >= 1 and sigma > 0")
    xs = rng.uniform(0.0, 1.0, size=(n, f.dim))
    noise = rng.standard_normal(n) * sigma
    ys = f.params.evaluate(xs) + noise
    return est_mod.Dataset(xs, ys, sigma, seed, f.kind)


@dataclass(frozen=True)
class RiskEstimate:
    risk: float
    se: float
    method: str


def _values(g, pts):
    if hasattr(g, "params"):
        return g.params.evaluate(pts)
    if hasattr(g, "evaluate"):
        return g.evaluate(pts)
    return np.asarray(g(pts), dtype=float)


def _breaks_of(g):
    fn = getattr(g, "breakpoints", None)
    if fn is None:
        return None
    return fn()


def l2_distance_sq(g, f, smooth_width=1.0 / 1024, q=5):
    """Squared L2 distance on [0,1] by breakpoint-aligned Gauss quadrature.

    Returns None when either function lacks 1-d breakpoint information.
    """
    bf, bg = _breaks_of(f), _breaks_of(g)
    smooth_g = getattr(g, "smooth", False)
    if bf is None or (bg is None and not smooth_g):
        return None
    breaks = quadrature.merge_breaks(bf[0], None if bg is None else bg[0])
    if smooth_g:
        breaks = quadrature.refine(breaks, smooth_width)
    x, w = quadrature.cell_nodes(breaks, q)
    diff = _values(g, x[:, None]) - _values(f, x[:, None])
    return float(np.dot(w, diff * diff))


def estimate_l2_risk(est, f, method="exact", mc_points=100000, rng=None):
    """||est - f||^2 over [0,1]^d with a standard error (zero when exact)."""
    if method == "exact":
        if f.dim == 1:
            val = l2_distance_sq(est, f)
            if val is not None:
                return RiskEstimate(max(val, 0.0), 0.0, "exact")
        warnings.warn("exact risk unavailable; falling back to Monte Carlo", RuntimeWarning)
        method = "mc"
    if method != "mc":
        raise ValueError(f"unknown risk method {method!r}")
    if rng is None:
        raise ValueError("Monte Carlo risk needs an rng")
    pts = rng.uniform(0.0, 1.0, size=(int(mc_points), f.dim))
    sq = (_values(est, pts) - f.params.evaluate(pts)) ** 2
    return RiskEstimate(float(sq.mean()), float(sq.std(ddof=1) / math.sqrt(sq.size)), "mc")


# ---------------------------------------------------------------------------
# estimator factory
# ---------------------------------------------------------------------------

def bandwidth_for(policy, n):
    if isinstance(policy, (int, float)):
        return float(policy)
    return float(policy.get("scale", 1.0)) * n ** float(policy.get("exponent", -1.0 / 3.0))


def fit_estimator(spec, data, target, rng):
    kind = spec["kind"]
    if kind == "kernel_ridge":
        kernel = est_mod.kernel_from_dict(spec.get("kernel", {"type": "laplace"}))
        return est_mod.kernel_ridge(data, kernel, spec.get("lambda", "cv"),
                                    spec.get("lambda_grid", est_mod.DEFAULT_LAMBDA_GRID),
                                    int(spec.get("folds", 5)), rng)
    if kind == "nadaraya_watson":
        return est_mod.nadaraya_watson(data, bandwidth_for(spec.get("bandwidth", {}), data.n),
                                       spec.get("kernel", "box"))
    if kind == "wavelet_threshold":
        w = wavelets.DyadicWavelet(tuple(spec.get("mothers", ["haar"])))
        level = spec.get("max_level", int(math.floor(math.log2(data.n))) - 1)
        return est_mod.wavelet_threshold(data, w, int(level), spec.get("threshold"))
    if kind == "deep_constructive":
        hint = est_mod.ClassHint.of(target)
        return est_mod.erm_deep_constructive(data, hint, spec.get("budget"))
    if kind == "deep_gd":
        a = spec.get("arch", {"L": 2, "S": 200, "D": 16, "B": 100.0})
        arch = NetworkArch(int(a["L"]), int(a["S"]), int(a["D"]), float(a["B"]),
                           a.get("F", target.sup_bound))
        return est_mod.erm_deep_gd(data, arch, int(spec.get("epochs", 500)),
                                   float(spec.get("step", 0.01)), int(rng.integers(2 ** 31)),
                                   bool(spec.get("prune", False)))
    raise ValueError(f"unknown estimator kind {kind!r}")


# ---------------------------------------------------------------------------
# sweep
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CellRecord:
    estimator: str
    n: int
    rep: int
    risk: float
    risk_se: float
    fit_seconds: float
    error: Optional[str] = None


def run_cell(cfg, n, rep, fixed_target=None):
    f = fixed_target if fixed_target is not None else draw_target(cfg.target, target_rng(cfg, n, rep))
    data = generate_data(f, n, cfg.sigma, cell_rng(cfg.master_seed, STREAM_DATA, n, rep),
                         seed=cfg.master_seed)
    out = []
    for j, spec in enumerate(cfg.estimators):
        name = spec.get("name", spec["kind"])
        try:
            t0 = time.perf_counter()
            est = fit_estimator(spec, data, f, cell_rng(cfg.master_seed, STREAM_FIT, n, rep, j))
            elapsed = time.perf_counter() - t0
            r = estimate_l2_risk(est, f, cfg.risk.get("method", "exact"),
                                 cfg.risk.get("mc_points", 100000),
                                 cell_rng(cfg.master_seed, STREAM_RISK, n, rep, j))
            out.append(CellRecord(name, n, rep, r.risk, r.se, elapsed))
        except Exception as exc:  # recorded and excluded from aggregation
            out.append(CellRecord(name, n, rep, float("nan"), float("nan"), 0.0,
                                  f"{type(exc).__name__}: {exc}"))
    return out


@dataclass
class RateFit:
    slope: float
    intercept: float
    slope_se: float
    points_used: int


def fit_rate(points, min_points=4):
    """OLS of ln(risk) on ln(n); nonpositive risks are dropped with a warning."""
    pts = [(float(n), float(r)) for n, r in points]
    keep = [(n, r) for n, r in pts if r > 0 and np.isfinite(r)]
    if len(keep) < len(pts):
        warnings.warn(f"dropped {len(pts) - len(keep)} nonpositive risk values", RuntimeWarning)
    if len(keep) < min_points:
        raise ValueError(f"slope fit needs at least {min_points} positive points, got {len(keep)}")
    x = np.log([n for n, _ in keep])
    y = np.log([r for _, r in keep])
    xm, ym = x.mean(), y.mean()
    sxx = np.sum((x - xm) ** 2)
    slope = float(np.sum((x - xm) * (y - ym)) / sxx)
    intercept = float(ym - slope * xm)
    resid = y - (intercept + slope * x)
    dof = len(keep) - 2
    s2 = float(np.sum(resid ** 2) / dof) if dof > 0 else 0.0
    return RateFit(slope, intercept, math.sqrt(s2 / sxx), len(keep))


def reference_exponents(spec):
    """Rate exponents (of n) attached to a class spec, without log factors."""
    kind = spec["kind"]
    if kind in ("Jk", "I0"):
        return {"deep": -1.0, "linear": -0.5, "minimax": -1.0}
    alpha = 1.0 / float(spec["p"]) - 0.5
    beta = float(spec["beta"])
    deep = -2.0 * alpha / (2.0 * alpha + 1.0)
    return {"deep": deep, "minimax": deep, "linear": -0.5,
            "linear_tail": -beta / (1.0 + beta), "alpha": alpha, "gamma": 1.0 / (1.0 + beta)}


@dataclass
class ReferenceCurve:
    label: str
    exponent: float
    log_power: float
    values: list
    source: str


def reference_curves(spec, n_grid):
    """Shape-only reference curves n^a (ln n)^b with unit constants."""
    ns = np.asarray(n_grid, dtype=float)
    ex = reference_exponents(spec)
    curves = []

    def add(label, a, b, source):
        curves.append(ReferenceCurve(label, a, b, (ns ** a * np.log(ns) ** b).tolist(), source))

    if spec["kind"] in ("Jk", "I0"):
        add("deep upper (shape only)", -1.0, 3.0, "deep ReLU upper rate on l0-bounded affine classes")
        add("minimax lower (shape only)", -1.0, 0.0, "minimax lower rate on l0-bounded affine classes")
        add("linear lower (shape only)", -0.5, 0.0, "linear-estimator lower rate on J_k")
    else:
        a = ex["alpha"]
        add("deep upper (shape only)", ex["deep"], 3.0, "deep ReLU upper rate on J^p / K^p")
        add("minimax lower (shape only)", ex["deep"], -4.0 * a * a / (2.0 * a + 1.0),
            "minimax lower rate on J^p")
        add("linear lower, tail (shape only)", ex["linear_tail"], 0.0,
            "linear-estimator lower rate from the tail-compactness exponent")
        add("linear lower, jumps (shape only)", -0.5, 0.0,
            "linear-estimator lower rate via inclusion of jump functions (Haar mother)")
    return curves


def _estimator_reference(spec_kind, class_spec):
    ex = reference_exponents(class_spec)
    if spec_kind in LINEAR_KINDS:
        value = max(ex["linear"], ex.get("linear_tail", -math.inf))
        return value, "linear lower bound (largest of the applicable exponents)"
    if spec_kind in DEEP_KINDS:
        return ex["deep"], "deep ReLU upper rate"
    return ex["minimax"], "minimax rate"


@dataclass
class RateReport:
    estimator: str
    kind: str
    n_grid: list
    mean_risk: list
    risk_se: list
    replications_used: list
    slope: float
    intercept: float
    slope_se: float
    slope_band: list
    reference_exponent: float
    reference_source: str
    label: str
    failures: int
    cells: list

    def to_dict(self):
        return asdict(self)


@dataclass
class SweepResult:
    config: ExperimentConfig
    records: list
    reports: list
    target: Optional[object] = None

    def report(self, name):
        for r in self.reports:
            if r.estimator == name:
                return r
        raise KeyError(name)


def aggregate(cfg, records):
    reports = []
    for spec in cfg.estimators:
        name = spec.get("name", spec["kind"])
        mine = [r for r in records if r.estimator == name]
        means, ses, used, pts = [], [], [], []
        for n in cfg.n_grid:
            risks = np.array([r.risk for r in mine if r.n == n and r.error is None])
            used.append(int(risks.size))
            if risks.size == 0:
                means.append(float("nan"))
                ses.append(float("nan"))
                continue
            m = float(risks.mean())
            se = float(risks.std(ddof=1) / math.sqrt(risks.size)) if risks.size > 1 else 0.0
            means.append(m)
            ses.append(se)
            pts.append((n, m))
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RuntimeWarning)
                fit = fit_rate(pts)
            slope, intercept, slope_se = fit.slope, fit.intercept, fit.slope_se
        except ValueError:
            slope = intercept = slope_se = float("nan")
        ref, source = _estimator_reference(spec["kind"], cfg.target)
        reports.append(RateReport(
            estimator=name, kind=spec["kind"], n_grid=list(cfg.n_grid), mean_risk=means,
            risk_se=ses, replications_used=used, slope=slope, intercept=intercept,
            slope_se=slope_se, slope_band=[slope - 1.96 * slope_se, slope + 1.96 * slope_se],
            reference_exponent=ref, reference_source=source,
            label="average-case over the sampler",
            failures=sum(1 for r in mine if r.error is not None),
            cells=[{"n": r.n, "rep": r.rep, "risk": r.risk, "risk_se": r.risk_se,
                    **({"error": r.error} if r.error else {})} for r in mine]))
    return reports


def run_sweep(cfg, threads=None):
    """Run every (n, replication) cell and aggregate per estimator.

    Cells run on a thread pool; records are sorted by (estimator order,
    n, rep) before aggregation, so output is independent of ``threads``.
    """
    threads = cfg.threads if threads is None else threads
    fixed = None if cfg.resample_target else draw_target(cfg.target, target_rng(cfg))
    keys = [(n, rep) for n in cfg.n_grid for rep in range(cfg.replications)]
    if threads <= 1:
        results = [run_cell(cfg, n, rep, fixed) for n, rep in keys]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(lambda k: run_cell(cfg, k[0], k[1], fixed), keys))
    order = {spec.get("name", spec["kind"]): j for j, spec in enumerate(cfg.estimators)}
    records = sorted((r for cell in results for r in cell),
                     key=lambda r: (order[r.estimator], r.n, r.rep))
    return SweepResult(cfg, records, aggregate(cfg, records), fixed)


# ---------------------------------------------------------------------------
# output
# ---------------------------------------------------------------------------

def _fmt(x):
    return format(x, ".17g")


def cells_csv(records, record_timing=False):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in records:
        w.writerow([r.estimator, r.n, r.rep, _fmt(r.risk), _fmt(r.risk_se),
                    _fmt(r.fit_seconds) if record_timing else ""])
    return buf.getvalue()


def read_cells_csv(path):
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            out.append(CellRecord(row["estimator"], int(row["n"]), int(row["rep"]),
                                  float(row["risk"]), float(row["risk_se"]),
                                  float(row["fit_seconds"]) if row["fit_seconds"] else 0.0,
                                  None if np.isfinite(float(row["risk"])) else "failed"))
    return out


def _clean(obj):
    # JSON has no NaN; emit null instead
    if isinstance(obj, float) and not np.isfinite(obj):
        return None
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_clean(v) for v in obj]
    return obj


def reports_json(reports, cfg):
    doc = {"reports": [r.to_dict() for r in reports],
           "reference_curves": [asdict(c) for c in reference_curves(cfg.target, cfg.n_grid)],
           "reference_exponents": reference_exponents(cfg.target)}
    return json.dumps(_clean(doc), indent=2, sort_keys=True) + "\n"


def write_outputs(result, out_dir):
    import os
    cfg = result.config
    os.makedirs(out_dir, exist_ok=True)
    paths = {}
    p = os.path.join(out_dir, cfg.outputs.get("csv", "cells.csv"))
    with open(p, "w", newline="") as fh:
        fh.write(cells_csv(result.records, cfg.record_timing))
    paths["csv"] = p
    p = os.path.join(out_dir, cfg.outputs.get("json", "rates.json"))
    with open(p, "w") as fh:
        fh.write(reports_json(result.reports, cfg))
    paths["json"] = p
    if cfg.outputs.get("svg"):
        p = os.path.join(out_dir, cfg.outputs["svg"])
        plot_rates(result.reports, cfg, p)
        paths["svg"] = p
    return paths


def plot_rates(reports, cfg, path):
    """Log-log SVG of mean risks, fitted lines and shape-only reference curves."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    matplotlib.rcParams["svg.hashsalt"] = "sparse-minimax"
    fig, ax = plt.subplots(figsize=(6.4, 4.8))
    ns = np.asarray(cfg.n_grid, dtype=float)
    anchor = None
    for r in reports:
        m = np.asarray(r.mean_risk, dtype=float)
        ok = np.isfinite(m) & (m > 0)
        if not ok.any():
            continue
        ax.errorbar(ns[ok], m[ok], yerr=np.asarray(r.risk_se, float)[ok], fmt="o",
                    label=f"{r.estimator} (slope {r.slope:.3f})")
        if np.isfinite(r.slope):
            ax.plot(ns, np.exp(r.intercept) * ns ** r.slope, "-", lw=1)
        if anchor is None:
            anchor = m[ok][0]
    for c in reference_curves(cfg.target, cfg.n_grid):
        vals = np.asarray(c.values)
        scale = (anchor or 1.0) / vals[0]
        ax.plot(ns, vals * scale, "--", lw=0.8, label=c.label)
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("n")
    ax.set_ylabel("L2 risk")
    ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
