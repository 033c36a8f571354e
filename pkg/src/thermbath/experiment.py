"""Disorder-ensemble runs: D_max curves, slope fits and the transition estimate."""

from __future__ import annotations

import csv
import io
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np

from .entropy import dmax_smooth, dmax_region_curve, infinite_time_average, reduce_equilibrium
from .lattice import L_MAX, L_MIN, ChainSpec, Region, diagonalize_chain, neel_variant_state, realization_from_seed
from .rng import derive_seed
from .thermal import TARGET_KINDS, thermal_target, match_beta

ABORT_FRACTION = 0.2
LITERATURE = {
    "critical_disorder_infinite_chain": 7.0,
    "finite_size_transition_estimate_L15": 4.5,
}


class ConfigError(ValueError):
    pass


class EnsembleAbort(RuntimeError):
    def __init__(self, failed: int, total: int, log: list):
        super().__init__(f"{failed} of {total} work items failed (limit {ABORT_FRACTION:.0%})")
        self.failed = failed
        self.total = total
        self.log = log


# ---------------------------------------------------------------- config


@dataclass(frozen=True)
class ExperimentConfig:
    L: int = 10
    deltas: tuple = (0.5, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 8.0)
    realizations: int = 20
    seed: int = 12345
    region_sizes: tuple = (1, 2, 3, 4, 5)
    target_kinds: tuple = TARGET_KINDS
    epsilon: float = 0.1
    out: str = "results"
    workers: int = 1
    boundary: str = "periodic"
    region_start: int = 0
    fit_sizes: tuple = ()  # empty: fit every region size

    def validate(self) -> ExperimentConfig:
        if not L_MIN + 1 <= self.L <= L_MAX:
            raise ConfigError(f"L must be in [{L_MIN + 1}, {L_MAX}]")
        if not self.deltas:
            raise ConfigError("deltas must not be empty")
        if any(not math.isfinite(d) or d < 0 for d in self.deltas):
            raise ConfigError("deltas must be finite and non-negative")
        if len(set(self.deltas)) != len(self.deltas):
            raise ConfigError("deltas must be distinct")
        if self.realizations < 1:
            raise ConfigError("realizations must be >= 1")
        if not self.region_sizes:
            raise ConfigError("region_sizes must not be empty")
        if any(not 1 <= r <= self.L - 1 for r in self.region_sizes):
            raise ConfigError(f"region sizes must lie in [1, {self.L - 1}]")
        if not self.target_kinds or any(k not in TARGET_KINDS for k in self.target_kinds):
            raise ConfigError(f"target_kinds must be a non-empty subset of {TARGET_KINDS}")
        if not 0 < self.epsilon < 1:
            raise ConfigError("epsilon must be in (0, 1)")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if self.boundary not in ("periodic", "open"):
            raise ConfigError("boundary must be periodic or open")
        if any(s not in self.region_sizes for s in self.fit_sizes):
            raise ConfigError("fit_sizes must be a subset of region_sizes")
        return self

    @property
    def sizes_for_fit(self) -> tuple:
        return tuple(sorted(self.fit_sizes or self.region_sizes))

    # flat "key = value" text; lists are comma separated
    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, tuple):
                v = ", ".join(repr(x) if isinstance(x, float) else str(x) for x in v)
            elif isinstance(v, float):
                v = repr(v)
            lines.append(f"{f.name} = {v}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> ExperimentConfig:
        kinds = {f.name: f for f in fields(cls)}
        values = {}
        for num, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"line {num}: expected key = value")
            key, val = (s.strip() for s in line.split("=", 1))
            if key not in kinds:
                raise ConfigError(f"line {num}: unknown key {key!r}")
            values[key] = _parse_value(key, val)
        return cls(**values).validate()

    @classmethod
    def load(cls, path: str) -> ExperimentConfig:
        with open(path, encoding="utf-8") as fh:
            return cls.from_text(fh.read())


_INT_KEYS = {"L", "realizations", "seed", "workers", "region_start"}
_FLOAT_KEYS = {"epsilon"}
_LIST_KEYS = {"deltas": float, "region_sizes": int, "target_kinds": str, "fit_sizes": int}


def _parse_value(key: str, val: str):
    try:
        if key in _INT_KEYS:
            return int(val)
        if key in _FLOAT_KEYS:
            return float(val)
        if key in _LIST_KEYS:
            conv = _LIST_KEYS[key]
            return tuple(conv(x.strip()) for x in val.split(",") if x.strip())
        return val
    except ValueError as exc:
        raise ConfigError(f"bad value for {key}: {val!r}") from exc


PRESETS = {
    "desk": ExperimentConfig(),
    "full": ExperimentConfig(L=14, deltas=(0.5, 1.0, 2.0, 3.0, 4.0, 4.5, 5.0, 6.0, 7.0, 8.0, 10.0),
                             realizations=100, region_sizes=(1, 2, 3, 4, 5, 6, 7)),
}


# ---------------------------------------------------------------- work items


def _run_item(args):
    cfg, di, ri = args
    delta = cfg.deltas[di]
    seed = derive_seed(cfg.seed, di, ri)
    out = {"delta_index": di, "realization": ri, "seed": seed, "beta": None,
           "curves": {}, "bounds": {}, "failures": []}
    try:
        spec = ChainSpec(cfg.L, delta, cfg.boundary, seed)
        real = realization_from_seed(spec, seed, ri)
        spectrum = diagonalize_chain(real)
        psi0 = neel_variant_state(cfg.L)
        eq = infinite_time_average(psi0, spectrum, provenance=(di, ri, "neel-variant"))
        beta = match_beta(spectrum, psi0)
        out["beta"] = beta
    except ValueError as exc:
        out["failures"].append({"target_kind": None, "region_size": None, "reason": str(exc)})
        return out
    smallest = min(cfg.region_sizes)
    for kind in cfg.target_kinds:
        pts = dmax_region_curve(real, beta, cfg.region_sizes, kind, spectrum=spectrum,
                                equilibrium=eq, start=cfg.region_start)
        out["curves"][kind] = [(p.size, p.value) for p in pts]
        for p in pts:
            if p.value is None:
                out["failures"].append({"target_kind": kind, "region_size": p.size, "reason": p.error})
        out["bounds"][kind] = _bounds(real, eq, beta, kind, spectrum, smallest, cfg)
    return out


def _bounds(real, eq, beta, kind, spectrum, size, cfg):
    """Bath-size bounds for one region: 2^{D_max^{2 sqrt eps}} and 2^{D_max}/eps^2 (as log2)."""
    region = Region(cfg.region_start, size)
    omega_r = reduce_equilibrium(eq, region, cfg.L)
    tau = thermal_target(real, region, beta, kind, spectrum).state
    from .entropy import dmax

    try:
        D = dmax(omega_r, tau).value
    except ValueError:
        return None
    upper = D - 2.0 * math.log2(cfg.epsilon)
    s = 2.0 * math.sqrt(cfg.epsilon)
    try:
        lower = dmax_smooth(omega_r, tau, s).value if s < 1 else 0.0
    except ValueError:
        lower = None
    return {"log2_upper": upper, "log2_lower": lower}


# ---------------------------------------------------------------- aggregation


@dataclass
class EnsembleResult:
    config: ExperimentConfig
    cells: list  # dicts: delta, region_size, target_kind, mean, stderr, count
    slopes: list  # dicts: delta, target_kind, slope, slope_stderr, intercept
    transitions: dict
    bounds: list
    failures: list
    items: int
    failed_items: int
    per_realization: list = field(default_factory=list, repr=False)

    def mean(self, delta: float, size: int, kind: str) -> float:
        for c in self.cells:
            if c["delta"] == delta and c["region_size"] == size and c["target_kind"] == kind:
                return c["mean"]
        raise KeyError((delta, size, kind))

    def slope(self, delta: float, kind: str) -> float:
        for s in self.slopes:
            if s["delta"] == delta and s["target_kind"] == kind:
                return s["slope"]
        raise KeyError((delta, kind))


def fit_slope(x, y, weights=None):
    """Weighted least-squares line; returns (slope, slope_stderr, intercept).

    The standard error comes from the residual variance and is nan when
    there are only two points.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size != y.size:
        raise ValueError("x and y differ in length")
    if np.unique(x).size < 2:
        raise ValueError("need at least two distinct abscissae")
    w = np.ones_like(x) if weights is None else np.asarray(weights, dtype=float)
    A = np.stack([np.ones_like(x), x], axis=1)
    sw = np.sqrt(w)
    coef, *_ = np.linalg.lstsq(A * sw[:, None], y * sw, rcond=None)
    resid = y - A @ coef
    dof = x.size - 2
    if dof == 0:
        return float(coef[1]), math.nan, float(coef[0])
    s2 = float(np.sum(w * resid**2)) / dof
    cov = s2 * np.linalg.inv(A.T @ (A * w[:, None]))
    return float(coef[1]), float(math.sqrt(max(cov[1, 1], 0.0))), float(coef[0])


def transition_estimate(deltas, slopes):
    """Argmax of d(slope)/d(delta) and the contiguous run where it is at least half the max.

    A flat derivative selects the whole grid.
    """
    deltas = np.asarray(deltas, dtype=float)
    slopes = np.asarray(slopes, dtype=float)
    if deltas.size < 4:
        raise ValueError("need at least 4 disorder values")
    order = np.argsort(deltas)
    deltas, slopes = deltas[order], slopes[order]
    deriv = np.gradient(slopes, deltas)
    k = int(np.argmax(deriv))
    half = 0.5 * deriv[k]
    lo = k
    while lo > 0 and deriv[lo - 1] >= half:
        lo -= 1
    hi = k
    while hi < deriv.size - 1 and deriv[hi + 1] >= half:
        hi += 1
    return float(deltas[k]), (float(deltas[lo]), float(deltas[hi])), deriv


def _aggregate(cfg: ExperimentConfig, items: list) -> EnsembleResult:
    cells, slopes, bounds, failures, transitions = [], [], [], [], {}
    failed_items = 0
    for it in items:
        for f in it["failures"]:
            failures.append({"delta": cfg.deltas[it["delta_index"]], "realization": it["realization"], **f})
        failed_items += bool(it["failures"])
    for di, delta in enumerate(cfg.deltas):
        mine = [it for it in items if it["delta_index"] == di]
        for kind in cfg.target_kinds:
            for size in cfg.region_sizes:
                vals = [v for it in mine for s, v in it["curves"].get(kind, []) if s == size and v is not None]
                n = len(vals)
                mean = float(np.mean(vals)) if n else math.nan
                se = float(np.std(vals, ddof=1) / math.sqrt(n)) if n > 1 else math.nan
                cells.append({"delta": delta, "region_size": size, "target_kind": kind,
                              "mean": mean, "stderr": se, "count": n})
            xs = [c["region_size"] for c in cells
                  if c["delta"] == delta and c["target_kind"] == kind
                  and c["region_size"] in cfg.sizes_for_fit and c["count"] > 0]
            ys = [c["mean"] for c in cells
                  if c["delta"] == delta and c["target_kind"] == kind
                  and c["region_size"] in cfg.sizes_for_fit and c["count"] > 0]
            if len(set(xs)) >= 2:
                sl, se, ic = fit_slope(xs, ys)
            else:
                sl = se = ic = math.nan
            slopes.append({"delta": delta, "target_kind": kind, "slope": sl, "slope_stderr": se,
                           "intercept": ic})
            bs = [it["bounds"].get(kind) for it in mine if it["bounds"].get(kind)]
            up = [b["log2_upper"] for b in bs]
            lo = [b["log2_lower"] for b in bs if b["log2_lower"] is not None]
            bounds.append({"delta": delta, "target_kind": kind, "region_size": min(cfg.region_sizes),
                           "epsilon": cfg.epsilon,
                           "median_log2_n_upper": float(np.median(up)) if up else None,
                           "median_log2_n_lower": float(np.median(lo)) if lo else None,
                           "count": len(bs)})
    for kind in cfg.target_kinds:
        ds = [s["delta"] for s in slopes if s["target_kind"] == kind and math.isfinite(s["slope"])]
        ss = [s["slope"] for s in slopes if s["target_kind"] == kind and math.isfinite(s["slope"])]
        if len(ds) >= 4:
            star, region, deriv = transition_estimate(ds, ss)
            transitions[kind] = {"delta_star": star, "region": list(region),
                                 "derivative": [float(x) for x in deriv]}
        else:
            transitions[kind] = None
    return EnsembleResult(cfg, cells, slopes, transitions, bounds, failures, len(items), failed_items, items)


def run_ensemble(cfg: ExperimentConfig) -> EnsembleResult:
    """Every (delta, realization) item, in canonical order, then aggregated.

    Raises :class:`EnsembleAbort` when more than 20% of the items record a failure.
    """
    cfg.validate()
    jobs = [(cfg, di, ri) for di in range(len(cfg.deltas)) for ri in range(cfg.realizations)]
    if cfg.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as ex:
            items = list(ex.map(_run_item, jobs))
    else:
        items = [_run_item(j) for j in jobs]
    result = _aggregate(cfg, items)
    if result.failed_items > ABORT_FRACTION * result.items:
        raise EnsembleAbort(result.failed_items, result.items, result.failures)
    return result


# ---------------------------------------------------------------- output


def _num(x) -> str:
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return "nan"
    if isinstance(x, int):
        return str(x)
    return format(float(x), ".17g")


def prepare_output_dir(path: str) -> str:
    """Create ``path`` and prove it is writable, before any computation."""
    try:
        os.makedirs(path, exist_ok=True)
        probe = os.path.join(path, ".write-probe")
        with open(probe, "w", encoding="utf-8") as fh:
            fh.write("")
        os.remove(probe)
    except OSError as exc:
        raise ConfigError(f"output directory {path!r} is not writable: {exc}") from exc
    return path


def curves_csv(result: EnsembleResult) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["delta", "region_size", "target_kind", "mean_dmax_bits", "stderr", "count"])
    rows = sorted(result.cells, key=lambda c: (c["delta"], c["region_size"], c["target_kind"]))
    for c in rows:
        w.writerow([_num(c["delta"]), c["region_size"], c["target_kind"], _num(c["mean"]),
                    _num(c["stderr"]), c["count"]])
    return buf.getvalue()


def slopes_csv(result: EnsembleResult) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["delta", "target_kind", "slope", "slope_stderr", "intercept"])
    for s in sorted(result.slopes, key=lambda s: (s["delta"], s["target_kind"])):
        w.writerow([_num(s["delta"]), s["target_kind"], _num(s["slope"]), _num(s["slope_stderr"]),
                    _num(s["intercept"])])
    return buf.getvalue()


def _jsonable(x):
    if isinstance(x, float):
        return float(_num(x)) if math.isfinite(x) else None
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    return x


def summary_dict(result: EnsembleResult) -> dict:
    return _jsonable({
        "config": asdict(result.config),
        "transition": result.transitions,
        "bath_size_bounds": result.bounds,
        "failures": result.failures,
        "items": result.items,
        "failed_items": result.failed_items,
        "literature_reference": LITERATURE,
    })


def emit_outputs(result: EnsembleResult, out: str | None = None) -> dict:
    out = prepare_output_dir(out or result.config.out)
    paths = {}
    for name, text in (("curves.csv", curves_csv(result)), ("slopes.csv", slopes_csv(result)),
                       ("summary.json", json.dumps(summary_dict(result), indent=2, sort_keys=True) + "\n")):
        path = os.path.join(out, name)
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        paths[name] = path
    return paths


def with_overrides(cfg: ExperimentConfig, **kw) -> ExperimentConfig:
    kw = {k: v for k, v in kw.items() if v is not None}
    return replace(cfg, **kw).validate()
