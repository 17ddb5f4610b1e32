"""Config-driven comparison runs: build a target, run samplers under a shared gradient
budget, score snapshots against an exact reference and write ``trace.csv``."""
from __future__ import annotations

import csv
import io
import math
import os
import tempfile
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
import yaml

from . import __version__, _rng, kernels
from .metrics import MmdConfig, ReferenceMmd, moment_sum, resolve_bandwidth
from .oracles import gaussian_score, quadrature_score
from .ou import DomainError, Schedule
from .samplers import (ULMC_SCHEME, SamplerRun, fine_tune, init_hat_p, lmc,
                       mode_weights, rdmc, ulmc)
from .score import KINDS, EstimatorConfig, PosteriorContext, estimate_score
from .targets import (FUNNEL_SCALE, GaussianMixtureSpec, TargetDensity, make_cauchy,
                      make_circle_gmm, make_gmm, make_ill_conditioned_gaussian, make_neals_funnel,
                      make_sublinear_tail)

CSV_HEADER = ["sampler", "step", "grad_evals", "f_evals", "mmd2",
              "moment1", "moment2", "moment3", "mode_dev", "wall_ms"]
TARGET_KINDS = ("gmm", "circle_gmm", "ill_gaussian", "sublinear", "cauchy", "funnel")
SAMPLER_KINDS = ("rdmc", "lmc", "ulmc")

# preset grids for the hyper-parameters the experiments search over
PRESET_GRIDS = {
    "terminal_time": [-math.log(v) for v in (0.99, 0.95, 0.9, 0.8, 0.7)],
    "outer_step_fraction": [1 / 20, 1 / 10, 1 / 5],
    "inner_steps": [1, 5, 10, 100],
    "inner_sample_count": [1, 5, 10, 100],
    "hat_p_iters": [10, 50, 100],
    "is_pool": [100],
}


class ConfigError(ValueError):
    """Invalid experiment configuration; ``field`` names the offending key."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


def _require(mapping, key, where):
    if not isinstance(mapping, dict) or key not in mapping:
        raise ConfigError(f"{where}.{key}" if where else key, "missing")
    return mapping[key]


def _number(value, where, *, positive=False, integer=False, allow_none=False):
    if value is None and allow_none:
        return None
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(where, f"expected a number, got {value!r}")
    if integer and float(value) != int(value):
        raise ConfigError(where, f"expected an integer, got {value!r}")
    if not math.isfinite(float(value)):
        raise ConfigError(where, "must be finite")
    if positive and not value > 0:
        raise ConfigError(where, f"must be positive, got {value!r}")
    return int(value) if integer else float(value)


def _resolve_target(spec) -> dict:
    if not isinstance(spec, dict):
        raise ConfigError("target", "expected a mapping")
    kind = _require(spec, "kind", "target")
    if kind not in TARGET_KINDS:
        raise ConfigError("target.kind", f"unknown target {kind!r}; expected one of {TARGET_KINDS}")
    out = {"kind": kind}
    if kind == "gmm":
        means = _require(spec, "means", "target")
        try:
            arr = np.atleast_2d(np.asarray(means, dtype=float))
        except (TypeError, ValueError):
            raise ConfigError("target.means", "expected a list of points") from None
        lw = spec.get("log_weights")
        out["means"] = arr.tolist()
        out["log_weights"] = None if lw is None else [float(v) for v in lw]
    elif kind == "circle_gmm":
        out["num_modes"] = _number(_require(spec, "num_modes", "target"), "target.num_modes", integer=True)
        out["r"] = _number(_require(spec, "r", "target"), "target.r", positive=True)
        out["dim"] = _number(spec.get("dim", 2), "target.dim", integer=True)
    elif kind == "ill_gaussian":
        out["mean"] = [float(v) for v in _require(spec, "mean", "target")]
        out["diag_cov"] = [float(v) for v in _require(spec, "diag_cov", "target")]
    elif kind == "sublinear":
        out["a"] = _number(_require(spec, "a", "target"), "target.a", positive=True)
        out["dim"] = _number(_require(spec, "dim", "target"), "target.dim", integer=True)
    else:
        out["dim"] = _number(_require(spec, "dim", "target"), "target.dim", integer=True)
    try:
        build_target(out)
    except DomainError as exc:
        raise ConfigError("target", str(exc)) from None
    return out


def build_target(spec: dict) -> TargetDensity:
    kind = spec["kind"]
    if kind == "gmm":
        return make_gmm(GaussianMixtureSpec(spec["means"], spec.get("log_weights")))
    if kind == "circle_gmm":
        return make_circle_gmm(spec["num_modes"], spec["r"], spec.get("dim", 2))
    if kind == "ill_gaussian":
        return make_ill_conditioned_gaussian(spec["mean"], spec["diag_cov"])
    if kind == "sublinear":
        return make_sublinear_tail(spec["a"], spec["dim"])
    if kind == "cauchy":
        return make_cauchy(spec["dim"])
    return make_neals_funnel(spec["dim"])


def _resolve_estimator(spec) -> dict:
    spec = dict(spec or {})
    defaults = asdict(EstimatorConfig())
    unknown = set(spec) - set(defaults)
    if unknown:
        raise ConfigError(f"estimator.{sorted(unknown)[0]}", "unknown field")
    merged = {**defaults, **spec}
    if merged["kind"] not in KINDS:
        raise ConfigError("estimator.kind", f"unknown estimator {merged['kind']!r}")
    for key in ("sample_count", "inner_steps", "is_pool"):
        merged[key] = _number(merged[key], f"estimator.{key}", integer=True)
    merged["inner_step_size"] = _number(merged["inner_step_size"], "estimator.inner_step_size",
                                        positive=True, allow_none=True)
    merged["tail_fraction"] = _number(merged["tail_fraction"], "estimator.tail_fraction")
    merged["init_at_mean"] = bool(merged["init_at_mean"])
    try:
        EstimatorConfig(**merged)
    except DomainError as exc:
        raise ConfigError("estimator", str(exc)) from None
    return merged


def _resolve_sampler(spec, i, has_cap) -> dict:
    where = f"samplers[{i}]"
    if not isinstance(spec, dict):
        raise ConfigError(where, "expected a mapping")
    kind = _require(spec, "kind", where)
    if kind not in SAMPLER_KINDS:
        raise ConfigError(f"{where}.kind", f"unknown sampler {kind!r}; expected one of {SAMPLER_KINDS}")
    out = {"kind": kind, "name": str(spec.get("name", kind))}
    if kind == "rdmc":
        init = spec.get("init", "standard_normal")
        if init not in ("standard_normal", "hat_p"):
            raise ConfigError(f"{where}.init", f"expected standard_normal or hat_p, got {init!r}")
        out["init"] = init
        if init == "hat_p":
            hp = _require(spec, "hat_p", where)
            out["hat_p"] = {
                "iters": _number(_require(hp, "iters", f"{where}.hat_p"), f"{where}.hat_p.iters", integer=True),
                "step": _number(_require(hp, "step", f"{where}.hat_p"), f"{where}.hat_p.step", positive=True),
            }
        ft = spec.get("fine_tune")
        if ft is not None:
            out["fine_tune"] = {
                "step": _number(_require(ft, "step", f"{where}.fine_tune"), f"{where}.fine_tune.step",
                                positive=True),
                "iters": _number(ft.get("iters"), f"{where}.fine_tune.iters", integer=True,
                                 allow_none=True),
            }
    else:
        out["step"] = _number(_require(spec, "step", where), f"{where}.step", positive=True)
        if kind == "ulmc":
            out["friction"] = _number(spec.get("friction", 2.0), f"{where}.friction", positive=True)
        iters = spec.get("iters")
        if iters is None and not has_cap:
            raise ConfigError(f"{where}.iters", "required when no budget_cap is set")
        out["iters"] = _number(iters, f"{where}.iters", integer=True, allow_none=True)
    return out


def resolve_config(raw: dict, seed: int | None = None, out_dir: str | None = None) -> dict:
    """Validate ``raw`` and fill every default; raises :class:`ConfigError` naming the field.

    The result is a plain mapping with keys ``target``, ``seed``, ``particles``,
    ``budget_cap``, ``samplers``, ``schedule``, ``estimator``, ``metrics``,
    ``snapshots_stride``, ``out_dir`` and ``plot``.  Dumped back to YAML it
    loads into the identical mapping.
    """
    if not isinstance(raw, dict):
        raise ConfigError("config", "expected a mapping at top level")
    known = {"target", "samplers", "schedule", "estimator", "particles", "seed", "budget_cap",
             "metrics", "snapshots_stride", "out_dir", "plot", "conventions", "score_check"}
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(sorted(unknown)[0], "unknown field")
    cfg: dict = {}
    cfg["target"] = _resolve_target(_require(raw, "target", ""))
    if seed is None and "seed" not in raw:
        raise ConfigError("seed", "missing (runs are never seeded from the clock)")
    cfg["seed"] = _number(raw["seed"] if seed is None else seed, "seed", integer=True)
    if not 0 <= cfg["seed"] < 2 ** 64:
        raise ConfigError("seed", "must be a 64-bit unsigned integer")
    cfg["particles"] = _number(raw.get("particles", 1000), "particles", positive=True, integer=True)
    cfg["budget_cap"] = _number(raw.get("budget_cap"), "budget_cap", positive=True, integer=True,
                                allow_none=True)
    samplers = _require(raw, "samplers", "")
    if not isinstance(samplers, list) or not samplers:
        raise ConfigError("samplers", "need at least one sampler")
    cfg["samplers"] = [_resolve_sampler(s, i, cfg["budget_cap"] is not None) for i, s in enumerate(samplers)]
    names = [s["name"] for s in cfg["samplers"]]
    if len(set(names)) != len(names):
        raise ConfigError("samplers", f"sampler names must be unique, got {names}")
    sched = raw.get("schedule") or {}
    T = _number(sched.get("T", -math.log(0.8)), "schedule.T", positive=True)
    eta = _number(sched.get("eta", T / 20), "schedule.eta", positive=True)
    try:
        Schedule(T, eta)
    except DomainError as exc:
        raise ConfigError("schedule", str(exc)) from None
    cfg["schedule"] = {"T": T, "eta": eta}
    cfg["estimator"] = _resolve_estimator(raw.get("estimator"))
    metrics = dict(raw.get("metrics") or {})
    unknown = set(metrics) - {"mmd_vs_reference", "moments", "mode_weights", "wall_clock", "mmd_bandwidth"}
    if unknown:
        raise ConfigError(f"metrics.{sorted(unknown)[0]}", "unknown field")
    moments = [int(p) for p in metrics.get("moments", [])]
    if any(p not in (1, 2, 3) for p in moments):
        raise ConfigError("metrics.moments", "orders must be 1, 2 or 3")
    modes = metrics.get("mode_weights")
    if modes == "target":
        t = build_target(cfg["target"])
        if t.modes is None:
            raise ConfigError("metrics.mode_weights", "target has no known modes")
        modes = t.modes.tolist()
    elif modes is not None:
        modes = np.atleast_2d(np.asarray(modes, dtype=float)).tolist()
    bw = metrics.get("mmd_bandwidth", "median-heuristic")
    try:
        MmdConfig(bandwidth=bw)
    except DomainError as exc:
        raise ConfigError("metrics.mmd_bandwidth", str(exc)) from None
    cfg["metrics"] = {
        "mmd_vs_reference": bool(metrics.get("mmd_vs_reference", False)),
        "moments": moments,
        "mode_weights": modes,
        "wall_clock": bool(metrics.get("wall_clock", False)),
        "mmd_bandwidth": bw,
    }
    if cfg["metrics"]["mmd_vs_reference"] and not build_target(cfg["target"]).has_exact_sampler:
        raise ConfigError("metrics.mmd_vs_reference", "no exact reference sampler")
    cfg["snapshots_stride"] = _number(raw.get("snapshots_stride"), "snapshots_stride", positive=True,
                                      integer=True, allow_none=True)
    cfg["out_dir"] = str(out_dir if out_dir is not None else raw.get("out_dir", "out"))
    cfg["plot"] = bool(raw.get("plot", True))
    return cfg


def conventions(cfg: dict) -> dict:
    """Declared conventions that shape results but are not recoverable from the other fields."""
    out = {
        "circle_gmm_layout": "modes at angle 2*pi*j/K on a circle of radius 2*r",
        "funnel_scale": FUNNEL_SCALE,
        "mmd_estimator": "biased_v_statistic",
        "mmd_kernel": "exp(-|a-b|^2 / (2 h^2))",
        "mmd_bandwidth_rule": "median pairwise distance of the reference sample, shared by all samplers",
        "ulmc_scheme": ULMC_SCHEME,
        "budget_axis": "grad_evals",
        "inner_step_default": "s^2 / (10 (1 + L)) when smoothness L is known, else s^2 / 10",
        "is_init_resampling": "systematic",
        "kernel_backend": kernels.BACKEND,
        "version": __version__,
    }
    if cfg["target"]["kind"] == "circle_gmm":
        out["circle_radius"] = 2.0 * cfg["target"]["r"]
    return out


def load_config(path, seed: int | None = None, out_dir: str | None = None) -> dict:
    try:
        with open(path) as fh:
            raw = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError("config", f"cannot read {path}: {exc}") from None
    except yaml.YAMLError as exc:
        raise ConfigError("config", f"not valid YAML: {exc}") from None
    return resolve_config(raw, seed=seed, out_dir=out_dir)


def dump_config(cfg: dict) -> str:
    body = {k: v for k, v in cfg.items()}
    body["conventions"] = conventions(cfg)
    return yaml.safe_dump(body, sort_keys=False)


def _atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _threads() -> int:
    value = os.environ.get("RDMC_THREADS")
    if value:
        try:
            return max(1, int(value))
        except ValueError:
            pass
    return os.cpu_count() or 1


def _run_sampler(spec: dict, target: TargetDensity, cfg: dict) -> SamplerRun:
    seed, n = cfg["seed"], cfg["particles"]
    cap = cfg["budget_cap"]
    stride = cfg["snapshots_stride"]
    # every sampler gets its own seed tree
    index = [s["name"] for s in cfg["samplers"]].index(spec["name"])
    streams = _rng.ParticleStreams(seed, n, (_rng.STAGE_MISC, index))
    if spec["kind"] == "rdmc":
        sched = Schedule(cfg["schedule"]["T"], cfg["schedule"]["eta"])
        est = EstimatorConfig(**cfg["estimator"])
        init = "standard_normal"
        ledger = None
        offset_trace = []
        if spec["init"] == "hat_p":
            hp = init_hat_p(target, sched.terminal_time, spec["hat_p"]["iters"], spec["hat_p"]["step"],
                            est, n, rng=streams, budget_cap=cap)
            init, ledger, offset_trace = hp.final, hp.ledger, hp.trace
        run = rdmc(target, sched, est, n, init=init, rng=streams, budget_cap=cap,
                   snapshot_stride=stride, ledger=ledger)
        if offset_trace:
            shift = offset_trace[-1].step
            for snap in run.trace:
                snap.step += shift
            run.trace = offset_trace + run.trace[1:]
            run.final.step_index += shift
        if "fine_tune" in spec and not run.truncated:
            iters = spec["fine_tune"]["iters"]
            if iters is None:
                if cap is None:
                    raise ConfigError(f"{spec['name']}.fine_tune.iters", "required when no budget_cap is set")
                iters = max(0, (cap - run.ledger.grad_evals) // n)
            run = fine_tune(run, target, spec["fine_tune"]["step"], iters, rng=streams,
                            snapshot_stride=stride)
        return run
    iters = spec["iters"] if spec["iters"] is not None else cap // n
    if spec["kind"] == "lmc":
        return lmc(target, spec["step"], iters, "standard_normal", rng=streams, budget_cap=cap,
                   snapshot_stride=stride, n_particles=n)
    return ulmc(target, spec["step"], spec["friction"], iters, "standard_normal", rng=streams,
                budget_cap=cap, snapshot_stride=stride, n_particles=n)


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    value = float(value)
    if not math.isfinite(value):
        return ""
    return repr(value)


@dataclass
class RunRecord:
    rows: list[dict]
    runs: dict
    reference: np.ndarray | None = None

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for row in self.rows:
            writer.writerow([_fmt(row.get(k)) if k != "sampler" else row[k] for k in CSV_HEADER])
        return buf.getvalue()

    def final_row(self, sampler: str) -> dict:
        return [r for r in self.rows if r["sampler"] == sampler][-1]


def _snapshot_metrics(snap, cfg, target, scorer) -> dict:
    m = cfg["metrics"]
    row = {"step": snap.step, "grad_evals": snap.grad_evals, "f_evals": snap.f_evals}
    if scorer is not None:
        row["mmd2"] = scorer(snap.particles)
    for p in m["moments"]:
        row[f"moment{p}"] = moment_sum(snap.particles, p)
    if m["mode_weights"] is not None:
        modes = np.asarray(m["mode_weights"], dtype=float)
        w = mode_weights(snap.particles, modes)
        weights = target.metadata.get("weights")
        if target.modes is not None and target.modes.shape == modes.shape \
                and np.allclose(target.modes, modes):
            expected = np.asarray(weights)
        else:
            expected = np.full(len(modes), 1.0 / len(modes))
        row["mode_dev"] = float(np.abs(w - expected).max())
    return row


def run_experiment(cfg: dict, write: bool = True) -> RunRecord:
    """Run every configured sampler and score its snapshots; optionally write the output files."""
    target = build_target(cfg["target"])
    reference = None
    scorer = None
    if cfg["metrics"]["mmd_vs_reference"]:
        ref_rng = np.random.Generator(np.random.Philox(
            np.random.SeedSequence(cfg["seed"], spawn_key=(_rng.STAGE_REFERENCE,))))
        reference = target.sample(10 * cfg["particles"], ref_rng)
        bw = cfg["metrics"]["mmd_bandwidth"]
        # one kernel for every sampler and snapshot, so MMD values are comparable
        half = reference.shape[0] // 2
        bandwidth = (resolve_bandwidth(reference[:half], reference[half:], MmdConfig())
                     if bw == "median-heuristic" else float(bw))
        scorer = ReferenceMmd(reference, bandwidth)
    rows, runs = [], {}
    for spec in cfg["samplers"]:
        start = time.perf_counter()
        run = _run_sampler(spec, target, cfg)
        elapsed = (time.perf_counter() - start) * 1000.0
        runs[spec["name"]] = run
        with ThreadPoolExecutor(max_workers=_threads()) as pool:
            scored = list(pool.map(lambda s: _snapshot_metrics(s, cfg, target, scorer), run.trace))
        for row in scored:
            row["sampler"] = spec["name"]
            row["wall_ms"] = elapsed if cfg["metrics"]["wall_clock"] else None
            rows.append(row)
    record = RunRecord(rows, runs, reference)
    if write:
        out = Path(cfg["out_dir"])
        _atomic_write(out / "trace.csv", record.to_csv())
        _atomic_write(out / "config_resolved.yaml", dump_config(cfg))
        if cfg["plot"] and reference is not None:
            from .plot import mmd_svg

            _atomic_write(out / "mmd.svg", mmd_svg(rows))
    return record


def score_check(raw: dict, seed: int | None = None) -> list[dict]:
    """Estimator error against an oracle score for each (estimator, budget) pair.

    Reads ``target``, ``seed``, ``estimator`` and a ``score_check`` section with
    ``x``, ``tau``, ``budgets`` and optionally ``estimators`` and ``grid``.
    """
    if not isinstance(raw, dict):
        raise ConfigError("config", "expected a mapping at top level")
    cfg = {"target": _resolve_target(_require(raw, "target", "")),
           "estimator": _resolve_estimator(raw.get("estimator"))}
    if seed is None and "seed" not in raw:
        raise ConfigError("seed", "missing (runs are never seeded from the clock)")
    cfg["seed"] = _number(raw["seed"] if seed is None else seed, "seed", integer=True)
    raw = _require(raw, "score_check", "")
    target = build_target(cfg["target"])
    x = np.asarray(_require(raw, "x", "score_check"), dtype=float).reshape(-1)
    if x.shape[0] != target.dim:
        raise ConfigError("score_check.x", f"expected {target.dim} coordinates")
    tau = _number(_require(raw, "tau", "score_check"), "score_check.tau", positive=True)
    kind = cfg["target"]["kind"]
    if kind == "ill_gaussian":
        exact = gaussian_score(x, tau, cfg["target"]["mean"], cfg["target"]["diag_cov"])
        oracle = "closed_form"
    elif target.dim == 1:
        grid = raw.get("grid", {})
        try:
            exact = np.array([quadrature_score(target, float(x[0]), tau, grid.get("lo", -12.0),
                                               grid.get("hi", 12.0), grid.get("n_nodes", 4001))])
        except DomainError as exc:
            raise ConfigError("score_check.grid", str(exc)) from None
        oracle = "quadrature"
    else:
        raise ConfigError("target", "unsupported target for chosen oracle (need Gaussian or 1-d)")
    estimators = raw.get("estimators") or [cfg["estimator"]]
    budgets = _require(raw, "budgets", "score_check")
    rows = []
    for i, est_spec in enumerate(estimators):
        base = _resolve_estimator(est_spec)
        for j, budget in enumerate(budgets):
            est_cfg = EstimatorConfig(**{**base, "sample_count": _number(
                budget, f"score_check.budgets[{j}]", positive=True, integer=True)})
            streams = _rng.ParticleStreams(cfg["seed"], 1, (_rng.STAGE_MISC, 1000 + i, j))
            est = estimate_score(PosteriorContext(x[None, :], tau, target), est_cfg, streams)
            score = 0.5 * est.drift[0]
            rows.append({
                "estimator": base["kind"], "budget": est_cfg.sample_count,
                "estimate": score.tolist(), "oracle": exact.tolist(), "oracle_kind": oracle,
                "error": float(np.abs(score - exact).max()),
                "f_evals": est.f_evals, "grad_evals": est.grad_evals,
            })
    return rows


def format_score_table(rows: list[dict]) -> str:
    lines = ["estimator,budget,error,f_evals,grad_evals,estimate,oracle"]
    for r in rows:
        est = " ".join(repr(v) for v in r["estimate"])
        ora = " ".join(repr(v) for v in r["oracle"])
        lines.append(f"{r['estimator']},{r['budget']},{r['error']!r},{r['f_evals']},{r['grad_evals']},{est},{ora}")
    return "\n".join(lines) + "\n"
