"""Seeded Monte Carlo studies over Erdos-Renyi comparison designs.

Three studies regenerate the quantities behind the reference figures at desk
scale: the scaled cross-curvature values, the leading-term/remainder split
of the fitted-score error, and traced alternating-minimization runs with
their certificates.  Replications draw from independent substreams keyed by
(master seed, item count, replication index), so execution order never
changes a record.
"""

from __future__ import annotations

import csv
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from typing import Optional, Sequence

import numpy as np

from . import tolerances as tol
from .ao import AoCertificate, AoTrace, ao_run, certify_convergence, estimate_rate, fixed_point_radii
from .btl import (
    PenaltySpec,
    btl_condition_constants,
    btl_objective,
    fit_penalized_mle,
    mle_exists,
    noise_gradient,
    sample_er_graph,
    sample_outcomes,
)
from .errors import HessianNotPD, InnerSolveFailed
from .expansions import ExpansionDiagnostics, check_linear_sup_expansion
from .numkit import BlockHessian, BlockSplit, MetricTensor, contraction_matrix, psd_power, spd_solve
from .objective import QuadraticObjective, newton_minimize

__all__ = [
    "ExperimentConfig",
    "SCHEMAS",
    "edge_probability",
    "replication_rng",
    "run_rho_study",
    "run_expansion_study",
    "run_ao_study",
    "rho_replication",
    "expansion_replication",
    "ao_replication",
    "ExpansionRepResult",
    "AoRepResult",
    "emit",
    "parse_records",
    "summarize_by_n",
]

ARTIFACT_VERSION = "0.1.0"

SCHEMAS = {
    "rho": ["study", "n", "rep", "seed", "rho_dual", "rho_dual_l2", "connected",
            "diag_dom_margin"],
    "expansion": ["study", "n", "rep", "seed", "lead_fish", "lead_diag", "rem_fish",
                  "rem_diag", "converged"],
    "ao": ["study", "n", "rep", "seed", "ppT", "rate", "cert_ok", "steps"],
}


@dataclass(frozen=True)
class ExperimentConfig:
    """Knobs of the seeded studies; every output row is reproducible from these."""

    n_list: tuple = (100,)
    p_rule: object = "logcube"  # "logcube" -> min(1, log(n)^3 / n); or a fixed float
    L: int = 1
    score_range: tuple = (0.0, 2.0)
    gsq: float = 1.0
    penalty_kind: str = "mean_shift"
    reps: int = 20
    seed: int = 1
    which_rho: str = "both"  # informational; the fixed schema records both values
    # alternating-run knobs
    gap: float = 0.02
    steps: int = 8
    surrogate: bool = False
    split_rule: str = "half"
    start_direction: str = "top"

    def __post_init__(self):
        object.__setattr__(self, "n_list", tuple(int(n) for n in self.n_list))
        object.__setattr__(self, "score_range", tuple(float(v) for v in self.score_range))
        if self.reps < 1:
            raise ValueError("need at least one replication")
        lo, hi = self.score_range
        if not hi >= lo:
            raise ValueError("score range upper end below lower end")
        for n in self.n_list:
            p = edge_probability(self, n)
            if not 0.0 < p <= 1.0:
                raise ValueError(f"edge probability {p} out of (0, 1] for n={n}")

    @property
    def penalty(self) -> PenaltySpec:
        return PenaltySpec(self.penalty_kind, self.gsq)


def edge_probability(cfg: ExperimentConfig, n: int) -> float:
    if cfg.p_rule == "logcube":
        return min(1.0, math.log(n) ** 3 / n)
    return float(cfg.p_rule)


def replication_rng(seed: int, n: int, rep: int) -> np.random.Generator:
    """Independent substream keyed by (master seed, item count, replication)."""
    return np.random.default_rng(np.random.SeedSequence((seed, n, rep)))


def _sample_instance(cfg: ExperimentConfig, n: int, rep: int):
    """Graph, centered truth, and outcomes, drawn in a fixed order."""
    rng = replication_rng(cfg.seed, n, rep)
    graph = sample_er_graph(n, edge_probability(cfg, n), cfg.L, rng)
    raw = rng.uniform(cfg.score_range[0], cfg.score_range[1], n)
    truth = raw - raw.mean()  # zero-sum identification; gaps are unchanged
    obs = sample_outcomes(graph, truth, rng)
    return graph, truth, obs


# ---------------------------------------------------------------------------
# scaled cross-curvature study


def rho_replication(cfg: ExperimentConfig, n: int, rep: int) -> dict:
    """One draw of the scaled cross-curvature values on a fresh design.

    ``rho_dual`` is the exact per-row dual value.  ``rho_dual_l2`` is the
    cross-row sum-of-squares display in its squared form, the quantity that
    tracks 1/(n p) on these designs (the unsquared root is available from
    :func:`perturbopt.expansions.rho_dual`).
    """
    from .expansions import rho_dual

    graph, truth, _ = _sample_instance(cfg, n, rep)
    fisher = btl_objective(graph, cfg.penalty, mode="expected", truth=truth).hessian(truth)
    d = np.sqrt(np.diag(fisher))
    exact, l2 = rho_dual(fisher, d)
    off = np.abs(fisher).sum(axis=1) - np.abs(np.diag(fisher))
    margin = float((np.diag(fisher) - off).min())
    return {
        "study": "rho",
        "n": n,
        "rep": rep,
        "seed": cfg.seed,
        "rho_dual": exact,
        "rho_dual_l2": l2 * l2,
        "connected": graph.connected,
        "diag_dom_margin": margin,
    }


def run_rho_study(cfg: ExperimentConfig, threads: int = 1) -> list[dict]:
    tasks = [(cfg, n, rep) for n in cfg.n_list for rep in range(cfg.reps)]
    records = _pmap(rho_replication, tasks, threads)
    records.sort(key=lambda r: (r["n"], r["rep"]))
    return records


# ---------------------------------------------------------------------------
# leading-term / remainder study


@dataclass
class ExpansionRepResult:
    record: dict
    diagnostics: Optional[ExpansionDiagnostics] = None
    reports: tuple = ()


def expansion_replication(cfg: ExperimentConfig, n: int, rep: int,
                          with_bounds: bool = False) -> ExpansionRepResult:
    graph, truth, obs = _sample_instance(cfg, n, rep)
    record = {
        "study": "expansion",
        "n": n,
        "rep": rep,
        "seed": cfg.seed,
        "lead_fish": float("nan"),
        "lead_diag": float("nan"),
        "rem_fish": float("nan"),
        "rem_diag": float("nan"),
        "converged": False,
    }
    if not graph.connected:
        return ExpansionRepResult(record=record)
    try:
        fit = fit_penalized_mle(obs, cfg.penalty, solver="newton", tol_grad=tol.SOLVER_GRAD_TOL)
    except HessianNotPD:
        return ExpansionRepResult(record=record)
    expected = btl_objective(graph, cfg.penalty, mode="expected", truth=truth)
    # centered scores are the exact minimizer of the expected objective;
    # the polish solve verifies that before any residual is measured
    ups_star = newton_minimize(expected, truth, tol_grad=tol.JOINT_SOLVE_TOL).argmin
    fisher = expected.hessian(ups_star)
    noise = noise_gradient(obs, truth)
    fish_lead = spd_solve(fisher, noise)
    diag_lead = noise / np.diag(fisher)
    err = fit.argmin - ups_star
    record.update(
        lead_fish=float(np.abs(fish_lead).max()),
        lead_diag=float(np.abs(diag_lead).max()),
        rem_fish=float(np.abs(err + fish_lead).max()),
        rem_diag=float(np.abs(err + diag_lead).max()),
        converged=bool(fit.converged),
    )
    if not with_bounds or not fit.converged:
        return ExpansionRepResult(record=record)

    d = np.sqrt(np.diag(fisher))
    a_norm = float(np.abs(noise / d).max())
    from .expansions import rho_dual as _rho_dual

    rho_exact, _ = _rho_dual(fisher, d)
    r_inf = math.sqrt(2.0) * a_norm / (1.0 - rho_exact) if rho_exact < 1.0 else float("inf")
    radius = r_inf if np.isfinite(r_inf) else 0.0
    constants = btl_condition_constants(graph, cfg.penalty, ups_star, radius=radius,
                                        norm="linf")
    diagnostics, reports = check_linear_sup_expansion(
        expected, noise, constants, upsilon_star=ups_star
    )
    return ExpansionRepResult(record=record, diagnostics=diagnostics, reports=tuple(reports))


def _expansion_record(cfg: ExperimentConfig, n: int, rep: int) -> dict:
    return expansion_replication(cfg, n, rep).record


def run_expansion_study(cfg: ExperimentConfig, threads: int = 1) -> list[dict]:
    tasks = [(cfg, n, rep) for n in cfg.n_list for rep in range(cfg.reps)]
    records = _pmap(_expansion_record, tasks, threads)
    records.sort(key=lambda r: (r["n"], r["rep"]))
    return records


# ---------------------------------------------------------------------------
# alternating-minimization study


@dataclass
class AoRepResult:
    record: dict
    trace: Optional[AoTrace] = None
    certificate: Optional[AoCertificate] = None


def ao_replication(cfg: ExperimentConfig, n: int, rep: int) -> AoRepResult:
    graph, truth, obs = _sample_instance(cfg, n, rep)
    record = {
        "study": "ao",
        "n": n,
        "rep": rep,
        "seed": cfg.seed,
        "ppT": float("nan"),
        "rate": float("nan"),
        "cert_ok": False,
        "steps": cfg.steps,
    }
    if not graph.connected or not mle_exists(obs):
        return AoRepResult(record=record)
    f = btl_objective(obs, cfg.penalty, mode="empirical")
    joint = newton_minimize(f, np.zeros(n), tol_grad=tol.JOINT_SOLVE_TOL)
    if not joint.converged:
        return AoRepResult(record=record)
    ups_star = joint.argmin
    if cfg.surrogate:
        f = QuadraticObjective(ups_star, f.hessian(ups_star))

    if cfg.split_rule != "half":
        raise ValueError(f"unknown split rule {cfg.split_rule!r}")
    split = BlockSplit.half(n)
    bh = BlockHessian.from_full(f.hessian(ups_star), split)
    contraction = contraction_matrix(bh)
    d_metric = MetricTensor.full(psd_power(bh.f_tt, 0.5))
    h_metric = MetricTensor.full(psd_power(bh.f_nn, 0.5))

    if cfg.start_direction == "top":
        _, vecs = np.linalg.eigh(contraction.p @ contraction.p.T)
        direction = psd_power(bh.f_tt, -0.5) @ vecs[:, -1]
    else:
        direction = replication_rng(cfg.seed, n, rep + 10_000).standard_normal(split.p)
    direction = direction / np.abs(direction).max() * cfg.gap
    theta_star = ups_star[split.target_idx]
    theta0 = theta_star + direction
    d_gap = d_metric.norm(direction)

    rho_star_value = contraction.ppt_norm**0.5  # full square-root metrics make these equal
    provisional = btl_condition_constants(
        graph, cfg.penalty, ups_star, norm="l2", split=split,
        metric=d_metric, h_metric=h_metric, radii=(0.0, 0.0),
    ).upper
    radii = fixed_point_radii(provisional, rho_star_value, d_gap)
    if radii is None:
        radii = (float("inf"), float("inf"))
    constants = btl_condition_constants(
        graph, cfg.penalty, ups_star, norm="l2", split=split,
        metric=d_metric, h_metric=h_metric, radii=radii,
    ).upper
    refined = fixed_point_radii(constants, rho_star_value, d_gap)
    if refined is not None:
        constants = btl_condition_constants(
            graph, cfg.penalty, ups_star, norm="l2", split=split,
            metric=d_metric, h_metric=h_metric, radii=refined,
        ).upper
    certificate = certify_convergence(bh, constants, d_gap, d_metric, h_metric)

    try:
        trace = ao_run(f, split, theta0, cfg.steps, inner_tol=tol.JOINT_SOLVE_TOL,
                       upsilon_star=ups_star)
    except InnerSolveFailed:
        return AoRepResult(record=record, certificate=certificate)
    rate = estimate_rate(trace.theta_err_norms, burn_in=tol.AO_BURN_IN)
    record.update(ppT=contraction.ppt_norm, rate=rate, cert_ok=certificate.holds)
    return AoRepResult(record=record, trace=trace, certificate=certificate)


def _ao_record(cfg: ExperimentConfig, n: int, rep: int) -> dict:
    return ao_replication(cfg, n, rep).record


def run_ao_study(cfg: ExperimentConfig, threads: int = 1) -> list[dict]:
    tasks = [(cfg, n, rep) for n in cfg.n_list for rep in range(cfg.reps)]
    records = _pmap(_ao_record, tasks, threads)
    records.sort(key=lambda r: (r["n"], r["rep"]))
    return records


# ---------------------------------------------------------------------------
# emission and summaries


def _pmap(fn, tasks, threads: int) -> list:
    if threads <= 1 or len(tasks) <= 1:
        return [fn(*t) for t in tasks]
    with ProcessPoolExecutor(max_workers=threads) as pool:
        futures = [pool.submit(fn, *t) for t in tasks]
        return [f.result() for f in futures]


def _format_cell(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".17g")
    return str(value)


def emit(records: Sequence[dict], fmt: str, path, config: Optional[ExperimentConfig] = None) -> None:
    """Write records as CSV (fixed column order) or JSON, plus a metadata sidecar."""
    records = list(records)
    study = records[0]["study"] if records else None
    columns = SCHEMAS.get(study, list(records[0].keys()) if records else ["study"])
    if fmt == "csv":
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(columns)
            for rec in records:
                writer.writerow([_format_cell(rec[c]) for c in columns])
    elif fmt == "json":
        payload = [
            {c: (None if _is_nan(rec[c]) else _plain(rec[c])) for c in columns}
            for rec in records
        ]
        with open(path, "w") as fh:
            json.dump(payload, fh, indent=1)
            fh.write("\n")
    else:
        raise ValueError(f"unknown format {fmt!r}")
    meta = {
        "artifact_version": ARTIFACT_VERSION,
        "study": study,
        "records": len(records),
        "created_unix": time.time(),
    }
    if config is not None:
        meta["config"] = asdict(config)
        meta["seed"] = config.seed
    with open(f"{path}.meta.json", "w") as fh:
        json.dump(meta, fh, indent=1, default=str)
        fh.write("\n")


def _is_nan(v) -> bool:
    return isinstance(v, (float, np.floating)) and math.isnan(v)


def _plain(v):
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        return float(v)
    return v


_BOOL_COLUMNS = {"connected", "converged", "cert_ok"}
_INT_COLUMNS = {"n", "rep", "seed", "steps"}


def parse_records(path) -> list[dict]:
    """Read a study CSV back with schema-typed cells."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        out = []
        for row in reader:
            rec = {}
            for key, raw in row.items():
                if key == "study":
                    rec[key] = raw
                elif key in _BOOL_COLUMNS:
                    rec[key] = raw == "true"
                elif key in _INT_COLUMNS:
                    rec[key] = int(raw)
                else:
                    rec[key] = float(raw)
            out.append(rec)
    return out


def summarize_by_n(records: Sequence[dict], value_key: str,
                   keep=lambda r: True) -> dict[int, dict]:
    """Count/mean/sample-std of one column per item count, skipping filtered rows.

    Rows failing ``keep`` (e.g. disconnected or non-converged replications)
    are excluded from the moments but counted separately.
    """
    grouped: dict[int, list[float]] = {}
    dropped: dict[int, int] = {}
    for rec in records:
        n = rec["n"]
        if keep(rec) and not _is_nan(rec[value_key]):
            grouped.setdefault(n, []).append(float(rec[value_key]))
        else:
            dropped[n] = dropped.get(n, 0) + 1
    out = {}
    for n, vals in sorted(grouped.items()):
        arr = np.asarray(vals)
        out[n] = {
            "count": int(arr.size),
            "dropped": dropped.get(n, 0),
            "mean": float(arr.mean()),
            "std": float(arr.std(ddof=1)) if arr.size > 1 else 0.0,
        }
    return out
