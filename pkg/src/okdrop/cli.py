"""Batch experiment driver.

    okdrop <command> [--kappa K] [--delta-bar D] [--ell L] [--eps e1,e2,...] [--grid N]
                     [--seed S] [--gamma G] [--count N] [--config FILE] [--out PATH]

Commands: green-selftest, recover-sweep, relax, diffuse-compare, limit-check.
A config file holds key=value lines (comma lists allowed); flags override it.
The report (CSV) goes to --out, or stdout when --out is absent; with --out a JSON
sidecar next to it echoes the run inputs and carries the timestamp.
Exit status: 0 success, 1 usage or I/O error, 2 an invariant check failed.
"""
from __future__ import annotations

import argparse
import datetime as _dt
import math
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path

from . import io
from .errors import OkdropError, ParameterError
from .torus import TorusParams, fft_workers

COMMANDS = ("green-selftest", "recover-sweep", "relax", "diffuse-compare", "limit-check")

DEFAULT_EPS = {
    "green-selftest": (1e-6,),
    "recover-sweep": (1e-3, 1e-6, 1e-9, 1e-12),
    "relax": (1e-8,),
    "diffuse-compare": (5e-3, 2.5e-3),
    "limit-check": (1e-6,),
}
DEFAULT_GRID = {"green-selftest": 512, "recover-sweep": 128, "relax": 128, "diffuse-compare": 1024, "limit-check": 64}


class UsageError(Exception):
    pass


class InvariantFailure(Exception):
    pass


@dataclass
class ExperimentSpec:
    command: str
    params: TorusParams
    epsilon_list: tuple[float, ...]
    grid_n: int
    seed: int = 0
    gamma: float = 1.0 / 6.0
    out: str | None = None
    count: int = 20
    delta_bar_given: bool = True

    def __post_init__(self):
        if self.command not in COMMANDS:
            raise UsageError(f"unknown command {self.command!r}")
        eps = self.epsilon_list
        if not eps:
            raise UsageError("epsilon list is empty")
        if any(not (0 < e < math.exp(-1)) for e in eps):
            raise UsageError("every epsilon must lie in (0, 1/e)")
        if any(b >= a for a, b in zip(eps, eps[1:])):
            raise UsageError("epsilon list must be strictly decreasing")
        if self.grid_n < 16:
            raise UsageError("grid must be at least 16")
        if not 0 < self.gamma < 1:
            raise UsageError("gamma must lie in (0, 1)")
        if self.count < 1:
            raise UsageError("count must be positive")

    def echo(self) -> dict:
        d = asdict(self)
        d["params"] = asdict(self.params)
        d["epsilon_list"] = list(self.epsilon_list)
        return d


@dataclass
class Report:
    columns: list[str]
    rows: list = field(default_factory=list)
    comments: list[str] = field(default_factory=list)
    extra: dict = field(default_factory=dict)


# ---- argument handling -----------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _parser() -> argparse.ArgumentParser:
    p = _Parser(prog="okdrop", description="Droplet-regime experiments on a flat torus.")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--kappa", type=float)
    p.add_argument("--delta-bar", dest="delta_bar", type=float)
    p.add_argument("--ell", type=float)
    p.add_argument("--eps", type=str, help="comma-separated, strictly decreasing")
    p.add_argument("--grid", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--gamma", type=float)
    p.add_argument("--count", type=int, help="droplet count for relax")
    p.add_argument("--config", type=str, help="key=value file; flags override it")
    p.add_argument("--out", type=str)
    return p


def read_config_file(path) -> dict[str, str]:
    out = {}
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise UsageError(f"cannot read config {path}: {e}") from None
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{n}: expected key=value")
        k, v = line.split("=", 1)
        out[k.strip().replace("-", "_")] = v.strip()
    return out


def _eps_list(s: str) -> tuple[float, ...]:
    try:
        return tuple(float(x) for x in s.split(",") if x.strip())
    except ValueError:
        raise UsageError(f"bad epsilon list {s!r}") from None


def build_spec(argv) -> ExperimentSpec:
    a = _parser().parse_args(argv)
    conf = read_config_file(a.config) if a.config else {}
    known = {"kappa", "delta_bar", "ell", "eps", "grid", "seed", "gamma", "count", "out"}
    unknown = set(conf) - known
    if unknown:
        raise UsageError(f"unknown config keys: {', '.join(sorted(unknown))}")

    def pick(name, conv, default):
        v = getattr(a, name)
        if v is not None:
            return v
        if name in conf:
            try:
                return conv(conf[name])
            except ValueError:
                raise UsageError(f"bad value for {name}: {conf[name]!r}") from None
        return default

    cmd = a.command
    kappa = pick("kappa", float, 2.0 / 3.0)
    ell = pick("ell", float, 1.0)
    delta_given = a.delta_bar is not None or "delta_bar" in conf
    delta = pick("delta_bar", float, 1.0)
    eps = _eps_list(a.eps) if a.eps is not None else (_eps_list(conf["eps"]) if "eps" in conf else DEFAULT_EPS[cmd])
    try:
        params = TorusParams(ell, kappa, delta)
    except ParameterError as e:
        raise UsageError(str(e)) from None
    return ExperimentSpec(
        command=cmd,
        params=params,
        epsilon_list=eps,
        grid_n=pick("grid", int, DEFAULT_GRID[cmd]),
        seed=pick("seed", int, 0),
        gamma=pick("gamma", float, 1.0 / 6.0),
        out=pick("out", str, None),
        count=pick("count", int, 20),
        delta_bar_given=delta_given,
    )


# ---- experiments -------------------------------------------------------------------------

def _check(report: Report, ok: bool, what: str) -> None:
    if not ok:
        raise InvariantFailure(what)


def run_green_selftest(spec: ExperimentSpec, report: Report) -> None:
    from .green import build_green, green_selftest

    g = build_green(spec.params)
    a = green_selftest(g, spec.grid_n)
    b = green_selftest(g, 2 * spec.grid_n)
    checks = [
        ("residual_integral", a["residual_integral"], 1e-6),
        ("residual_HH", a["residual_HH"], 1e-4),
        ("sup_R_refinement", abs(a["sup_R_eighth"] - b["sup_R_eighth"]), 1e-6),
    ]
    report.extra.update(coarse=a, fine=b)
    failed = []
    for name, value, tol in checks:
        ok = bool(math.isfinite(value) and value < tol)
        report.rows.append([name, value, tol, int(ok)])
        if not ok:
            failed.append(name)
    _check(report, not failed, "identities failed: " + ", ".join(failed))


def run_recover_sweep(spec: ExperimentSpec, report: Report) -> None:
    from .droplets import DensityMeasure
    from .green import build_green
    from .limit import limit_energy, optimal_constant_density
    from .minimizer import defect_M
    from .recovery import build_recovery_with_plan, sweep_row

    p = spec.params
    g = build_green(p)
    mu = DensityMeasure.uniform(spec.grid_n, p.ell, optimal_constant_density(p)[0])
    target = limit_energy(mu, p) - p.background
    defects = []
    for eps in spec.epsilon_list:
        cfg, plan = build_recovery_with_plan(mu, eps, p, spec.seed)
        row, _ = sweep_row(cfg, plan, g, target)
        report.rows.append([getattr(row, c) for c in report.columns])
        if len(cfg) and spec.gamma < 1.0 / 3.0:
            m = defect_M(cfg, g, spec.gamma)
            defects.append({"epsilon": eps, "M": m})
            _check(report, m >= -1e-9, f"defect M = {m:.6g} < -1e-9 at eps = {eps:g}")
    gaps = [r[-1] for r in report.rows]
    decreasing = all(b < a for a, b in zip(gaps, gaps[1:]))
    report.comments.append("gap-trend: " + ("strictly decreasing" if decreasing else "not strictly decreasing"))
    report.extra.update(limit_target=target, defects=defects, gap_decreasing=decreasing)


def run_relax(spec: ExperimentSpec, report: Report) -> None:
    from .green import build_green
    from .limit import delta_bar_for_count
    from .minimizer import ensemble_stats, nearest_neighbor_cv, random_disk_start, relax_joint

    eps = spec.epsilon_list[0]
    p = spec.params
    if not spec.delta_bar_given:
        p = TorusParams(p.ell, p.kappa, delta_bar_for_count(spec.count, eps, p.ell, p.kappa))
    g = build_green(p)
    cfg = random_disk_start(p, eps, spec.count, spec.seed)
    trace: list = []
    out = relax_joint(cfg, g, trace=trace)
    for k, t in enumerate(trace, 1):
        report.rows.append([k, t.energy, t.max_gradient, t.min_pair_distance, t.area_mean, t.area_std])
    E = [t.energy for t in trace]
    st = ensemble_stats(out, spec.gamma)
    report.extra.update(
        delta_bar=p.delta_bar,
        stats=asdict(st),
        nearest_neighbor_cv=nearest_neighbor_cv(out) if len(out) > 1 else None,
        final_config=io.config_to_text(out),
    )
    _check(report, all(b <= a for a, b in zip(E, E[1:])), "relaxation energy increased")


def _grid_for(eps: float, eps0: float, n0: int) -> int:
    n = n0 * eps0 / eps
    return int(2 ** round(math.log2(n)))


def run_diffuse_compare(spec: ExperimentSpec, report: Report) -> None:
    from .diffuse import compare_energies
    from .droplets import disk_config, optimal_radius
    from .green import build_green
    from .limit import delta_bar_for_count

    p0 = spec.params
    eps0 = spec.epsilon_list[0]
    details = []
    for eps in spec.epsilon_list:
        p = p0 if spec.delta_bar_given else TorusParams(p0.ell, p0.kappa, delta_bar_for_count(1, eps, p0.ell, p0.kappa))
        n = _grid_for(eps, eps0, spec.grid_n)
        cfg = disk_config(p, eps, [[p.ell / 2, p.ell / 2]], [optimal_radius(eps)])
        rep = compare_energies(cfg, build_green(p), n)
        report.rows.append([eps, n, rep.sharp, rep.diffuse, rep.ratio])
        details.append(rep.as_dict() | {"delta_bar": p.delta_bar})
        _check(report, rep.sup_norm <= 1 + 1e-6, f"lifted field sup norm {rep.sup_norm:.6g} exceeds 1")
    ratios = [r[-1] for r in report.rows]
    toward = all(abs(b - 1) < abs(a - 1) for a, b in zip(ratios, ratios[1:]))
    report.comments.append("ratio-trend: " + ("toward 1" if toward else "not toward 1"))
    report.extra.update(details=details, ratio_toward_one=toward)


def run_limit_check(spec: ExperimentSpec, report: Report) -> None:
    from .limit import minimize_constant_density, optimal_constant_density

    p = spec.params
    mu_bar, dens, dc = optimal_constant_density(p)
    m_num = minimize_constant_density(p, grid_n=min(spec.grid_n, 64))
    branch = "empty (mu_bar = 0)" if mu_bar == 0 else "constant (mu_bar = (delta_bar - delta_c)/2)"
    err = abs(m_num - mu_bar) / mu_bar if mu_bar > 0 else abs(m_num)
    report.rows += [
        ["delta_c", dc],
        ["mu_bar", mu_bar],
        ["mu_bar_numerical", m_num],
        ["min_energy_density", dens],
        ["relative_error", err],
    ]
    report.comments.append(f"branch: {branch}")
    _check(report, err < 1e-8, f"numerical minimizer off by {err:.3g}")


RUNNERS = {
    "green-selftest": (run_green_selftest, ["check", "value", "threshold", "pass"]),
    "recover-sweep": (
        run_recover_sweep,
        ["epsilon", "log_eps", "count", "eta", "radius", "mass", "perimeter_term", "area_term",
         "self_interaction", "pair_interaction", "total_rescaled", "limit_target", "gap"],
    ),
    "relax": (run_relax, ["step", "energy", "max_gradient", "min_pair_distance", "area_mean", "area_std"]),
    "diffuse-compare": (run_diffuse_compare, ["epsilon", "grid", "sharp_energy", "diffuse_energy", "ratio"]),
    "limit-check": (run_limit_check, ["quantity", "value"]),
}


# ---- reporting ----------------------------------------------------------------------------

def emit_report(spec: ExperimentSpec, report: Report, status: str, stdout=None) -> None:
    """Write the CSV (or print it) and, with --out, the JSON sidecar."""
    text = io.csv_text(report.columns, report.rows, report.comments)
    if spec.out is None:
        (stdout or sys.stdout).write(text)
        return
    out = Path(spec.out)
    try:
        out.write_text(text)
        side = {
            "spec": spec.echo(),
            "status": status,
            "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(),
            "results": report.extra,
        }
        io.write_json(out.with_suffix(".json"), side)
    except OSError as e:
        raise UsageError(f"cannot write report: {e}") from None


def run_experiment(spec: ExperimentSpec, stdout=None) -> int:
    fn, columns = RUNNERS[spec.command]
    report = Report(list(columns))
    try:
        fn(spec, report)
    except (InvariantFailure, OkdropError) as e:
        if isinstance(e, ParameterError):
            raise UsageError(str(e)) from None
        report.comments.append(f"FAILED: {e}")
        emit_report(spec, report, "failed", stdout)
        return 2
    emit_report(spec, report, "ok", stdout)
    return 0


def main(argv=None) -> int:
    try:
        fft_workers()  # validates OKDROP_THREADS
        spec = build_spec(sys.argv[1:] if argv is None else argv)
        return run_experiment(spec)
    except (UsageError, ParameterError) as e:
        print(f"okdrop: error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
