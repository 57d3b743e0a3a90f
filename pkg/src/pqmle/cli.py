"""Experiment runner: simulate | estimate | montecarlo | parsimony | report.

All outputs are deterministic functions of (config, seed): CSVs carry the
config hash on their first line, JSON reports carry it in a field.  Exit
codes: 0 ok, 2 config error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from .asymptotics import ConditionViolationError, monte_carlo_check
from .config import ConfigError, ExperimentConfig, load_config
from .covariate import CovariatePath, collinearity_matrix, simulate
from .estimator import EnumerationCapError, estimate, theta_labels
from .parsimony import NonUniqueMinimizerError, RankError, select_parsimonious
from .pointprocess import EventPath, simulate_events

__all__ = ["main"]

_FMT = "{:.17g}"


def _writer(path: Path, cfg_hash: str):
    fh = path.open("w", newline="")
    fh.write(f"# config_hash={cfg_hash} schema=v1\n")
    return fh, csv.writer(fh)


def _fmt(x) -> str:
    return _FMT.format(float(x))


def _write_covariate_csv(path: Path, cov_path: CovariatePath, cfg_hash: str) -> None:
    fh, w = _writer(path, cfg_hash)
    with fh:
        a = cov_path.state_values.shape[1]
        w.writerow(["t_start", "t_end", *[f"x_{j + 1}" for j in range(a)]])
        ends = np.append(cov_path.start_times[1:], cov_path.horizon)
        vals = cov_path.segment_values()
        for s, e, v in zip(cov_path.start_times, ends, vals):
            w.writerow([_fmt(s), _fmt(e), *[_fmt(x) for x in v]])


def _read_covariate_csv(path: Path) -> CovariatePath:
    rows = []
    with Path(path).open() as fh:
        for line in fh:
            if line.startswith("#") or line.startswith("t_start"):
                continue
            rows.append([float(x) for x in line.strip().split(",")])
    if not rows:
        raise ValueError(f"no segments in {path}")
    arr = np.asarray(rows)
    starts = arr[:, 0]
    horizon = arr[-1, 1]
    values = arr[:, 2:]
    table, indices = np.unique(values, axis=0, return_inverse=True)
    return CovariatePath(
        horizon=float(horizon),
        start_times=starts,
        state_indices=indices.astype(np.int64),
        state_values=table,
    )


def _write_events_csv(path: Path, events: EventPath, cfg_hash: str) -> None:
    fh, w = _writer(path, cfg_hash)
    with fh:
        fh.write(f"# horizon={_fmt(events.horizon)}\n")
        w.writerow(["time"])
        for t in events.times:
            w.writerow([_fmt(t)])


def _read_events_csv(path: Path) -> EventPath:
    horizon = None
    times = []
    with Path(path).open() as fh:
        for line in fh:
            if line.startswith("# horizon="):
                horizon = float(line.split("=", 1)[1])
            elif line.startswith("#") or line.startswith("time"):
                continue
            elif line.strip():
                times.append(float(line.strip()))
    if horizon is None:
        raise ValueError(f"{path} lacks the horizon header")
    return EventPath(horizon=horizon, times=np.asarray(times))


def _out_dir(cfg: ExperimentConfig, args) -> Path:
    out = Path(args.out if args.out else cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _cmd_simulate(cfg: ExperimentConfig, args) -> int:
    out = _out_dir(cfg, args)
    seed = args.seed if args.seed is not None else cfg.seed_base
    rng = np.random.default_rng(seed)
    path = simulate(cfg.covariates, cfg.t_ladder[0], rng)
    events = simulate_events(cfg.truth, path, rng)
    _write_covariate_csv(out / "covariate.csv", path, cfg.config_hash)
    _write_events_csv(out / "events.csv", events, cfg.config_hash)
    print(f"wrote {out / 'covariate.csv'} ({path.n_segments} segments)")
    print(f"wrote {out / 'events.csv'} ({events.count} events)")
    return 0


def _cmd_estimate(cfg: ExperimentConfig, args) -> int:
    out = _out_dir(cfg, args)
    cov_file = Path(args.covariate_csv or out / "covariate.csv")
    ev_file = Path(args.events_csv or out / "events.csv")
    for f in (cov_file, ev_file):
        if not f.exists():
            print(f"error: data file not found: {f}", file=sys.stderr)
            return 2
    path = _read_covariate_csv(cov_file)
    events = _read_events_csv(ev_file)
    penalty = cfg.penalty
    if args.unpenalized:
        from .penalty import PenaltyEntry, PenaltySpec

        penalty = PenaltySpec(
            entries=tuple(
                PenaltyEntry(e.index, 0.0, e.q) for e in penalty.entries
            ),
            rate=penalty.rate,
        )
    result = estimate(path, events, cfg.truth, penalty, cfg.estimator)
    payload = {"schema": "v1", "config_hash": cfg.config_hash, **result.to_dict()}
    target = out / "estimate.json"
    target.write_text(json.dumps(payload, indent=2))
    print(f"wrote {target}")
    print(
        "theta:",
        {k: v for k, v in zip(result.labels, np.round(result.theta, 6).tolist())},
    )
    per_pattern = out / "per_pattern.csv"
    fh, w = _writer(per_pattern, cfg.config_hash)
    with fh:
        w.writerow(["pattern", "objective"])
        for pat, val in sorted(result.per_pattern.items()):
            w.writerow(["|".join(map(str, pat)) or "-", _fmt(val)])
    print(f"wrote {per_pattern}")
    return 0


def _cmd_montecarlo(cfg: ExperimentConfig, args) -> int:
    out = _out_dir(cfg, args)
    reps = args.reps if args.reps is not None else cfg.reps
    seed = args.seed if args.seed is not None else cfg.seed_base
    scenario = cfg.scenario()
    report = monte_carlo_check(
        scenario, cfg.t_ladder, reps, seed_base=seed, jobs=args.jobs
    )
    payload = {
        "config_hash": cfg.config_hash,
        "limit_law": scenario.limit.to_dict(),
        **report.to_dict(),
    }
    (out / "report.json").write_text(json.dumps(payload, indent=2))
    _write_summary_csv(out / "summary.csv", payload, cfg.config_hash)
    fh, w = _writer(out / "replications.csv", cfg.config_hash)
    with fh:
        labels = list(theta_labels(cfg.truth))
        w.writerow(["T", "rep", "seed", "selected", "ok", "objective", *labels])
        for r in report.records:
            w.writerow(
                [
                    _fmt(r.T),
                    r.rep,
                    r.seed,
                    int(r.selected),
                    int(r.ok),
                    _fmt(r.objective) if r.ok else "",
                    *[_fmt(x) for x in r.theta],
                ]
            )
    for name in ("report.json", "summary.csv", "replications.csv"):
        print(f"wrote {out / name}")
    for s in report.summaries:
        print(
            f"T={s.T:g}: selection={s.sel_freq_joint:.3f} "
            f"[{s.sel_ci_lo:.3f}, {s.sel_ci_hi:.3f}] "
            f"cov_rel={s.cov_rel_frobenius:.3f} failed={s.n_failed}"
        )
    return 0


def _write_summary_csv(path: Path, payload: dict, cfg_hash: str) -> None:
    fh, w = _writer(path, cfg_hash)
    with fh:
        w.writerow(["T", "statistic", "value", "lo", "hi"])
        for s in payload["summaries"]:
            rows = [
                ("sel_freq_zero", s["sel_freq_zero"], s["sel_ci"][0], s["sel_ci"][1]),
                ("sel_freq_nonzero", s["sel_freq_nonzero"], "", ""),
                ("sel_freq_joint", s["sel_freq_joint"], "", ""),
                ("n_failed", s["n_failed"], "", ""),
                ("cov_rel_frobenius", s["cov_rel_frobenius"], "", ""),
                ("theta_mean_abs_err", s["theta_mean_abs_err"], "", ""),
            ]
            rows += [(f"u_mean_{i}", v, "", "") for i, v in enumerate(s["u_mean"])]
            rows += [
                (f"mean_error_{i}", v, -3 * se, 3 * se)
                for i, (v, se) in enumerate(zip(s["mean_error"], s["mean_se"]))
            ]
            rows += [(f"ks_pvalue_{i}", v, "", "") for i, v in enumerate(s["ks_pvalues"])]
            rows += [
                (f"shrink_median_{i}", v, "", hi)
                for i, (v, hi) in enumerate(zip(s["shrink_median"], s["shrink_q90"]))
            ]
            for stat, value, lo, hi in rows:
                w.writerow([f"{s['T']:g}", stat, value, lo, hi])


def _cmd_parsimony(cfg: ExperimentConfig, args) -> int:
    if cfg.family != "linear":
        print("error: parsimony analysis applies to the linear family", file=sys.stderr)
        return 2
    out = _out_dir(cfg, args)
    cmap = collinearity_matrix(cfg.covariates)
    cert = select_parsimonious(
        cfg.truth.alpha, cmap.matrix, cfg.penalty, cfg.truth.alpha_max
    )
    fh, w = _writer(out / "candidates.csv", cfg.config_hash)
    with fh:
        a = cfg.truth.n_channels
        w.writerow(["support", *[f"alpha_{j + 1}" for j in range(a)], "pe_value", "feasible"])
        for E, vec, pe, feasible in cert.candidates:
            w.writerow(["|".join(map(str, E)), *[_fmt(v) for v in vec], _fmt(pe), int(feasible)])
    payload = {
        "schema": "v1",
        "config_hash": cfg.config_hash,
        "alpha_parsimonious": cert.alpha.tolist(),
        "support": list(cert.support),
        "margin": cert.margin,
    }
    (out / "parsimonious.json").write_text(json.dumps(payload, indent=2))
    print(f"wrote {out / 'candidates.csv'}")
    print(f"wrote {out / 'parsimonious.json'}")
    print("alpha**:", np.round(cert.alpha, 10).tolist(), "margin:", cert.margin)
    return 0


def _cmd_report(cfg: ExperimentConfig, args) -> int:
    out = _out_dir(cfg, args)
    source = Path(args.report or out / "report.json")
    if not source.exists():
        print(f"error: report file not found: {source}", file=sys.stderr)
        return 2
    payload = json.loads(source.read_text())
    _write_summary_csv(out / "summary.csv", payload, payload.get("config_hash", ""))
    print(f"wrote {out / 'summary.csv'}")
    for s in payload["summaries"]:
        print(
            f"T={s['T']:g}: selection={s['sel_freq_joint']:.3f} "
            f"cov_rel={s['cov_rel_frobenius']:.3f}"
        )
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pqmle",
        description="Penalized quasi-likelihood experiments for counting-process models",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in (
        ("simulate", _cmd_simulate),
        ("estimate", _cmd_estimate),
        ("montecarlo", _cmd_montecarlo),
        ("parsimony", _cmd_parsimony),
        ("report", _cmd_report),
    ):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="experiment config (.json or INI)")
        p.add_argument("--out", default=None, help="output directory (default: config out_dir)")
        p.add_argument("--seed", type=int, default=None, help="seed base override")
        p.add_argument("--jobs", type=int, default=1, help="parallel workers over replications")
        p.add_argument("--reps", type=int, default=None, help="replication count override")
        p.set_defaults(fn=fn)
        if name == "estimate":
            p.add_argument("--covariate-csv", default=None)
            p.add_argument("--events-csv", default=None)
            p.add_argument(
                "--unpenalized", action="store_true", help="fit with all kappa = 0"
            )
        if name == "report":
            p.add_argument("--report", default=None, help="existing report.json to render")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    try:
        return args.fn(cfg, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (
        ConditionViolationError,
        NonUniqueMinimizerError,
        RankError,
        EnumerationCapError,
        np.linalg.LinAlgError,
    ) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
