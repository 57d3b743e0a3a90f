"""Experiment configuration: loading, validation, scenario assembly.

A config file is either INI-style (sections of key = value, values written as
JSON fragments) or a JSON object with the same section layout.  Both encode
one experiment: covariate law, ground truth, penalty, horizon ladder,
replication count and seeds.
"""

from __future__ import annotations

import configparser
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .asymptotics import (
    RatePlan,
    Scenario,
    gamma_mu_superposition,
    limit_law_linear,
)
from .covariate import Collinearity, MarkovCovariateSpec, collinearity_matrix
from .estimator import EstimatorConfig
from .parsimony import select_parsimonious
from .penalty import PenaltyEntry, PenaltySpec
from .pointprocess import LinearModel, SuperpositionModel

__all__ = ["ConfigError", "ExperimentConfig", "load_config", "config_from_dict"]


class ConfigError(ValueError):
    """The experiment configuration is malformed or inconsistent."""


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated experiment description plus the derived scenario objects."""

    name: str
    family: str
    seed_base: int
    reps: int
    t_ladder: tuple[float, ...]
    out_dir: str
    covariates: MarkovCovariateSpec
    truth: SuperpositionModel | LinearModel
    penalty: PenaltySpec
    estimator: EstimatorConfig
    raw: dict = field(repr=False)

    @property
    def config_hash(self) -> str:
        canon = json.dumps(self.raw, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()[:12]

    def scenario(self) -> Scenario:
        return _build_scenario(self)


def _section(raw: dict, name: str, required: bool = True) -> dict:
    sec = raw.get(name)
    if sec is None:
        if required:
            raise ConfigError(f"missing [{name}] section")
        return {}
    if not isinstance(sec, dict):
        raise ConfigError(f"[{name}] must be a table of keys")
    return sec


def _get(sec: dict, key: str, kind, section: str, default=None):
    if key not in sec:
        if default is not None:
            return default
        raise ConfigError(f"missing key '{key}' in [{section}]")
    try:
        return kind(sec[key])
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad value for '{key}' in [{section}]: {exc}") from exc


def config_from_dict(raw: dict) -> ExperimentConfig:
    """Validate a config dictionary and construct all inner objects."""
    exp = _section(raw, "experiment")
    name = _get(exp, "name", str, "experiment")
    family = _get(exp, "family", str, "experiment")
    if family not in ("superposition", "linear"):
        raise ConfigError(f"family must be 'superposition' or 'linear', got {family!r}")
    seed_base = _get(exp, "seed_base", int, "experiment", default=0)
    reps = _get(exp, "reps", int, "experiment", default=100)
    ladder = exp.get("t_ladder", [500.0, 2000.0, 8000.0])
    try:
        t_ladder = tuple(float(t) for t in ladder)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad t_ladder: {exc}") from exc
    if any(t <= 0 for t in t_ladder) or len(t_ladder) == 0:
        raise ConfigError("t_ladder must list positive horizons")
    if reps <= 0:
        raise ConfigError("reps must be positive")
    out_dir = _get(exp, "out_dir", str, "experiment", default="out")

    cov_sec = _section(raw, "covariate")
    try:
        col = None
        if "collinearity" in cov_sec and cov_sec["collinearity"]:
            csec = cov_sec["collinearity"]
            col = Collinearity(
                basis=tuple(int(j) for j in csec["basis"]),
                coefficients=np.asarray(csec["coefficients"], dtype=float),
            )
        covariates = MarkovCovariateSpec(
            states=np.asarray(cov_sec["states"], dtype=float),
            generator=np.asarray(cov_sec["generator"], dtype=float),
            collinearity=col,
        )
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"bad [covariate] section: {exc}") from exc

    model_sec = _section(raw, "model")
    truth_sec = _section(raw, "truth")
    pen_sec = _section(raw, "penalty")
    a = covariates.n_channels
    q = _get(pen_sec, "q", float, "penalty")
    r = _get(pen_sec, "r", float, "penalty")

    try:
        if family == "superposition":
            truth = SuperpositionModel(
                g=_get(truth_sec, "g", float, "truth"),
                alpha=np.asarray(truth_sec["alpha"], dtype=float),
                beta=np.asarray(truth_sec["beta"], dtype=float),
                g_max=_get(model_sec, "g_max", float, "model"),
                alpha_max=_get(model_sec, "alpha_max", float, "model"),
                beta_neg=_get(model_sec, "beta_neg", float, "model"),
                beta_pos=_get(model_sec, "beta_pos", float, "model"),
            )
            kappa_g = _get(pen_sec, "kappa_g", float, "penalty")
            kappa_alpha = _get(pen_sec, "kappa_alpha", float, "penalty")
            if not kappa_g < kappa_alpha:
                raise ConfigError(
                    f"superposition tuning requires kappa_g < kappa_alpha, "
                    f"got {kappa_g} >= {kappa_alpha}"
                )
            entries = (PenaltyEntry(0, kappa_g, q),) + tuple(
                PenaltyEntry(1 + j, kappa_alpha, q) for j in range(a)
            )
            penalty = PenaltySpec(entries=entries, rate=r)
        else:
            truth = LinearModel(
                alpha=np.asarray(truth_sec["alpha"], dtype=float),
                alpha_max=_get(model_sec, "alpha_max", float, "model"),
            )
            kappas = pen_sec.get("kappas")
            if kappas is None:
                kappas = [_get(pen_sec, "kappa", float, "penalty")] * a
            if len(kappas) != a:
                raise ConfigError(f"kappas must list {a} weights")
            penalty = PenaltySpec.uniform(range(a), [float(k) for k in kappas], q, r)
        if truth.n_channels != a:
            raise ConfigError(
                f"truth has {truth.n_channels} channels but covariates carry {a}"
            )
    except ConfigError:
        raise
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"bad truth/penalty configuration: {exc}") from exc

    est_sec = _section(raw, "estimator", required=False)
    est_kwargs = {}
    for key in (
        "starts",
        "max_iter",
        "gtol",
        "ftol",
        "activity_floor",
        "enumeration_cap",
        "tie_tol",
    ):
        if key in est_sec:
            kind = int if key in ("starts", "max_iter", "enumeration_cap") else float
            est_kwargs[key] = kind(est_sec[key])
    estimator = EstimatorConfig(**est_kwargs)

    return ExperimentConfig(
        name=name,
        family=family,
        seed_base=seed_base,
        reps=reps,
        t_ladder=t_ladder,
        out_dir=out_dir,
        covariates=covariates,
        truth=truth,
        penalty=penalty,
        estimator=estimator,
        raw=raw,
    )


def _build_scenario(cfg: ExperimentConfig) -> Scenario:
    if cfg.family == "superposition":
        truth = cfg.truth
        a = truth.n_channels
        act = truth.active_set()
        for i in act:
            if truth.beta[i] == 0.0:
                raise ConfigError(f"active channel {i} needs a nonzero beta*")
        if not (0.0 < truth.g < truth.g_max):
            raise ConfigError("g* must be interior to (0, g_max)")
        theta_star = np.concatenate([[truth.g], truth.alpha, truth.beta])
        j0 = tuple(1 + j for j in range(a) if j not in act)
        j1 = tuple(1 + i for i in act)
        identifiable = (0,) + tuple(1 + a + i for i in act) + tuple(1 + i for i in act)
        limit = gamma_mu_superposition(truth, cfg.covariates, cfg.penalty)
        plan = RatePlan(p=1 + 2 * a, j0=j0, r=cfg.penalty.rate, q=cfg.penalty.entries[0].q)
    else:
        truth = cfg.truth
        cmap = collinearity_matrix(cfg.covariates)
        cert = select_parsimonious(
            truth.alpha, cmap.matrix, cfg.penalty, truth.alpha_max
        )
        theta_star = cert.alpha
        j1 = cert.support
        j0 = tuple(k for k in range(truth.n_channels) if k not in j1)
        identifiable = j1
        limit = limit_law_linear(truth.alpha, cert.alpha, cfg.covariates, cfg.penalty)
        plan = RatePlan(
            p=truth.n_channels, j0=j0, r=cfg.penalty.rate, q=cfg.penalty.entries[0].q
        )
    return Scenario(
        name=cfg.name,
        covariates=cfg.covariates,
        truth=truth,
        penalty=cfg.penalty,
        theta_star=theta_star,
        j0=j0,
        j1=j1,
        identifiable=identifiable,
        limit=limit,
        plan=plan,
        estimator=cfg.estimator,
    )


def _parse_ini(text: str) -> dict:
    parser = configparser.ConfigParser()
    parser.optionxform = str  # keep key case
    parser.read_string(text)
    raw: dict = {}
    for section in parser.sections():
        target = raw
        for part in section.split("."):
            target = target.setdefault(part, {})
        for key, value in parser.items(section):
            try:
                target[key] = json.loads(value)
            except json.JSONDecodeError:
                target[key] = value
    return raw


def load_config(path) -> ExperimentConfig:
    """Load and validate a config file (.json, or INI-style otherwise)."""
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"config file not found: {p}")
    text = p.read_text()
    try:
        if p.suffix == ".json":
            raw = json.loads(text)
        else:
            raw = _parse_ini(text)
    except (json.JSONDecodeError, configparser.Error) as exc:
        raise ConfigError(f"cannot parse {p}: {exc}") from exc
    return config_from_dict(raw)
