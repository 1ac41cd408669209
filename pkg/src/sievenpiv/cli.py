"""Command-line front end.

Every subcommand reads an INI config (or a manifest written by a previous
run), writes its outputs and a ``manifest.json`` into ``--out``, and exits
with 0 (ok), 2 (config or schema error), 3 (ill-posedness) or 4 (numeric
failure). Outputs are a pure function of the config and the seed.
"""

from __future__ import annotations

import argparse
import configparser
import hashlib
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .concentration import EnsembleSpec, empirical_tail, scaling_study
from .dgp import NoiseSpec, NpivDgp
from .errors import (
    ConfigurationError,
    ContractViolation,
    DomainError,
    IllPosednessError,
    SieveError,
)
from .estimators import Sample, fit_sieve_ls, fit_sieve_npiv
from .experiments import RateStudyConfig, TuningRule, run_rate_study, theoretical_slope
from .illposedness import IllPosednessProfile
from .sieve import SieveSpec, uniform_grid

EXIT_OK, EXIT_CONFIG, EXIT_ILLPOSED, EXIT_NUMERIC = 0, 2, 3, 4


# ---------------------------------------------------------------------------
# typed config access
# ---------------------------------------------------------------------------


class Section:
    """Typed, path-aware view of one config section that tracks consumed keys."""

    def __init__(self, name: str, values: dict):
        # shared with the owning Config, so resolved defaults reach the manifest
        self.name = name
        self.values = values
        self.used: set[str] = set()

    def _raw(self, key, default):
        self.used.add(key)
        if key in self.values:
            return self.values[key]
        if default is _REQUIRED:
            raise ConfigurationError(f"{self.name}.{key}: required field is missing")
        if default is not None:
            self.values[key] = _render(default)
        return default

    def str(self, key, default=None, choices=None):
        v = self._raw(key, default)
        if v is not None and choices is not None and v not in choices:
            raise ConfigurationError(f"{self.name}.{key}: expected one of {list(choices)}, got {v!r}")
        return v

    def _convert(self, key, default, fn, what):
        v = self._raw(key, default)
        if v is None or not isinstance(v, str):
            return v
        try:
            return fn(v)
        except ValueError:
            raise ConfigurationError(f"{self.name}.{key}: expected {what}, got {v!r}") from None

    def float(self, key, default=None):
        return self._convert(key, default, float, "a number")

    def int(self, key, default=None):
        return self._convert(key, default, int, "an integer")

    def bool(self, key, default=None):
        def parse(v):
            low = v.strip().lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(v)

        return self._convert(key, default, parse, "a boolean")

    def list(self, key, fn=float, default=None):
        def parse(v):
            return tuple(fn(x.strip()) for x in v.split(",") if x.strip())

        return self._convert(key, default, parse, "a comma-separated list")

    def check_unused(self):
        extra = sorted(set(self.values) - self.used)
        if extra:
            raise ConfigurationError(f"{self.name}: unknown field(s) {', '.join(extra)}")


_REQUIRED = object()


def _render(value) -> str:
    if isinstance(value, (tuple, list)):
        return ",".join(str(v) for v in value)
    return str(value)


class Config:
    def __init__(self, sections: dict):
        self.sections = {
            k.lower(): {kk.lower(): str(vv) for kk, vv in v.items()} for k, v in sections.items()
        }
        self.views: dict[str, Section] = {}

    @classmethod
    def load(cls, path) -> "Config":
        path = Path(path)
        if not path.exists():
            raise ConfigurationError(f"config file {path} does not exist")
        if path.suffix == ".json":
            try:
                data = json.loads(path.read_text(encoding="utf-8"))
                return cls(data["config"])
            except (ValueError, KeyError, TypeError):
                raise ConfigurationError(f"{path}: not a manifest with a 'config' block") from None
        parser = configparser.ConfigParser(interpolation=None)
        try:
            parser.read(path, encoding="utf-8")
        except configparser.Error as exc:
            raise ConfigurationError(f"{path}: {exc}") from None
        return cls({s: dict(parser[s]) for s in parser.sections()})

    def has(self, name: str) -> bool:
        return name in self.sections

    def section(self, name: str, required: bool = True) -> Section:
        if name not in self.views:
            if name not in self.sections and required:
                raise ConfigurationError(f"{name}: required section is missing")
            self.views[name] = Section(name, self.sections.setdefault(name, {}))
        return self.views[name]

    def set(self, name: str, key: str, value) -> None:
        self.sections.setdefault(name, {})[key] = str(value)

    def check_unused(self, allowed: set[str]):
        extra = sorted(set(self.sections) - allowed)
        if extra:
            raise ConfigurationError(f"unknown section(s) {', '.join(extra)}")
        for view in self.views.values():
            view.check_unused()

    def resolved(self) -> dict:
        return {name: dict(sorted(v.items())) for name, v in sorted(self.sections.items())}


# ---------------------------------------------------------------------------
# builders
# ---------------------------------------------------------------------------


def build_sieve(sec: Section) -> SieveSpec:
    family = sec.str("family", "bspline", ("bspline", "wavelet", "cosine"))
    d = sec.int("d", 1)
    if family == "bspline":
        block = {"family": family, "order": sec.int("order", 4), "n_interior": sec.int("n_interior", 0)}
    elif family == "wavelet":
        block = {
            "family": family,
            "n_vanishing": sec.int("n_vanishing", 2),
            "coarse_level": sec.int("coarse_level", 0),
            "fine_level": sec.int("fine_level", _REQUIRED),
        }
    else:
        block = {"family": family, "n_terms": sec.int("n_terms", _REQUIRED)}
    block["d"] = d
    return SieveSpec.from_dict(block)


def build_dgp(sec: Section) -> NpivDgp:
    kind = sec.str("profile", "mild", ("mild", "severe", "custom"))
    d = sec.int("d", 1)
    if kind == "custom":
        profile = IllPosednessProfile.custom(sec.list("values", default=_REQUIRED))
    else:
        profile = IllPosednessProfile(kind, sec.float("varsigma", 1.0), 1, sec.int("k_trunc", 200), sec.float("c"))
    family = sec.str("noise", "gaussian", ("gaussian", "student_t"))
    delta = sec.float("delta", 0.5)
    if family == "gaussian":
        noise = NoiseSpec("gaussian", sd=sec.float("sd", 1.0), delta_moment=delta)
    else:
        noise = NoiseSpec("student_t", dof=sec.float("dof", _REQUIRED), scale=sec.float("scale", 1.0),
                          delta_moment=delta)
    return NpivDgp(
        profile=profile,
        p=sec.float("p", 2.0),
        c_a=sec.float("c_a", 1.0),
        noise=noise,
        d=d,
        mode=sec.str("mode", "npiv", ("npiv", "ls")),
        rho=sec.float("rho", 0.0),
    )


def build_study(cfg: Config, seed: int | None) -> RateStudyConfig:
    dgp = build_dgp(cfg.section("dgp"))
    st = cfg.section("study")
    profile = st.str("profile", "acceptance", ("acceptance", "smoke"))
    mode = st.str("mode", dgp.mode, ("ls", "npiv"))
    default_kind = "ls" if mode == "ls" else dgp.profile.kind
    tuning = TuningRule(st.str("tuning", default_kind, ("ls", "mild", "severe")),
                        st.float("c", 1.0), st.float("c0", 1.0), st.float("exponent"))
    smoke = profile == "smoke"
    n_grid = st.list("n_grid", int, (500, 1000, 2000) if smoke else (1000, 2000, 4000, 8000, 16000))
    reps = st.int("reps", 50 if smoke else 200)
    metrics = st.list("metrics", str, ("sup", "l2"))
    severe = tuning.kind == "severe"
    default_axis = "log_log_n" if severe else "n_over_log_n"
    axes = {"sup": st.str("sup_axis", default_axis), "l2": st.str("l2_axis", default_axis)}
    target = theoretical_slope(mode, dgp.p, dgp.d, dgp.profile.varsigma, dgp.profile.kind)
    targets = {"sup": st.float("target_sup", target), "l2": st.float("target_l2", target)}
    tolerances = {"sup": st.float("tol_sup", 0.10), "l2": st.float("tol_l2", 0.10)}
    base_seed = st.int("base_seed", 0) if seed is None else seed
    return RateStudyConfig(
        dgp=dgp,
        mode=mode,
        tuning=tuning,
        family=st.str("family", "bspline" if mode == "ls" else "cosine", ("bspline", "wavelet", "cosine")),
        order=st.int("order", 4),
        n_vanishing=st.int("n_vanishing", 2),
        n_grid=n_grid,
        reps=reps,
        metrics=metrics,
        base_seed=base_seed,
        measure=st.str("measure", "empirical", ("empirical", "uniform")),
        slope_axes=axes,
        targets=targets,
        tolerances=tolerances,
        min_n_grid=3 if smoke else 4,
        min_reps=50 if not smoke else 10,
    )


def build_ensemble(sec: Section) -> EnsembleSpec:
    return EnsembleSpec(
        kind="gram",
        n=sec.int("n", 500),
        K=sec.int("k", 16),
        d=sec.int("d", 1),
        family=sec.str("family", "bspline", ("bspline", "wavelet", "cosine")),
        order=sec.int("order", 4),
        n_vanishing=sec.int("n_vanishing", 2),
        rho=sec.float("rho", 0.0),
    )


# ---------------------------------------------------------------------------
# output helpers
# ---------------------------------------------------------------------------


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def write_json(path: Path, data) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(data, fh, indent=2, sort_keys=True, ensure_ascii=False)
        fh.write("\n")


def write_manifest(out: Path, subcommand: str, cfg: Config, outputs: list[str]) -> None:
    """Echo the resolved config (defaults and seed overrides included) and output hashes."""
    write_json(
        out / "manifest.json",
        {
            "artifact_version": __version__,
            "subcommand": subcommand,
            "config": cfg.resolved(),
            "outputs": {name: _sha256(out / name) for name in sorted(outputs)},
        },
    )


def _seed(cfg: Config, section: str, args_seed) -> int:
    if args_seed is not None:
        cfg.set(section, "seed", args_seed)
    return cfg.section(section).int("seed", 0)


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_fit(args, cfg: Config, out: Path) -> list[str]:
    if args.mode:
        cfg.set("fit", "mode", args.mode)
    if args.data:
        cfg.set("fit", "data", args.data)
    for name in ("psi", "b"):
        override = getattr(args, name)
        if override:
            for item in override.split(","):
                if "=" not in item:
                    raise ConfigurationError(f"--{name}: expected key=value pairs, got {item!r}")
                k, v = item.split("=", 1)
                cfg.set(name, k.strip().lower(), v.strip())
    sec = cfg.section("fit")
    mode = sec.str("mode", "npiv", ("ls", "npiv"))
    data = sec.str("data", _REQUIRED)
    measure = sec.str("measure", "empirical", ("empirical", "uniform"))
    grid = sec.int("predict_grid", 0)
    b_spec = build_sieve(cfg.section("b"))
    sample = Sample.from_csv(data)
    if mode == "ls":
        if cfg.has("psi"):
            build_sieve(cfg.section("psi"))
        fit = fit_sieve_ls(sample, b_spec, measure)
    else:
        psi_spec = build_sieve(cfg.section("psi"))
        fit = fit_sieve_npiv(sample, psi_spec, b_spec, measure)
    cfg.check_unused({"fit", "psi", "b"})
    result = fit.to_dict()
    result["mode"] = mode
    write_json(out / "fit.json", result)
    outputs = ["fit.json"]
    if grid:
        pts = uniform_grid(grid, b_spec.d if mode == "ls" else fit.psi_handle.d)
        pred = fit(pts)
        with open(out / "predictions.csv", "w", encoding="utf-8") as fh:
            cols = [f"y2_{i + 1}" for i in range(pts.shape[1])] + ["h_hat"]
            fh.write(",".join(cols) + "\n")
            for row, v in zip(pts, pred):
                fh.write(",".join(repr(float(x)) for x in (*row, v)) + "\n")
        outputs.append("predictions.csv")
    return outputs


def cmd_simulate(args, cfg: Config, out: Path) -> list[str]:
    seed = _seed(cfg, "simulate", args.seed)
    dgp = build_dgp(cfg.section("dgp"))
    n = cfg.section("simulate").int("n", _REQUIRED)
    cfg.check_unused({"dgp", "simulate"})
    sample = dgp.sample(n, seed)
    sample.to_csv(out / "sample.csv")
    return ["sample.csv"]


def cmd_rates(args, cfg: Config, out: Path) -> list[str]:
    if args.seed is not None:
        cfg.set("study", "base_seed", args.seed)
    study = build_study(cfg, None)
    cfg.check_unused({"dgp", "study"})
    table = run_rate_study(study, threads=args.threads)
    table.to_csv(out / "rates.csv")
    table.to_json(out / "rates.json")
    return ["rates.csv", "rates.json"]


def cmd_concentration(args, cfg: Config, out: Path) -> list[str]:
    seed = _seed(cfg, "tail", args.seed)
    spec = build_ensemble(cfg.section("ensemble"))
    tail = cfg.section("tail")
    reps = tail.int("reps", 10_000)
    n_grid = tail.int("grid", 50)
    q = tail.int("q")
    cfg.check_unused({"ensemble", "tail"})
    check = empirical_tail(spec, reps=reps, seed=seed, n_grid=n_grid, q=q)
    cols = ["threshold", "empirical", "wilson_lo", "wilson_hi", "bound", "violation"]
    with open(out / "tail.csv", "w", encoding="utf-8") as fh:
        fh.write(",".join(cols) + "\n")
        for row in check.rows():
            fh.write(",".join(repr(row[c]) if c != "violation" else str(int(row[c])) for c in cols) + "\n")
    write_json(out / "tail.json", {
        "ensemble": spec.to_dict(),
        "reps": check.reps,
        "params": check.params.to_dict(),
        "bound": "beta_mixing" if spec.rho > 0 else "independent",
        "violations": check.n_violations,
    })
    return ["tail.csv", "tail.json"]


def cmd_identifiability(args, cfg: Config, out: Path) -> list[str]:
    seed = _seed(cfg, "scaling", args.seed)
    spec = build_ensemble(cfg.section("ensemble"))
    sc = cfg.section("scaling")
    n_grid = sc.list("n_grid", int, (250, 500, 1000, 2000, 4000))
    k_grid = sc.list("k_grid", int, (8, 16, 32, 64))
    reps = sc.int("reps", 200)
    cfg.check_unused({"ensemble", "scaling"})
    report = scaling_study(spec, n_grid, k_grid, reps, seed)
    report.to_csv(out / "scaling.csv")
    report.to_json(out / "scaling.json")
    return ["scaling.csv", "scaling.json"]


COMMANDS = {
    "fit": cmd_fit,
    "simulate": cmd_simulate,
    "rates": cmd_rates,
    "concentration": cmd_concentration,
    "identifiability": cmd_identifiability,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sievenpiv", description="Sieve NPIV estimation and rate studies.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=name != "fit", help="INI config or a manifest.json")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--threads", type=int, default=1, help="worker threads (results do not depend on it)")
        if name == "fit":
            p.add_argument("--data", help="sample CSV (y1, y2_1.., x_1..)")
            p.add_argument("--mode", choices=("ls", "npiv"))
            p.add_argument("--psi", help="basis for Y2, e.g. family=bspline,order=4,n_interior=3")
            p.add_argument("--b", help="basis for X, same syntax as --psi")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.threads < 1:
            raise ConfigurationError("--threads must be >= 1")
        cfg = Config.load(args.config) if args.config else Config({})
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        outputs = COMMANDS[args.command](args, cfg, out)
        write_manifest(out, args.command, cfg, outputs)
    except IllPosednessError as exc:
        print(f"error: ill-posed design: {exc}", file=sys.stderr)
        return EXIT_ILLPOSED
    except (ConfigurationError, DomainError, ContractViolation) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SieveError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"error: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
