"""Command-line interface, configuration files and output persistence.

Every subcommand writes into one output directory only: CSV tables, a
``metadata.json`` with the full parameter set and seed, and the
``run_config.toml`` that reproduces the run.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import os
import re
import sys
from pathlib import Path
from typing import List, Optional, Sequence

from .errors import (DimensionMismatchError, InsufficientSamplesError, ParseError,
                     SingularError, ValidationError)
from .model import ModelParams, validate_params

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

EXIT_OK, EXIT_INPUT, EXIT_SINGULAR, EXIT_FAILED = 0, 1, 2, 3

#: Alternative spellings accepted in config files.
ALIASES = {"lambda": "lam", "lambda_tilde": "lam_tilde"}

_PARAM_FIELDS = {f.name: f for f in dataclasses.fields(ModelParams)}


@dataclasses.dataclass(frozen=True)
class OutputOptions:
    """What to write.  ``trajectory_every`` and ``field_every`` are step
    cadences; 0 keeps only the initial and final records."""

    trajectory: bool = True
    trajectory_every: int = 100
    field_every: int = 0
    events: bool = True
    diagnostics: bool = True


@dataclasses.dataclass(frozen=True)
class StudyOptions:
    """Options of the Monte-Carlo subcommands.  ``eps_levels`` are multiples
    of the potential minimum radius ``r_star``."""

    runs: int = 20
    eps_levels: tuple = (0.10, 0.05, 0.025)
    killing: str = "clock"
    min_deaths: int = 1000
    scale: str = "quick"


@dataclasses.dataclass(frozen=True)
class RunConfig:
    params: ModelParams = dataclasses.field(default_factory=ModelParams)
    output_dir: str = "ljreact_out"
    output: OutputOptions = dataclasses.field(default_factory=OutputOptions)
    study: StudyOptions = dataclasses.field(default_factory=StudyOptions)

    def to_toml(self) -> str:
        import tomli_w
        doc = self.params.to_dict()
        doc["output_dir"] = self.output_dir
        doc["output"] = dataclasses.asdict(self.output)
        study = dataclasses.asdict(self.study)
        study["eps_levels"] = list(study["eps_levels"])
        doc["study"] = study
        return tomli_w.dumps(doc)


# ---------------------------------------------------------------------------
# parsing

_TOML_LINE = re.compile(r"at line (\d+)")


def _key_line(text: str, key: str) -> Optional[int]:
    pat = re.compile(rf"^\s*{re.escape(key)}\s*=")
    for n, line in enumerate(text.splitlines(), 1):
        if pat.match(line):
            return n
    sect = re.compile(rf"^\s*\[\s*{re.escape(key)}\s*\]")
    for n, line in enumerate(text.splitlines(), 1):
        if sect.match(line):
            return n
    return None


def _coerce(section: str, name: str, value, target_type, text: str):
    line = _key_line(text, name)
    if isinstance(value, dict):
        raise ParseError(line, f"'{name}' must be a value, not a table")
    try:
        if target_type in (int, "int"):
            if isinstance(value, bool) or (isinstance(value, float) and not value.is_integer()):
                raise TypeError
            return int(value)
        if target_type in (float, "float"):
            if isinstance(value, bool):
                raise TypeError
            return float(value)
        if target_type in (bool, "bool"):
            if not isinstance(value, bool):
                raise TypeError
            return value
        if target_type in (str, "str"):
            if not isinstance(value, str):
                raise TypeError
            return value
    except (TypeError, ValueError):
        raise ParseError(line, f"'{name}' in {section} has the wrong type") from None
    return value


def _param_value(name: str, value, text: str, key: Optional[str] = None):
    """Check and convert one model parameter; ``key`` is its spelling in ``text``."""
    key = key or name
    line = _key_line(text, key)
    if name in ("box_lo", "box_hi"):
        if not isinstance(value, list):
            raise ParseError(line, f"'{name}' must be a list of numbers")
        try:
            return tuple(float(v) for v in value)
        except (TypeError, ValueError):
            raise ParseError(line, f"'{name}' must be a list of numbers") from None
    ann = str(_PARAM_FIELDS[name].type)
    kind = "int" if "int" in ann else "float"
    return _coerce("the model parameters", key, value, kind, text)


def _section(cls, raw: dict, section: str, text: str):
    fields = {f.name: f for f in dataclasses.fields(cls)}
    out = {}
    for key, value in raw.items():
        if key not in fields:
            raise ParseError(_key_line(text, key), f"unknown key '{key}' in [{section}]")
        if key == "eps_levels":
            if not isinstance(value, list) or not value:
                raise ParseError(_key_line(text, key), "'eps_levels' must be a non-empty list")
            out[key] = tuple(float(v) for v in value)
        else:
            default = getattr(cls(), key)
            out[key] = _coerce(f"[{section}]", key, value, type(default).__name__, text)
    return cls(**out)


def parse_config(text: str) -> RunConfig:
    """Parse a TOML document into a validated :class:`RunConfig`.

    Model parameters sit at the top level (``lambda`` and ``lambda_tilde``
    are accepted for ``lam`` and ``lam_tilde``); ``[output]`` and
    ``[study]`` hold the remaining options.  Unknown keys are rejected.
    """
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        m = _TOML_LINE.search(str(exc))
        raise ParseError(int(m.group(1)) if m else None, str(exc)) from None
    params = {}
    output, study, out_dir = OutputOptions(), StudyOptions(), RunConfig.output_dir
    for key, value in raw.items():
        if key == "output":
            if not isinstance(value, dict):
                raise ParseError(_key_line(text, key), "'output' must be a table")
            output = _section(OutputOptions, value, "output", text)
        elif key == "study":
            if not isinstance(value, dict):
                raise ParseError(_key_line(text, key), "'study' must be a table")
            study = _section(StudyOptions, value, "study", text)
        elif key == "output_dir":
            out_dir = _coerce("the top level", key, value, "str", text)
        else:
            name = ALIASES.get(key, key)
            if name not in _PARAM_FIELDS:
                raise ParseError(_key_line(text, key), f"unknown key '{key}'")
            if name in params:
                raise ParseError(_key_line(text, key), f"'{name}' given twice")
            params[name] = _param_value(name, value, text, key)
    p = validate_params(ModelParams(**params))
    return RunConfig(p, out_dir, _validate_options(output), _validate_study(study))


def _validate_options(o: OutputOptions) -> OutputOptions:
    if o.trajectory_every < 0 or o.field_every < 0:
        raise ValidationError("output", "cadences must be >= 0")
    return o


def _validate_study(s: StudyOptions) -> StudyOptions:
    from .integrator import KILLING_MODES
    if s.runs < 1:
        raise ValidationError("runs", "must be >= 1")
    if s.min_deaths < 1:
        raise ValidationError("min_deaths", "must be >= 1")
    if s.killing not in KILLING_MODES:
        raise ValidationError("killing", f"must be one of {KILLING_MODES}")
    if s.scale not in ("smoke", "quick", "full"):
        raise ValidationError("scale", "must be smoke, quick or full")
    if any(e <= 0 for e in s.eps_levels) or any(b >= a for a, b in
                                                zip(s.eps_levels, s.eps_levels[1:])):
        raise ValidationError("eps_levels", "levels must be positive and strictly decreasing")
    return s


def load_config(path) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ParseError(None, f"cannot read {path}: {exc.strerror}") from None
    return parse_config(text)


def _override_params(p: ModelParams, assignments: Sequence[str]) -> ModelParams:
    """Apply ``key=value`` overrides (values in TOML syntax)."""
    changes = {}
    for item in assignments:
        if "=" not in item:
            raise ParseError(None, f"--set expects key=value, got '{item}'")
        key, value = item.split("=", 1)
        key = key.strip()
        line = f"{key} = {value.strip()}"
        try:
            parsed = tomllib.loads(line)[key]
        except (tomllib.TOMLDecodeError, KeyError) as exc:
            raise ParseError(None, f"--set {item}: {exc}") from None
        name = ALIASES.get(key, key)
        if name not in _PARAM_FIELDS:
            raise ParseError(None, f"unknown key '{key}'")
        changes[name] = _param_value(name, parsed, line, key)
    return p.replace(**changes)


# ---------------------------------------------------------------------------
# output helpers

def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    if hasattr(v, "dtype"):
        return repr(v.item()) if v.dtype.kind == "f" else str(v.item())
    return str(v)


def write_csv(path: Path, header: Sequence[str], rows) -> Path:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])
    return path


def write_json(path: Path, doc) -> Path:
    from .diagnostics import _plain
    path.write_text(json.dumps(_plain(doc), indent=2) + "\n")
    return path


def field_rows(grid):
    """Rows ``(x1, ..., xd, c, m0, g)`` for every node in C order."""
    X = grid.nodes()
    c, m0 = grid.c.ravel(), grid.m0.ravel()
    for k in range(len(c)):
        yield (*(float(v) for v in X[k]), float(c[k]), float(m0[k]), float(m0[k] - c[k]))


def _field_header(d: int) -> List[str]:
    return [f"x{a + 1}" for a in range(d)] + ["c", "m0", "g"]


def _prepare_out(cfg: RunConfig, subcommand: str, extra: Optional[dict] = None) -> Path:
    from . import __version__
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "run_config.toml").write_text(cfg.to_toml())
    meta = {"subcommand": subcommand, "version": __version__, "seed": cfg.params.seed,
            "params": cfg.params.to_dict(), "output": dataclasses.asdict(cfg.output),
            "study": dataclasses.asdict(cfg.study)}
    if extra:
        meta.update(extra)
    write_json(out / "metadata.json", meta)
    return out


def _update_metadata(out: Path, **fields) -> None:
    path = out / "metadata.json"
    meta = json.loads(path.read_text())
    meta.update(fields)
    write_json(path, meta)


# ---------------------------------------------------------------------------
# subcommands

def _single_run(cfg: RunConfig, out: Path):
    from .integrator import Engine, initial_state, run_from_state
    p = cfg.params
    o = cfg.output
    engine = Engine(p, killing=cfg.study.killing)
    state = initial_state(p, engine.streams)
    monitor = None
    if o.field_every > 0:
        def monitor(st, rep, c_before):
            if st.step % o.field_every == 0:
                write_csv(out / f"field_{st.step:07d}.csv", _field_header(p.d),
                          field_rows(st.field))
    return run_from_state(engine, state, record_every=o.trajectory_every if o.trajectory else 0,
                          monitor=monitor)


def _write_run(cfg: RunConfig, out: Path, res) -> dict:
    p = cfg.params
    if cfg.output.trajectory:
        header = ["step", "time", "particle"] + [f"x{a + 1}" for a in range(p.d)] + \
                 ["active", "hazard"]
        write_csv(out / "trajectory.csv", header, res.trajectory.to_csv_rows())
    if cfg.output.events:
        (out / "events.csv").write_text(res.events.to_csv())
    write_csv(out / "field.csv", _field_header(p.d), field_rows(res.field))
    gaps = [g for g in res.trajectory.min_gap]
    summary = {"steps": res.state.step, "final_time": res.state.time,
               "deaths": len(res.events), "active": res.state.n_active,
               "tie_steps": res.events.tie_steps,
               "min_gap": min(gaps) if gaps else float("inf")}
    _update_metadata(out, summary=summary)
    return summary


def cmd_simulate(cfg: RunConfig, args) -> int:
    out = _prepare_out(cfg, args.command)
    res = _single_run(cfg, out)
    s = _write_run(cfg, out, res)
    print(f"{s['deaths']} deaths, {s['active']} active at t={s['final_time']:.6g}; "
          f"min gap {s['min_gap']:.6g}")
    return EXIT_OK


def cmd_noreaction(cfg: RunConfig, args) -> int:
    cfg = dataclasses.replace(cfg, params=cfg.params.replace(lam_tilde=0.0))
    return cmd_simulate(cfg, args)


def _levels(cfg: RunConfig) -> List[float]:
    r = cfg.params.r_star
    return [f * r for f in cfg.study.eps_levels]


def _coupled_runs(cfg: RunConfig):
    from .integrator import run_coupled_epsilons
    eps = _levels(cfg)
    p = cfg.params.replace(lam_tilde=0.0, epsilon=eps[0])
    return eps, [run_coupled_epsilons(p.replace(seed=p.seed + r), eps)
                 for r in range(cfg.study.runs)]


def cmd_converge(cfg: RunConfig, args) -> int:
    import numpy as np
    out = _prepare_out(cfg, args.command, {"note": "lam_tilde is 0 in shared-noise runs"})
    eps, results = _coupled_runs(cfg)
    rows = []
    for r, res in enumerate(results):
        for j, e in enumerate(eps):
            sup = res.sup_distance[j - 1] if j > 0 else 0.0
            b = res.branch_steps[j]
            rows.append((r, cfg.params.seed + r, j, e, float(res.min_gap[j]),
                         int(res.attained[j]), float(sup), -1 if b is None else int(b)))
    write_csv(out / "converge.csv", ["run", "seed", "level", "epsilon", "min_gap", "attained",
                                     "sup_distance_to_previous", "branch_step"], rows)
    sups = np.array([res.sup_distance for res in results]) if len(eps) > 1 else np.zeros((0, 0))
    med = np.median(sups, axis=0).tolist() if sups.size else []
    _update_metadata(out, summary={"runs": len(results), "median_sup_distance": med})
    print("median sup distance between consecutive levels: "
          + ", ".join(f"{m:.6g}" for m in med))
    return EXIT_OK


def cmd_collide(cfg: RunConfig, args) -> int:
    from .diagnostics import Check, DiagnosticsReport, collision_statistics
    out = _prepare_out(cfg, args.command, {"note": "lam_tilde is 0 in shared-noise runs"})
    eps, results = _coupled_runs(cfg)
    cs = collision_statistics(results, eps)
    write_csv(out / "collisions.csv",
              ["level", "epsilon", "count", "runs", "frequency", "ci_low", "ci_high"],
              [(j, e, cs.counts[j], cs.n_runs, cs.frequency[j], cs.ci_low[j], cs.ci_high[j])
               for j, e in enumerate(eps)])
    check = Check("collision_frequencies", cs.nonincreasing,
                  {"frequency": cs.frequency, "ci_low": cs.ci_low, "ci_high": cs.ci_high},
                  {"order": "nonincreasing"}, cs.n_runs,
                  "fraction of runs reaching each regularization radius", cfg.params.seed)
    report = DiagnosticsReport([check])
    (out / "report.json").write_text(report.to_json() + "\n")
    print(report.summary())
    return EXIT_OK if report.passed else EXIT_FAILED


def cmd_hazard(cfg: RunConfig, args) -> int:
    import numpy as np
    from .diagnostics import Check, DiagnosticsReport, hazard_timechange_test
    from .integrator import Engine, initial_state, run_from_state
    from .model import RandomStreams
    out = _prepare_out(cfg, args.command)
    p = cfg.params
    engine = Engine(p, killing=cfg.study.killing)
    rows, hazards = [], []
    for r in range(cfg.study.runs):
        streams = RandomStreams(p.seed + r, p.N)
        state = initial_state(p.replace(seed=p.seed + r), streams)
        run_from_state(engine.with_streams(streams), state)
        for e in state.events:
            rows.append((r, e.particle, e.step, e.time, e.hazard_at_death))
            hazards.append(e.hazard_at_death)
    write_csv(out / "hazards.csv", ["run", "particle", "step", "time", "hazard_at_death"], rows)
    ks = hazard_timechange_test(np.array(hazards), min_deaths=cfg.study.min_deaths)
    check = Check("hazard_timechange", ks.passed,
                  {"ks_statistic": ks.statistic, "p_value": ks.pvalue},
                  {"alpha": ks.alpha}, ks.n,
                  "hazard accumulated up to death is unit exponential", p.seed)
    report = DiagnosticsReport([check])
    (out / "report.json").write_text(report.to_json() + "\n")
    print(report.summary())
    return EXIT_OK if report.passed else EXIT_FAILED


def cmd_lyapunov(cfg: RunConfig, args) -> int:
    import numpy as np
    from .diagnostics import Check, DiagnosticsReport, collision_path, lyapunov_probe
    from .envdrift import stencil_from_params
    from .field import FieldGrid
    from .model import RandomStreams, sample_initial_positions
    out = _prepare_out(cfg, args.command)
    p = cfg.params
    grid = FieldGrid.from_params(p)
    stencil = stencil_from_params(p)
    rows, values = [], []
    for k in range(cfg.study.runs):
        X = sample_initial_positions(p.replace(seed=p.seed + k), RandomStreams(p.seed + k, p.N))
        total, parts = lyapunov_probe(X, p, grid, stencil, parts=True)
        rows.append((k, p.seed + k, total, parts["grad_sq"], parts["diffusion"], parts["drift"]))
        values.append(total)
    write_csv(out / "lyapunov.csv",
              ["config", "seed", "value", "grad_sq", "diffusion", "drift"], rows)
    fractions = (0.5, 0.3, 0.2, 0.15, 0.1)
    pair = p.replace(N=2, N_tilde=p.norm)
    path = [lyapunov_probe(c, pair, stencil=stencil) for c in collision_path(p, fractions)]
    write_csv(out / "collision_path.csv", ["fraction", "distance", "value"],
              [(f, f * p.r_star, v) for f, v in zip(fractions, path)])
    finite = bool(np.all(np.isfinite(values)))
    decreasing = bool(np.all(np.diff(path) < 0))
    check = Check("lyapunov", finite and decreasing,
                  {"eta_hat": float(np.max(values)) if values else float("-inf"),
                   "finite": finite, "path_values": path},
                  {"path": "strictly decreasing"}, len(values),
                  "generator of the potential is bounded above and diverges to -inf "
                  "at collisions", p.seed)
    report = DiagnosticsReport([check])
    (out / "report.json").write_text(report.to_json() + "\n")
    print(report.summary())
    return EXIT_OK if report.passed else EXIT_FAILED


def _print_check(check) -> None:
    # timing goes to the terminal only; report files stay byte-stable
    t = "" if check.runtime_s is None else f" [{check.runtime_s:.1f} s]"
    print(check.line() + t, flush=True)


def cmd_verify(cfg: RunConfig, args) -> int:
    from .verification import run_suite
    out = _prepare_out(cfg, args.command, {"scale": cfg.study.scale})
    only = [s for s in args.only.split(",") if s] if args.only else None
    report = run_suite(cfg.study.scale, only=only, workdir=out / "determinism",
                       progress=_print_check)
    (out / "report.json").write_text(report.to_json() + "\n")
    (out / "summary.txt").write_text(report.summary() + "\n")
    print("all checks passed" if report.passed else "some checks failed")
    return EXIT_OK if report.passed else EXIT_FAILED


def cmd_plot_export(cfg: RunConfig, args) -> int:
    import numpy as np
    from .plotting import export_figures
    out = _prepare_out(cfg, args.command)
    p = cfg.params
    res = _single_run(cfg, out)
    summary = _write_run(cfg, out, res)
    tr = res.trajectory
    rows = ((s, t, i, a + 1, float(X[i, a]), int(act[i]))
            for s, t, X, act in zip(tr.steps, tr.times, tr.positions, tr.active)
            for i in range(len(act)) for a in range(p.d))
    write_csv(out / "paths.csv", ["step", "time", "particle", "axis", "position", "active"], rows)
    t = np.sort(res.events.times)
    write_csv(out / "survival.csv", ["time", "active"],
              [(0.0, p.N)] + [(float(ti), p.N - k - 1) for k, ti in enumerate(t)])
    write_csv(out / "min_gap.csv", ["step", "time", "min_gap"],
              [(k, k * p.dt, float(g)) for k, g in enumerate(tr.min_gap)])
    figures = export_figures(res, p, out)
    print(f"{summary['deaths']} deaths; wrote {len(figures)} figures to {out}")
    return EXIT_OK


COMMANDS = {
    "simulate": (cmd_simulate, "one run across all killing times"),
    "noreaction": (cmd_noreaction, "one run with killing switched off"),
    "converge": (cmd_converge, "shared-noise runs over decreasing regularization radii"),
    "hazard-test": (cmd_hazard, "KS test of the hazard at death against Exp(1)"),
    "collide-test": (cmd_collide, "frequency of close encounters per regularization radius"),
    "lyapunov-probe": (cmd_lyapunov, "generator of the interaction potential"),
    "verify": (cmd_verify, "the acceptance suite"),
    "plot-export": (cmd_plot_export, "tidy CSV tables and PNG figures of one run"),
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML configuration file")
    common.add_argument("--seed", type=int, help="master seed (overrides the config)")
    common.add_argument("--out", help="output directory (overrides the config)")
    common.add_argument("--runs", type=int, help="number of independent runs or configurations")
    common.add_argument("--dt", type=float, help="time step")
    common.add_argument("--eps-levels", help="comma-separated radii as multiples of r_star")
    common.add_argument("--threads", type=int, help="worker threads for compiled kernels")
    common.add_argument("--scale", choices=("smoke", "quick", "full"),
                        help="sample sizes of the acceptance suite (verify)")
    common.add_argument("--killing", choices=("clock", "acceptance"), help="killing mechanism")
    common.add_argument("--min-deaths", type=int, help="deaths required by hazard-test")
    common.add_argument("--only", help="comma-separated check names (verify)")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override one model parameter, value in TOML syntax")
    parser = argparse.ArgumentParser(prog="ljreact", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in COMMANDS.items():
        sub.add_parser(name, parents=[common], help=help_text, description=help_text)
    return parser


def _set_threads(n: Optional[int]) -> None:
    if n is None:
        return
    if n < 1:
        raise ValidationError("threads", "must be >= 1")
    if "numba" not in sys.modules:
        os.environ["NUMBA_NUM_THREADS"] = str(n)
        return
    import numba
    numba.set_num_threads(min(n, numba.config.NUMBA_NUM_THREADS))


def config_from_args(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    p = cfg.params
    if args.set:
        p = _override_params(p, args.set)
    if args.seed is not None:
        p = p.replace(seed=args.seed)
    if args.dt is not None:
        p = p.replace(dt=args.dt)
    study = {}
    if args.runs is not None:
        study["runs"] = args.runs
    if args.eps_levels:
        try:
            study["eps_levels"] = tuple(float(v) for v in args.eps_levels.split(","))
        except ValueError:
            raise ParseError(None, f"--eps-levels: not a list of numbers: {args.eps_levels}") \
                from None
    for flag in ("scale", "killing", "min_deaths"):
        if getattr(args, flag) is not None:
            study[flag] = getattr(args, flag)
    out_dir = args.out if args.out else cfg.output_dir
    return RunConfig(validate_params(p), out_dir, cfg.output,
                     _validate_study(dataclasses.replace(cfg.study, **study)))


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        _set_threads(args.threads)
        cfg = config_from_args(args)
        handler = COMMANDS[args.command][0]
        return handler(cfg, args)
    except (ValidationError, ParseError, InsufficientSamplesError, DimensionMismatchError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except SingularError as exc:
        print(f"error: particles collided ({exc}); the regularization radius epsilon "
              "keeps the pair force finite only for epsilon > 0", file=sys.stderr)
        return EXIT_SINGULAR


if __name__ == "__main__":
    sys.exit(main())
