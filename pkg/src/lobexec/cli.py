"""Batch front-end: point probes and the three simulation experiments.

Every run writes ``<out>.csv`` (``#`` metadata lines, a header, then rows
with 12 significant digits) and ``<out>.plot``, a declarative description of
the figures in terms of CSV columns for any plotting tool to consume.

Exit codes: 0 success, 2 parameter or usage error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import math
import sys
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import __version__
from .chain import (
    DivergentSumError,
    exec_moments,
    exec_time_moments,
    free_time_asymptotics,
    large_q_hits,
    large_q_impact,
)
from .firstpassage import (
    asymmetry_chi,
    free_laplace,
    hit_time_moments,
    strip_laplace,
)
from .model import ModelParams, ParameterError, ResetDistribution, StripGeometry
from .montecarlo import (
    InsufficientDataError,
    SimConfig,
    simulate_execution,
    simulate_free,
    snapshot_stats,
    summarize,
)
from .quadrature import ConvergenceError

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC = 0, 2, 3
COMMANDS = ("probe", "free", "exec", "robust")
RESET_MODES = ("deterministic", "fig3")


class UsageError(ParameterError):
    pass


# ---------------------------------------------------------------------------
# configuration


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything one run needs.  List-valued entries define curve families."""

    command: str = "probe"
    mu: tuple[float, ...] = (0.0,)
    vsml: float = 1.0
    vlrg: float = 3.0
    vb: float = 2.0
    va: float = 2.0
    q: float | None = None
    q_grid: tuple[float, ...] = ()
    omega: float = 0.0
    paths: int = 1000
    seed: int = 0
    dt: float = 1e-3
    dv: tuple[float, ...] = (0.0,)
    bridge: bool = True
    resets: tuple[str, ...] = ("deterministic",)
    max_time: float = 1e6
    t_max: float = 1e4
    n_times: int = 13
    out: str = "lobexec_out"
    workers: int = 1

    def params(self, mu: float | None = None) -> ModelParams:
        return ModelParams(mu=self.mu[0] if mu is None else mu, v_sml=self.vsml,
                           v_lrg=self.vlrg, v0_bid=self.vb, v0_ask=self.va)

    def sim(self, dv: float = 0.0, resets: str = "deterministic") -> SimConfig:
        dist = ResetDistribution.stochastic() if resets == "fig3" else None
        return SimConfig(dt=self.dt, bridge_correction=self.bridge, dv=dv,
                         reset_distribution=dist, n_paths=self.paths, seed=self.seed,
                         max_time=self.max_time, workers=self.workers)

    def grid(self) -> tuple[float, ...]:
        if self.q_grid:
            return self.q_grid
        if self.q is not None:
            return (self.q,)
        raise UsageError("q_grid", "missing required key: q_grid (or q)")

    def sample_times(self) -> tuple[float, ...]:
        if not (self.t_max > 10.0 and self.n_times >= 2):
            raise UsageError("t_max", "free runs need t_max > 10 and n_times >= 2")
        return tuple(float(f"{t:.12g}") for t in np.logspace(1.0, math.log10(self.t_max),
                                                               self.n_times))

    def echo(self) -> list[tuple[str, str]]:
        """Config lines for the metadata header.  ``workers`` only affects
        how the run executes, so it is left out."""
        out = []
        for f in fields(self):
            if f.name == "workers":
                continue
            out.append((f.name, _render(getattr(self, f.name))))
        return out


def _render(value) -> str:
    if isinstance(value, tuple):
        return ",".join(_render(v) for v in value)
    if isinstance(value, bool):
        return "on" if value else "off"
    if isinstance(value, float):
        return f"{value:.12g}"
    return "" if value is None else str(value)


def parse_grid(text: str, key: str = "q_grid") -> tuple[float, ...]:
    """``start:stop:step`` with both ends included, or a comma list."""
    text = text.strip()
    try:
        if ":" not in text:
            vals = tuple(float(v) for v in text.split(",") if v.strip())
        else:
            start, stop, step = (float(v) for v in text.split(":"))
            if not step > 0 or stop < start:
                raise ValueError
            count = int(math.floor((stop - start) / step + 1e-9)) + 1
            vals = tuple(float(f"{start + i * step:.12g}") for i in range(count))
    except ValueError:
        raise UsageError(key, f"malformed grid for {key}: {text!r}") from None
    if not vals:
        raise UsageError(key, f"empty grid for {key}")
    return vals


def _bool(text: str, key: str) -> bool:
    t = text.strip().lower()
    if t in ("on", "true", "1", "yes"):
        return True
    if t in ("off", "false", "0", "no"):
        return False
    raise UsageError(key, f"{key} must be on or off, got {text!r}")


def _number(cast):
    def conv(text: str, key: str):
        try:
            return cast(float(text)) if cast is int and "e" in text.lower() else cast(text)
        except ValueError:
            raise UsageError(key, f"{key} must be a number, got {text!r}") from None
    return conv


def _float_list(text: str, key: str) -> tuple[float, ...]:
    return parse_grid(text, key)


def _resets(text: str, key: str) -> tuple[str, ...]:
    modes = tuple(m.strip() for m in text.split(",") if m.strip())
    for m in modes:
        if m not in RESET_MODES:
            raise UsageError(key, f"resets must be one of {', '.join(RESET_MODES)}, got {m!r}")
    if not modes:
        raise UsageError(key, "resets is empty")
    return modes


def _command(text: str, key: str) -> str:
    if text not in COMMANDS:
        raise UsageError(key, f"unknown command: {text}")
    return text


_CONVERTERS: dict[str, Callable] = {
    "command": _command,
    "mu": _float_list,
    "vsml": _number(float), "vlrg": _number(float), "vb": _number(float),
    "va": _number(float), "q": _number(float), "q_grid": parse_grid,
    "omega": _number(float), "paths": _number(int), "seed": _number(int),
    "dt": _number(float), "dv": _float_list, "bridge": _bool, "resets": _resets,
    "max_time": _number(float), "t_max": _number(float), "n_times": _number(int),
    "out": lambda text, key: text.strip(), "workers": _number(int),
}


def _normalise_key(key: str) -> str:
    return key.strip().lower().replace("-", "_")


def read_config_file(path: str | Path) -> dict[str, str]:
    """``key=value`` lines; blank lines and ``#`` comments are skipped."""
    raw = {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise UsageError("config", f"cannot read config file {path}: {exc.strerror}") from None
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError("config", f"{path}:{lineno}: expected key=value")
        key, value = line.split("=", 1)
        raw[_normalise_key(key)] = value.strip()
    return raw


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="lobexec", description=__doc__.splitlines()[0])
    p.add_argument("command", choices=COMMANDS)
    # every option defaults to None so the config file can fill the gaps
    p.add_argument("--config", metavar="FILE")
    p.add_argument("--mu", help="drift, or a comma list for curve families")
    p.add_argument("--vsml")
    p.add_argument("--vlrg")
    p.add_argument("--vb", help="initial bid volume (probe: state)")
    p.add_argument("--va", help="initial ask volume (probe: state)")
    p.add_argument("--Q", dest="q", help="execution level; omit for the free quadrant")
    p.add_argument("--Q-grid", dest="q_grid", metavar="START:STOP:STEP")
    p.add_argument("--omega")
    p.add_argument("--paths")
    p.add_argument("--seed")
    p.add_argument("--dt")
    p.add_argument("--dv", help="volume granularity (0 = diffusion); comma list for robust")
    p.add_argument("--bridge", choices=("on", "off"))
    p.add_argument("--resets", help="deterministic, fig3, or a comma list for robust")
    p.add_argument("--max-time", dest="max_time")
    p.add_argument("--t-max", dest="t_max", help="last sample time of free runs")
    p.add_argument("--n-times", dest="n_times", help="number of log-spaced sample times")
    p.add_argument("--workers", help="worker processes for the simulation")
    p.add_argument("--out", metavar="PATH", help="output prefix")
    return p


def parse_config(args: Sequence[str] | None = None, file: str | Path | None = None
                 ) -> ExperimentConfig:
    """Merge a config file with command-line flags (flags win)."""
    ns = build_parser().parse_args(args)
    raw = read_config_file(file or ns.config) if (file or ns.config) else {}
    raw.pop("command", None)
    for key, value in vars(ns).items():
        if key == "config" or value is None:
            continue
        raw[key] = value
    return config_from_mapping(raw)


def config_from_mapping(raw: dict[str, str]) -> ExperimentConfig:
    values = {}
    for key, text in raw.items():
        key = _normalise_key(key)
        if key not in _CONVERTERS:
            raise UsageError(key, f"unknown key: {key}")
        values[key] = _CONVERTERS[key](str(text), key)
    if "command" not in values:
        values["command"] = "probe"
    if values["command"] == "robust":
        values.setdefault("dv", (0.0, 0.3, 1.0))
        values.setdefault("resets", ("fig3",))
    if "paths" in values and values["paths"] < 2:
        raise UsageError("paths", "paths must be >= 2")
    if "workers" in values and values["workers"] < 1:
        raise UsageError("workers", "workers must be >= 1")
    for key in ("dv",):
        if key in values and any(v < 0 for v in values[key]):
            raise UsageError(key, f"{key} must be >= 0")
    cfg = ExperimentConfig(**values)
    for mu in cfg.mu:
        cfg.params(mu)  # surfaces parameter errors before any work
    if cfg.command in ("exec", "robust"):
        cfg.grid()
    if cfg.command in ("free", "exec") and (len(cfg.resets) > 1 or len(cfg.dv) > 1):
        raise UsageError("resets", "lists of dv or resets are only allowed for robust")
    return cfg


# ---------------------------------------------------------------------------
# tables


@dataclass
class ResultTable:
    columns: tuple[str, ...]
    rows: list[tuple] = field(default_factory=list)
    metadata: list[tuple[str, str]] = field(default_factory=list)
    figures: list[dict] = field(default_factory=list)
    complete: bool = True

    def add(self, row: Sequence) -> None:
        if len(row) != len(self.columns):
            raise ValueError(f"row has {len(row)} values, table has {len(self.columns)} columns")
        self.rows.append(tuple(row))

    def column(self, name: str) -> np.ndarray:
        j = self.columns.index(name)
        return np.array([r[j] for r in self.rows], dtype=float)


def _fmt(v) -> str:
    if isinstance(v, str):
        return v
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    v = float(v)
    if math.isnan(v):
        return "nan"
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return f"{v:.12g}"


def _figure(name: str, x: str, series: Sequence[tuple[str, str | None]], group: str | None,
            ylabel: str, xscale: str = "linear", yscale: str = "linear") -> dict:
    return {"name": name, "x": x, "series": list(series), "group": group,
            "ylabel": ylabel, "xscale": xscale, "yscale": yscale}


# ---------------------------------------------------------------------------
# commands


PROBE_COLUMNS = ("vb", "va", "q", "mu", "omega", "p_ex", "p_up", "p_dn", "sum", "mean_hit_time")


def run_probe(cfg: ExperimentConfig) -> ResultTable:
    """Hitting probabilities at the state ``(vb, va)`` and the mean time to
    the first boundary."""
    table = ResultTable(PROBE_COLUMNS)
    state = (cfg.vb, cfg.va)
    for mu in cfg.mu:
        params = cfg.params(mu)
        if cfg.q is None:
            up, dn = free_laplace(params, state, cfg.omega)
            ex = 0.0
            geom = None
        else:
            geom = StripGeometry(cfg.q)
            tr = strip_laplace(params, geom, state, cfg.omega)
            ex, up, dn = tr.as_tuple()
        t_hit = hit_time_moments(params, geom, state, "any", order=1).mean
        q_col = math.inf if cfg.q is None else cfg.q
        table.add((cfg.vb, cfg.va, q_col, mu, cfg.omega, ex, up, dn, ex + up + dn, t_hit))
    return table


EXEC_COLUMNS = ("q", "mu", "mc_mean_x", "se_x", "mc_var_x", "se_var_x", "mc_mean_n", "se_n",
                "mc_mean_T", "se_T", "an_mean_x", "an_var_x", "an_mean_n", "an_mean_T",
                "asy_mean_x", "asy_mean_n", "censored_frac")

ROBUST_COLUMNS = ("dv", "resets") + EXEC_COLUMNS

FREE_COLUMNS = ("t", "mu", "mc_mean_x", "se_x", "mc_var_x", "se_var_x", "mc_mean_n", "se_n",
                "mc_var_n", "se_var_n", "asy_mean_x", "asy_var_x", "asy_mean_n", "asy_var_n")


def _exec_row(params: ModelParams, q: float, sim: SimConfig, analytic: bool,
              asy: tuple[float, float] | None) -> tuple:
    geom = StripGeometry(q)
    mc = summarize(simulate_execution(params, geom, sim))
    if analytic:
        an = exec_moments(params, geom)
        at = exec_time_moments(params, geom)
        an_vals = (an.mean_x, an.var_x, an.mean_n, at.mean_T)
    else:
        an_vals = (math.nan,) * 4
    asy_vals = asy if asy is not None else (math.nan, math.nan)
    return (q, params.mu, mc.mean_x, mc.se["mean_x"], mc.var_x, mc.se["var_x"],
            mc.mean_n, mc.se["mean_n"], mc.mean_T, mc.se["mean_T"],
            *an_vals, *asy_vals, mc.censored_frac)


def _asymptotic_columns(params: ModelParams, chi: float, q: float) -> tuple[float, float]:
    return large_q_impact(params, chi), large_q_hits(params, q)


def _exec_figures(group: str) -> list[dict]:
    return [
        _figure("mean_x", "q", [("mc_mean_x", "se_x"), ("an_mean_x", None),
                                ("asy_mean_x", None)], group, "<x_T>"),
        _figure("var_x", "q", [("mc_var_x", "se_var_x"), ("an_var_x", None)], group,
                "Var x_T"),
        _figure("mean_n", "q", [("mc_mean_n", "se_n"), ("an_mean_n", None),
                                ("asy_mean_n", None)], group, "<n_T>", yscale="log"),
        _figure("mean_T", "q", [("mc_mean_T", "se_T"), ("an_mean_T", None)], group,
                "<T>", yscale="log"),
    ]


def _run_exec(cfg: ExperimentConfig, table: ResultTable) -> None:
    table.figures = _exec_figures("mu")
    sim = cfg.sim(cfg.dv[0], cfg.resets[0])
    analytic = cfg.dv[0] == 0.0 and cfg.resets[0] == "deterministic"
    for mu in cfg.mu:
        params = cfg.params(mu)
        chi = asymmetry_chi(params)
        for q in cfg.grid():
            table.add(_exec_row(params, q, sim, analytic, _asymptotic_columns(params, chi, q)))


def _run_robust(cfg: ExperimentConfig, table: ResultTable) -> None:
    table.figures = _exec_figures("dv,resets")[:2]
    for mu in cfg.mu:
        params = cfg.params(mu)
        for resets in cfg.resets:
            for dv in cfg.dv:
                # analytic columns only exist for the model they describe
                analytic = dv == 0.0 and resets == "deterministic"
                sim = cfg.sim(dv, resets)
                for q in cfg.grid():
                    row = _exec_row(params, q, sim, analytic, None)
                    table.add((dv, resets) + row)


def _run_free(cfg: ExperimentConfig, table: ResultTable) -> None:
    table.figures = [
        _figure("mean_x", "t", [("mc_mean_x", "se_x"), ("asy_mean_x", None)], "mu",
                "<x_t>", xscale="log"),
        _figure("var_x", "t", [("mc_var_x", "se_var_x"), ("asy_var_x", None)], "mu",
                "Var x_t", xscale="log", yscale="log"),
        _figure("mean_n", "t", [("mc_mean_n", "se_n"), ("asy_mean_n", None)], "mu",
                "<n_t>", xscale="log", yscale="log"),
        _figure("var_n", "t", [("mc_var_n", "se_var_n"), ("asy_var_n", None)], "mu",
                "Var n_t", xscale="log", yscale="log"),
    ]
    times = cfg.sample_times()
    sim = replace(cfg.sim(cfg.dv[0], cfg.resets[0]), sample_times=times)
    for mu in cfg.mu:
        params = cfg.params(mu)
        out = simulate_free(params, sim)
        asy = free_time_asymptotics(params, times)
        for j, (sx, sn) in enumerate(snapshot_stats(out)):
            table.add((times[j], mu, sx.mean, sx.se_mean, sx.var, sx.se_var, sn.mean,
                       sn.se_mean, sn.var, sn.se_var, asy.mean_x[j], asy.var_x[j],
                       asy.mean_n[j], asy.var_n[j]))


_RUNNERS = {"free": (FREE_COLUMNS, _run_free), "exec": (EXEC_COLUMNS, _run_exec),
            "robust": (ROBUST_COLUMNS, _run_robust)}


def new_table(cfg: ExperimentConfig) -> ResultTable:
    columns = PROBE_COLUMNS if cfg.command == "probe" else _RUNNERS[cfg.command][0]
    meta = [("version", __version__), ("command", cfg.command), ("seed", str(cfg.seed))]
    meta += [(f"config.{k}", v) for k, v in cfg.echo()]
    return ResultTable(columns, metadata=meta)


def run_experiment(cfg: ExperimentConfig, table: ResultTable | None = None) -> ResultTable:
    """Run ``free``, ``exec`` or ``robust``.

    Rows are appended to ``table`` as they are produced, so a caller that
    passes its own table keeps the finished rows if a later point fails.
    """
    if cfg.command not in _RUNNERS:
        raise UsageError("command", f"not an experiment: {cfg.command}")
    table = table if table is not None else new_table(cfg)
    _RUNNERS[cfg.command][1](cfg, table)
    return table


# ---------------------------------------------------------------------------
# output


def render_csv(table: ResultTable) -> str:
    lines = [f"# {k}={v}" for k, v in table.metadata]
    if not table.complete:
        lines.append("# status=partial")
    lines.append(",".join(table.columns))
    lines += [",".join(_fmt(v) for v in row) for row in table.rows]
    return "\n".join(lines) + "\n"


def render_plot_script(table: ResultTable, csv_name: str) -> str:
    """Column-to-axis mappings, one block per figure."""
    lines = [f"data {csv_name}"]
    for fig in table.figures:
        lines.append("")
        lines.append(f"figure {fig['name']}")
        lines.append(f"  x {fig['x']} scale={fig['xscale']}")
        lines.append(f"  y label={fig['ylabel']} scale={fig['yscale']}")
        if fig["group"]:
            lines.append(f"  group {fig['group']}")
        for col, err in fig["series"]:
            style = "points" if err else "line"
            lines.append(f"  series {col}" + (f" error={err}" if err else "") + f" style={style}")
    return "\n".join(lines) + "\n"


def emit_outputs(table: ResultTable, cfg: ExperimentConfig) -> list[Path]:
    """Write ``<out>.csv`` and ``<out>.plot``."""
    base = Path(cfg.out)
    csv_path = base.with_name(base.name + ".csv")
    plot_path = base.with_name(base.name + ".plot")
    written = []
    for path, text in ((csv_path, render_csv(table)),
                       (plot_path, render_plot_script(table, csv_path.name))):
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            with open(path, "w", encoding="utf-8", newline="\n") as fh:
                fh.write(text)
        except OSError as exc:
            raise OSError(exc.errno, f"cannot write {path}: {exc.strerror}") from None
        written.append(path)
    return written


# ---------------------------------------------------------------------------
# entry point


def main(argv: Sequence[str] | None = None) -> int:
    try:
        cfg = parse_config(argv)
    except SystemExit as exc:  # argparse usage errors
        return EXIT_USAGE if exc.code else EXIT_OK
    except ParameterError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    table = new_table(cfg)
    code = EXIT_OK
    try:
        if cfg.command == "probe":
            probe = run_probe(cfg)
            table.rows = probe.rows
        else:
            run_experiment(cfg, table)
    except ParameterError as exc:
        print(f"error: {exc}", file=sys.stderr)
        table.complete, code = False, EXIT_USAGE
    except (ConvergenceError, DivergentSumError, InsufficientDataError,
            FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        table.complete, code = False, EXIT_NUMERIC
    if code != EXIT_OK and not table.rows:
        return code
    try:
        for path in emit_outputs(table, cfg):
            print(path)
    except (OSError, ParameterError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return code


if __name__ == "__main__":
    sys.exit(main())
