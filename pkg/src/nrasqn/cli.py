"""Command-line experiment runner for the minimal-surface benchmark.

Example::

    nrasqn --mesh 100x100 --coarse 10x10 --subdomains 4 --overlap 2 \\
        --method lbfgs --precond left --memory 1,3,5,7,10 --output results/

Each run writes ``<output>/<method>-<precond>_sd<n>_ov<d>_m<m>.csv`` and appends
one line to ``<output>/summary.csv``.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from nrasqn.decomposition import build_coarse, extend_overlap, partition
from nrasqn.driver import HISTORY_COLUMNS, METHODS, PRECONDS, ConvergenceRecord, OuterConfig, solve
from nrasqn.local_solvers import NewtonConfig
from nrasqn.nras import NrasConfig
from nrasqn.problem import MinimalSurface

EXIT_OK = 0
EXIT_NOT_CONVERGED = 2
EXIT_BAD_CONFIG = 64
EXIT_IO = 74

SUMMARY_COLUMNS = ("method", "precond", "memory", "iterations", "time_s", "converged")


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    mesh: tuple[int, int] = (200, 200)
    coarse: tuple[int, int] | None = (10, 10)
    subdomains: int = 8
    overlap: int = 2
    method: str = "lbfgs"
    precond: str = "left"
    memory: list[int] = field(default_factory=lambda: [7])
    rtol: float = 1e-6
    atol: float = 1e-7
    max_outer: int = 1000
    sub_atol: float = 1e-10
    sub_rtol: float = 1e-1
    sub_max_iter: int = 20
    coarse_atol: float = 1e-12
    coarse_rtol: float = 1e-10
    coarse_max_iter: int = 5
    linear_solver: str = "direct"
    output: str = "results"
    threads: int = 1
    timing: bool = True

    def validate(self):
        nx, ny = self.mesh
        if nx < 1 or ny < 1:
            raise ConfigError("mesh counts must be positive")
        if self.method not in METHODS:
            raise ConfigError(f"method must be one of {', '.join(METHODS)}")
        if self.precond not in PRECONDS:
            raise ConfigError(f"precond must be one of {', '.join(PRECONDS)}")
        if self.uses_nras:
            if self.coarse is not None:
                cx, cy = self.coarse
                if cx < 1 or cy < 1 or nx % cx or ny % cy:
                    raise ConfigError(f"coarse grid {cx}x{cy} is not nested in {nx}x{ny}")
            if not 1 <= self.subdomains <= (nx - 1) * (ny - 1):
                raise ConfigError("subdomains must be between 1 and the number of interior nodes")
        if self.overlap < 0:
            raise ConfigError("overlap must be non-negative")
        if not self.memory or min(self.memory) < 1:
            raise ConfigError("memory values must be positive")
        if min(self.rtol, self.atol, self.sub_atol, self.sub_rtol, self.coarse_atol, self.coarse_rtol) <= 0:
            raise ConfigError("tolerances must be positive")
        if min(self.sub_max_iter, self.coarse_max_iter, self.threads) < 1 or self.max_outer < 0:
            raise ConfigError("iteration caps and thread count must be positive")
        if self.linear_solver not in ("direct", "cg"):
            raise ConfigError("linear-solver must be 'direct' or 'cg'")
        if self.method == "tlnras" and self.coarse is None:
            raise ConfigError("tlnras needs a coarse grid")

    @property
    def uses_nras(self) -> bool:
        return self.method == "tlnras" or (self.method in ("lbfgs", "aa1") and self.precond != "none")

    def echo(self) -> str:
        parts = []
        for key, val in asdict(self).items():
            parts.append(f"{key}={_format_value(key, val)}")
        return "# " + " ".join(parts)


def _format_value(key, val) -> str:
    if key in ("mesh", "coarse"):
        return "none" if val is None else f"{val[0]}x{val[1]}"
    if key == "memory":
        return ",".join(str(m) for m in val)
    if isinstance(val, bool):
        return "true" if val else "false"
    return repr(val) if isinstance(val, float) else str(val)


def _grid(text: str) -> tuple[int, int] | None:
    if text.lower() == "none":
        return None
    try:
        a, _, b = text.lower().partition("x")
        return (int(a), int(b or a))
    except ValueError:
        raise ConfigError(f"grid must look like 200x200, got {text!r}") from None


def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {text!r}")


_PARSERS = {
    "mesh": _grid,
    "coarse": _grid,
    "memory": lambda t: [int(v) for v in str(t).split(",") if v.strip()],
    "timing": _bool,
}


def _coerce(key: str, text):
    kinds = {f.name: f.type for f in fields(RunConfig)}
    if key not in kinds:
        raise ConfigError(f"unknown configuration key {key!r}")
    try:
        if key in _PARSERS:
            return _PARSERS[key](text)
        if kinds[key] == "int":
            return int(text)
        if kinds[key] == "float":
            return float(text)
        return str(text)
    except ValueError as err:
        raise ConfigError(f"bad value for {key}: {text!r}") from err


def read_config_file(path) -> dict:
    """Parse flat ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, val = line.partition("=")
            if not sep:
                raise ConfigError(f"{path}:{lineno}: expected key=value")
            key = key.strip().replace("-", "_")
            out[key] = _coerce(key, val.strip())
    return out


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_BAD_CONFIG)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="nrasqn", description="NRAS-preconditioned quasi-Newton minimal-surface runs")
    p.add_argument("--config", help="flat key=value file; flags override it")
    p.add_argument("--mesh", help="fine grid, e.g. 200x200")
    p.add_argument("--coarse", help="coarse grid, e.g. 10x10, or 'none' for one-level NRAS")
    p.add_argument("--subdomains", help="number of subdomains")
    p.add_argument("--overlap", help="overlap in element layers")
    p.add_argument("--method", help="lbfgs, aa1, newton or tlnras")
    p.add_argument("--precond", help="none, left or right")
    p.add_argument("--memory", help="secant memory; a comma list runs a sweep")
    p.add_argument("--rtol", help="outer relative tolerance")
    p.add_argument("--atol", help="outer absolute tolerance")
    p.add_argument("--max-outer", help="outer iteration cap")
    p.add_argument("--sub-atol")
    p.add_argument("--sub-rtol")
    p.add_argument("--sub-max-iter")
    p.add_argument("--coarse-atol")
    p.add_argument("--coarse-rtol")
    p.add_argument("--coarse-max-iter")
    p.add_argument("--linear-solver", help="direct or cg")
    p.add_argument("--output", help="output directory")
    p.add_argument("--threads", help="threads for subdomain solves")
    p.add_argument("--no-timing", action="store_true", help="write 0 in time_s for byte-identical output")
    p.add_argument("-v", "--verbose", action="count", default=0)
    return p


def parse_config(argv=None) -> tuple[RunConfig, int]:
    args = build_parser().parse_args(argv)
    values = {}
    if args.config:
        try:
            values.update(read_config_file(args.config))
        except OSError as err:
            raise ConfigError(f"cannot read config file: {err}") from err
    for f in fields(RunConfig):
        raw = getattr(args, f.name, None)
        if raw is not None:
            values[f.name] = _coerce(f.name, raw)
    if args.no_timing:
        values["timing"] = False
    cfg = RunConfig(**values)
    cfg.validate()
    return cfg, args.verbose


def build_problem(cfg: RunConfig, memory: int):
    obj = MinimalSurface.on_grid(*cfg.mesh)
    nras = None
    if cfg.uses_nras:
        subs = extend_overlap(obj.mesh, partition(obj.mesh, cfg.subdomains), cfg.overlap)
        coarse = build_coarse(obj.mesh, *cfg.coarse) if cfg.coarse else None
        nras = NrasConfig(
            subs,
            coarse,
            subdomain_newton=NewtonConfig(
                cfg.sub_atol, cfg.sub_rtol, cfg.sub_max_iter, cfg.linear_solver
            ),
            coarse_newton=NewtonConfig(
                cfg.coarse_atol, cfg.coarse_rtol, cfg.coarse_max_iter, cfg.linear_solver
            ),
            threads=cfg.threads,
        )
    outer = OuterConfig(
        method=cfg.method,
        precond=cfg.precond,
        memory=memory,
        rtol=cfg.rtol,
        atol=cfg.atol,
        max_outer=cfg.max_outer,
        nras=nras,
        timing=cfg.timing,
    )
    return obj, outer


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    return repr(float(v)) if isinstance(v, float) else str(v)


def emit_history(record: ConvergenceRecord, path, header_comment: str | None = None) -> Path:
    """Write ``iter,r_norm,alpha,inner_iters,coarse_iters,time_s`` rows to ``path``."""
    if not record.rows:
        raise ValueError("empty convergence record")
    path = Path(path)
    lines = [] if header_comment is None else [header_comment]
    lines.append(",".join(HISTORY_COLUMNS))
    for row in record.rows:
        lines.append(",".join(_fmt(v) for v in row))
    path.write_text("\n".join(lines) + "\n")
    return path


def history_name(cfg: RunConfig, memory: int) -> str:
    if cfg.method == "newton":
        return "newton.csv"
    if cfg.method == "tlnras":
        return f"tlnras_sd{cfg.subdomains}_ov{cfg.overlap}.csv"
    if cfg.precond == "none":
        return f"{cfg.method}_m{memory}.csv"
    return f"{cfg.method}-{cfg.precond}_sd{cfg.subdomains}_ov{cfg.overlap}_m{memory}.csv"


def append_summary(path, row: dict, header_comment: str) -> None:
    path = Path(path)
    new = not path.exists()
    with open(path, "a") as fh:
        if new:
            fh.write(header_comment + "\n")
            fh.write(",".join(SUMMARY_COLUMNS) + "\n")
        fh.write(",".join(_fmt(row[c]) for c in SUMMARY_COLUMNS) + "\n")


def run(cfg: RunConfig) -> int:
    out = Path(cfg.output)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as err:
        print(f"nrasqn: cannot create output directory: {err}", file=sys.stderr)
        return EXIT_IO
    echo = cfg.echo()
    status = EXIT_OK
    for m in cfg.memory:
        obj, outer = build_problem(cfg, m)
        _, record = solve(obj, obj.initial_guess(), outer)
        elapsed = record.rows[-1][5]
        try:
            emit_history(record, out / history_name(cfg, m), echo)
            append_summary(
                out / "summary.csv",
                {
                    "method": cfg.method,
                    "precond": cfg.precond,
                    "memory": m,
                    "iterations": record.iterations,
                    "time_s": elapsed,
                    "converged": record.converged,
                },
                echo,
            )
        except OSError as err:
            print(f"nrasqn: cannot write results: {err}", file=sys.stderr)
            return EXIT_IO
        print(
            f"{cfg.method:>6} {cfg.precond:>5} m={m:<3d} iterations={record.iterations:<5d} "
            f"|F|={record.residuals[-1]:.3e} {record.status}"
        )
        if not record.converged:
            status = EXIT_NOT_CONVERGED
    return status


def main(argv=None) -> int:
    try:
        cfg, verbose = parse_config(argv)
    except ConfigError as err:
        print(f"nrasqn: {err}", file=sys.stderr)
        return EXIT_BAD_CONFIG
    logging.basicConfig(
        level=logging.WARNING - 10 * min(verbose, 2), format="%(name)s: %(message)s"
    )
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
