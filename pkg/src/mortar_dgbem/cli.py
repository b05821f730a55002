"""Command-line driver for the convergence study, the p-study and the invariant ledger.

    python -m mortar_dgbem --mode converge --k-multiple 1 --p 1 --levels 1,2,3
    python -m mortar_dgbem --mode p-study --level 2 --p 1,2,3 --k-multiple 2
    python -m mortar_dgbem --mode invariants
"""

from __future__ import annotations

import argparse
import csv
import io
import logging
import math
import os
import sys
import tempfile
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .backend import configure_threads
from .dg_forms import DeltaClippedWarning, DeltaRangeError, FluxParameters
from .linalg_solve import ConvergenceError, SingularSystemError
from .verify_harness import ErrorReport, eoc_table, run_case, run_invariant_suite

log = logging.getLogger("mortar_dgbem")

CSV_HEADER = ("k", "order", "num_refines", "errltwo", "errhone", "errm", "errphi")
MODES = ("converge", "invariants", "p-study")
SENTINEL = "nan"


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    k_multiples: list = field(default_factory=lambda: [1.0, 2.0])
    ps: list = field(default_factory=lambda: [1, 2, 3])
    levels: list = field(default_factory=lambda: [0, 1, 2, 3])
    a: float = 10.0
    b: float = 0.1
    d: float = 0.1
    delta_policy: str = "clip"
    solver: str = "lu"
    gmres_tol: float = 1e-10
    gmres_restart: int = 100
    seed: int = 0
    output: str = "output_dg2.csv"
    mode: str = "converge"

    @property
    def ks(self) -> list:
        return [m * math.sqrt(3) * math.pi for m in self.k_multiples]

    def params(self) -> FluxParameters:
        return FluxParameters(self.a, self.b, self.d, self.delta_policy)

    def validate(self) -> "RunConfig":
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {', '.join(MODES)}")
        if not self.levels:
            raise ConfigError("levels must be nonempty")
        if any(lv < 0 for lv in self.levels):
            raise ConfigError("levels must be >= 0")
        if any(p < 1 for p in self.ps):
            raise ConfigError("polynomial degrees must be >= 1")
        if any(k <= 0 for k in self.k_multiples):
            raise ConfigError("wave numbers must be positive")
        if self.solver not in ("lu", "gmres"):
            raise ConfigError("solver must be 'lu' or 'gmres'")
        if self.gmres_tol <= 0:
            raise ConfigError("gmres_tol must be positive")
        try:
            params = self.params()
            # every cube tet at level L has diameter 2√3 / 2^L
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", DeltaClippedWarning)
                for k in self.ks:
                    for p in self.ps:
                        params.delta(2 * math.sqrt(3) / 2.0 ** min(self.levels), p, k)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        return self


def _parse_list(text: str, cast):
    return [cast(t) for t in str(text).replace(" ", "").split(",") if t]


_CASTS = {
    "k_multiples": lambda s: _parse_list(s, float),
    "ps": lambda s: _parse_list(s, int),
    "levels": lambda s: _parse_list(s, int),
    "a": float, "b": float, "d": float,
    "delta_policy": str, "solver": str, "gmres_tol": float, "gmres_restart": int,
    "seed": int, "output": str, "mode": str,
}
_ALIASES = {"k": "k_multiples", "k_multiple": "k_multiples", "p": "ps", "order": "ps",
            "level": "levels", "num_refines": "levels"}


def _set(cfg: RunConfig, key: str, value: str, where: str) -> RunConfig:
    name = _ALIASES.get(key.replace("-", "_"), key.replace("-", "_"))
    if name not in _CASTS:
        raise ConfigError(f"{where}: unknown key {key!r}")
    try:
        return replace(cfg, **{name: _CASTS[name](value)})
    except ValueError as exc:
        raise ConfigError(f"{where}: bad value for {key!r}: {exc}") from None


def load_config_file(path, cfg: RunConfig | None = None) -> RunConfig:
    """``key = value`` lines; ``#`` starts a comment."""
    cfg = cfg or RunConfig()
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        cfg = _set(cfg, key, value, f"{path}:{lineno}")
    return cfg


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="mortar-dgbem", description=__doc__.split("\n\n")[0],
                                 formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--mode", choices=MODES)
    ap.add_argument("--config", action="append", default=[], metavar="FILE|KEY=VALUE",
                    help="key=value override or a file of key = value lines (repeatable)")
    ap.add_argument("--k-multiple", help="wave numbers as multiples of sqrt(3) pi, comma separated")
    ap.add_argument("--p", help="polynomial degrees, comma separated")
    ap.add_argument("--levels", help="refinement levels, comma separated")
    ap.add_argument("--level", type=int, help="single refinement level (p-study)")
    ap.add_argument("--solver", choices=("lu", "gmres"))
    ap.add_argument("--gmres-tol", type=float)
    ap.add_argument("--gmres-restart", type=int)
    ap.add_argument("--seed", type=int)
    ap.add_argument("--output", help="CSV path (a .rates file is written next to it)")
    ap.add_argument("--threads", type=int, help="numba worker threads")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def config_from_args(ns: argparse.Namespace) -> RunConfig:
    cfg = RunConfig()
    for item in ns.config:
        if "=" in item and not os.path.exists(item):
            key, value = item.split("=", 1)
            cfg = _set(cfg, key.strip(), value.strip(), "--config")
        else:
            cfg = load_config_file(item, cfg)
    pairs = {"mode": ns.mode, "k_multiples": ns.k_multiple, "ps": ns.p, "levels": ns.levels,
             "solver": ns.solver, "gmres_tol": ns.gmres_tol, "gmres_restart": ns.gmres_restart,
             "seed": ns.seed, "output": ns.output}
    for key, value in pairs.items():
        if value is not None:
            cfg = _set(cfg, key, str(value), f"--{key}")
    if ns.level is not None:
        cfg = replace(cfg, levels=[ns.level])
    return cfg.validate()


# -- output ----------------------------------------------------------------------

def _fmt(x: float) -> str:
    return repr(float(x)) if np.isfinite(x) else SENTINEL


def csv_text(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in rows:
        w.writerow(r)
    return buf.getvalue()


def write_atomic(path, text: str) -> None:
    """Write via a temporary file in the same directory and rename over ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def report_row(rep: ErrorReport) -> tuple:
    return (_fmt(rep.k), str(rep.p), str(rep.level), _fmt(rep.l2), _fmt(rep.h1),
            _fmt(rep.m_raw), _fmt(rep.phi_raw))


def rates_text(reports: list[ErrorReport]) -> str:
    """gnuplot-friendly blocks: one per (k, p), surface columns with their h weights."""
    out = ["# k order from to eoc_l2 eoc_h1 eoc_m_weighted eoc_phi_weighted"]
    keys = sorted({(r.k, r.p) for r in reports})
    for k, p in keys:
        sub = [r for r in reports if r.k == k and r.p == p]
        if len(sub) < 2:
            continue
        tab = eoc_table(sub)
        for i in range(len(tab.levels) - 1):
            vals = " ".join(f"{tab.rates[c][i]:.4f}" for c in ("l2", "h1", "m", "phi"))
            out.append(f"{k!r} {p} {tab.levels[i]} {tab.levels[i + 1]} {vals}")
        out.append("")
    return "\n".join(out) + "\n"


# -- driver ----------------------------------------------------------------------

def _cases(cfg: RunConfig):
    for k in cfg.ks:
        for p in cfg.ps:
            for level in cfg.levels:
                yield k, p, level


def run(cfg: RunConfig, out=None) -> int:
    """Execute ``cfg``; returns the process exit code."""
    out = out or sys.stdout
    cfg.validate()
    params = cfg.params()
    np.random.seed(cfg.seed)  # nothing random in converge runs; kept for reproducible extensions
    if cfg.mode == "invariants":
        ledger = run_invariant_suite(levels=cfg.levels if cfg.levels != RunConfig().levels else (0, 1),
                                     ps=cfg.ps if cfg.ps != RunConfig().ps else (1,),
                                     ks=cfg.ks[:1], seed=cfg.seed, params=params,
                                     log=lambda s: log.info(s))
        print(ledger.format(), file=out)
        print("invariants: " + ("all passed" if ledger.passed else f"{len(ledger.failures())} failed"),
              file=out)
        return 0 if ledger.passed else 1

    rows, reports, failed = [], [], False
    for k, p, level in _cases(cfg):
        log.info("k=%.6g p=%d level=%d", k, p, level)
        try:
            res = run_case(k, p, level, params, cfg.solver, cfg.gmres_tol, cfg.gmres_restart)
        except (SingularSystemError, ConvergenceError, DeltaRangeError, np.linalg.LinAlgError) as exc:
            print(f"k={k:.6g} p={p} level={level}: solve failed: {exc}", file=out)
            rows.append((_fmt(k), str(p), str(level)) + (SENTINEL,) * 4)
            failed = True
            continue
        rep = res.errors
        reports.append(rep)
        rows.append(report_row(rep))
        print(f"k={k:.6g} p={p} level={level} N={res.size} t={res.seconds:.1f}s "
              f"L2={rep.l2:.4e} H1={rep.h1:.4e} m={rep.m:.4e} phi={rep.phi:.4e} "
              f"residual={res.solve.residual:.1e}", file=out)
    write_atomic(cfg.output, csv_text(rows))
    write_atomic(Path(str(cfg.output) + ".rates"), rates_text(reports))
    for k in cfg.ks:
        for p in cfg.ps:
            sub = [r for r in reports if r.k == k and r.p == p]
            if len(sub) > 1:
                print(f"rates k={k:.6g} p={p}\n{eoc_table(sub).format()}", file=out)
    return 1 if failed else 0


def main(argv=None) -> int:
    ns = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if ns.verbose else logging.WARNING,
                        format="%(asctime)s %(message)s")
    configure_threads(ns.threads)  # falls back to MORTAR_DGBEM_THREADS
    try:
        cfg = config_from_args(ns)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    with warnings.catch_warnings():
        warnings.simplefilter("ignore" if not ns.verbose else "default", DeltaClippedWarning)
        return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
