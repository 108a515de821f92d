"""Batch front door: ``homoclinic <command> [--config F] [--out D] [--seed S]``.

Commands and the files they write into the output directory:

* ``check``        conditions.json
* ``spectrum``     eigenvalues.csv, summary.json
* ``solve``        solve.json, solution.csv, history.csv
* ``multi-solve``  multi_solve.json, solution_<k>.csv, history_<k>.csv
* ``verify``       verification.json (verifies ``solution.csv`` if present, else solves first)

Failures exit nonzero and leave ``error.json`` behind.
"""
from __future__ import annotations

import argparse
import logging
import sys
import traceback
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import export
from .config import ConfigError, RunConfig, parse_config
from .minimax import SolveReport, mountain_pass_solve, multi_solve, prepare
from .problem import attach_spectrum, check_conditions
from .spectrum import check_W4
from .verify import WorkspaceCache, ode_residual, refine_and_compare

log = logging.getLogger("homoclinic")

COMMANDS = ("check", "spectrum", "solve", "multi-solve", "verify")


def _header(cfg: RunConfig) -> dict:
    return {"problem": {"name": cfg.problem, **cfg.problem_params},
            "grid": {"T": cfg.T, "n": cfg.n, "h": cfg.grid().h},
            "seed": cfg.solver.seed}


def cmd_check(cfg: RunConfig, out: Path):
    spec = cfg.make_problem()
    grid = cfg.grid()
    ws = prepare(spec, grid, cfg.check.plan())
    report = check_conditions(spec, cfg.check.plan(), spectrum=ws.dec, seed=cfg.solver.seed)
    attach_spectrum(report, ws.dec, seed=cfg.solver.seed)
    w4 = None
    if spec.potential.M is not None:
        cert = check_W4(spec, grid, cfg.check.W4_tol)
        w4 = {"min_abs_eig": cert.min_abs_eig, "holds": cert.holds,
              "min_abs_eig_refined": cert.min_abs_eig_refined,
              "holds_refined": cert.holds_refined, "stable": cert.stable, "tol": cert.tol}
    doc = _header(cfg)
    doc.update({"conditions": report.summary(), "W4": w4,
                "ell": ws.split.ell, "n_minus": ws.dec.n_minus, "n_zero": ws.dec.n_zero})
    export.write_json(out / "conditions.json", doc)


def cmd_spectrum(cfg: RunConfig, out: Path):
    ws = prepare(cfg.make_problem(), cfg.grid(), cfg.check.plan())
    lam = ws.dec.eigenvalues
    export.write_csv(out / "eigenvalues.csv", ["index", "lambda"],
                     ((i, v) for i, v in enumerate(lam)))
    doc = _header(cfg)
    doc.update({"n_minus": ws.dec.n_minus, "n_zero": ws.dec.n_zero, "ell": ws.split.ell,
                "m0": ws.m0, "zero_tol": ws.split.zero_tol, "count": int(lam.size),
                "lowest": [float(v) for v in lam[:10]]})
    export.write_json(out / "summary.json", doc)


def _write_report(out: Path, stem: str, report: SolveReport, grid, extra: Optional[dict] = None):
    export.write_solution_csv(out / f"solution{stem}.csv", grid, report.solution)
    export.write_csv(out / f"history{stem}.csv", ["iteration", "phi", "grad_norm"], report.history)
    doc = report.to_dict()
    doc.update(extra or {})
    return doc


def cmd_solve(cfg: RunConfig, out: Path):
    ws = prepare(cfg.make_problem(), cfg.grid(), cfg.check.plan())
    report = mountain_pass_solve(ws, cfg.solver)
    doc = _header(cfg)
    doc.update({"ell": ws.split.ell, "report": _write_report(out, "", report, ws.grid)})
    export.write_json(out / "solve.json", doc)
    return 0 if report.converged else 1


def cmd_multi_solve(cfg: RunConfig, out: Path):
    ws = prepare(cfg.make_problem(), cfg.grid(), cfg.check.plan())
    result = multi_solve(ws, cfg.solver)
    summary = result.to_dict()
    for k, (r, d) in enumerate(zip(result.distinct, summary["solutions"]), start=1):
        d.update(_write_report(out, f"_{k}", r, ws.grid, {"file": f"solution_{k}.csv"}))
    doc = _header(cfg)
    doc.update(summary)
    export.write_json(out / "multi_solve.json", doc)
    return 0 if result.found >= 1 else 1


def _load_or_solve(cfg: RunConfig, ws, out: Path) -> SolveReport:
    path = out / "solution.csv"
    if not path.exists():
        log.info("no %s, solving first", path)
        return mountain_pass_solve(ws, cfg.solver)
    t, x = export.read_solution_csv(path)
    grid = ws.grid
    if x.shape != (grid.n, grid.N) or not np.allclose(t, grid.nodes, rtol=0, atol=1e-9 * grid.T):
        raise ValueError(f"{path} does not live on the configured grid (T={grid.T}, n={grid.n})")
    c = ws.fn.coeffs(x.ravel())
    return mountain_pass_solve(ws, cfg.solver, warm_start=c, start_label="file")


def cmd_verify(cfg: RunConfig, out: Path):
    spec = cfg.make_problem()
    ws = prepare(spec, cfg.grid(), cfg.check.plan())
    report = _load_or_solve(cfg, ws, out)
    ver = refine_and_compare(report, ws, cfg.solver, cfg.verify, WorkspaceCache(spec, ws.m0))
    doc = _header(cfg)
    doc.update({"solve": report.to_dict(), "verification": ver.to_dict(),
                "passed": ver.passed})
    export.write_json(out / "verification.json", doc)
    return 0 if ver.passed else 1


HANDLERS = {"check": cmd_check, "spectrum": cmd_spectrum, "solve": cmd_solve,
            "multi-solve": cmd_multi_solve, "verify": cmd_verify}


def _origin(exc: BaseException) -> str:
    tb = traceback.extract_tb(exc.__traceback__)
    for frame in reversed(tb):
        if "homoclinic" in frame.filename:
            return f"{Path(frame.filename).stem}:{frame.name}"
    return "cli"


def write_error(out: Path, command: str, exc: BaseException):
    export.write_json(out / "error.json", {
        "command": command,
        "error": type(exc).__name__,
        "origin": "config" if isinstance(exc, ConfigError) else _origin(exc),
        "message": str(exc),
    })


def run(command: str, cfg: RunConfig, out: Optional[Path] = None) -> int:
    """Run one command; returns the process exit status."""
    out = Path(out if out is not None else cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    if command not in HANDLERS:
        write_error(out, command, ValueError(f"unknown command {command!r}"))
        return 2
    try:
        status = HANDLERS[command](cfg, out)
    except Exception as exc:  # surfaced as error.json
        log.error("%s failed: %s", command, exc)
        write_error(out, command, exc)
        return 1
    return int(status or 0)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="homoclinic", description=__doc__.splitlines()[0])
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", type=Path, help="YAML run configuration")
    p.add_argument("--out", type=Path, help="output directory (overrides output.dir)")
    p.add_argument("--seed", type=int, help="override solver.seed")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    text = ""
    try:
        if args.config is not None:
            text = args.config.read_text(encoding="utf-8")
        cfg = parse_config(text, seed=args.seed)
    except (OSError, ConfigError) as exc:
        out = args.out or Path("out")
        out.mkdir(parents=True, exist_ok=True)
        write_error(out, args.command, exc if isinstance(exc, ConfigError) else ConfigError(str(exc)))
        print(f"homoclinic: {exc}", file=sys.stderr)
        return 2
    return run(args.command, cfg, args.out)


if __name__ == "__main__":
    sys.exit(main())
