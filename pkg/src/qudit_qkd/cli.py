"""Command-line front end.

Exit codes: 0 success, 1 failed check or runtime error, 2 usage or config error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

from . import __version__
from . import config as cfgmod
from .bases import (
    CHI3,
    PSI2,
    BasisId,
    basis_states,
    completion_solver,
    contains_basis,
    distinct_rays,
    grid_counterexamples,
    orthonormal_quadruples,
    verify_all_families,
)
from .errors import ConfigError, QKDError, UnknownBasis
from .optics import SUPPORTED, convention_search
from .protocol import SessionConfig, run_session, write_trace_csv

log = logging.getLogger("qudit_qkd")

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2

SWEEP_PARAMS = {
    "depolarizing_prob": "channel.depolarizing_prob",
    "transmittance": "channel.transmittance",
    "mu": "source.mu",
    "sample_fraction": "sample_fraction",
}
SWEEP_COLUMNS = (
    "value", "qber", "sifted_fraction", "bits_per_detection",
    "verdict_individual", "verdict_coherent", "final_key_bits",
)


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


@dataclass
class RunManifest:
    command: str
    seed: int | None = None
    config_path: str | None = None
    config: dict | None = None
    outputs: list[str] = field(default_factory=list)
    started: str = field(default_factory=_now)
    finished: str | None = None

    def close(self) -> dict:
        self.finished = _now()
        return {
            "tool_version": __version__,
            "command": self.command,
            "seed": self.seed,
            "config_path": self.config_path,
            "config": self.config,
            "outputs": self.outputs,
            # the only non-reproducible bytes in any report
            "timestamps": {"started": self.started, "finished": self.finished},
        }


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=False) + "\n"


def _write_text(path: str, text: str) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="\n") as fh:
        fh.write(text)


def _parse_bases(text: str) -> list[BasisId]:
    try:
        bases = [BasisId.parse(t) for t in text.split(",") if t.strip()]
    except UnknownBasis as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None
    bad = [b.name for b in bases if b not in SUPPORTED]
    if bad or not bases:
        raise argparse.ArgumentTypeError(
            f"unsupported basis {','.join(bad) or text!r}; choose from "
            + ",".join(b.name for b in SUPPORTED)
        )
    return bases


def _parse_values(text: str) -> list[float]:
    """``a,b,c`` or an inclusive range ``start:stop:step``."""
    try:
        if ":" in text:
            start, stop, step = (float(x) for x in text.split(":"))
            n = int(round((stop - start) / step))
            return [round(start + k * step, 12) for k in range(n + 1)]
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"cannot parse values {text!r}") from None


# --- verify-bases ------------------------------------------------------------


def _corrupted_fixture() -> dict:
    states = list(basis_states(PSI2))
    states[1] = states[0]  # duplicate state: breaks orthonormality and unbiasedness
    return {PSI2: tuple(states)}


def cmd_verify_bases(args) -> int:
    manifest = RunManifest("verify-bases", seed=args.seed)
    families = verify_all_families(states=_corrupted_fixture() if args.inject_fault else None)
    candidates = completion_solver(grid=args.grid)
    rays = distinct_rays(candidates)
    counter = grid_counterexamples(grid=args.grid)
    completion = {
        "grid": args.grid,
        "accepted_candidates": len(candidates),
        "distinct_rays": len(rays),
        "orthonormal_quadruples": len(orthonormal_quadruples(rays)),
        "counterexamples": counter,
        "contains_chi3": contains_basis(rays, CHI3),
    }
    completion["pass"] = counter == 0 and completion["contains_chi3"]
    failures = families.failures()
    if counter:
        failures.append(f"completion:{counter} counterexamples")
    if not completion["contains_chi3"]:
        failures.append("completion:chi3 missing")
    report = {
        "pass": not failures,
        "families": families.to_dict(),
        "completion": completion,
        "manifest": manifest.close(),
    }
    if args.out:
        manifest.outputs.append(args.out)
        report["manifest"] = manifest.close()
        _write_text(args.out, _dump(report))
    if args.json:
        sys.stdout.write(_dump(report))
    else:
        for r in families.psi_pairs + families.chi_pairs:
            print(f"{r.a.name}-{r.b.name}: {'PASS' if r.ok else 'FAIL'}")
        print(f"psi/chi coincidences: {len(families.coincidences)}")
        print(f"completion: {len(rays)} rays, {counter} counterexamples, chi3 found={completion['contains_chi3']}")
    if failures:
        print(f"FAILED: {failures[0]}", file=sys.stderr)
        return EXIT_FAIL
    return EXIT_OK


# --- convention-search ---------------------------------------------------------


def cmd_convention_search(args) -> int:
    manifest = RunManifest("convention-search", seed=args.seed)
    result = convention_search(args.bases, element_phases=args.element_phases)
    report = result.to_dict()
    if args.out:
        manifest.outputs.append(args.out)
    report["manifest"] = manifest.close()
    if args.out:
        _write_text(args.out, _dump(report))
    if args.json:
        sys.stdout.write(_dump(report))
    else:
        for b, v in result.verdicts.items():
            extra = f" permutation={v.permutation}" if v.verdict == "PERMUTED" else ""
            print(f"{b.name}: {v.verdict}{extra}")
    if not result.ok:
        failed = [b.name for b, v in result.verdicts.items() if v.verdict == "FAILED"]
        print(f"FAILED: {','.join(failed)}", file=sys.stderr)
        return EXIT_FAIL
    return EXIT_OK


# --- run / sweep ---------------------------------------------------------------


def _session_from_args(args) -> SessionConfig:
    cfg = cfgmod.load(args.config) if getattr(args, "config", None) else SessionConfig()
    eve = getattr(args, "eve", None)
    return cfgmod.with_overrides(
        cfg,
        seed=args.seed,
        n_pulses=getattr(args, "n_pulses", None),
        **{"eve.kind": eve.replace("-", "_") if eve else None},
    )


def cmd_run(args) -> int:
    cfg = _session_from_args(args)
    manifest = RunManifest("run", seed=cfg.seed, config_path=args.config, config=cfg.to_dict())
    trace = [] if args.trace else None
    stats = run_session(cfg, trace=trace)
    if args.trace:
        buf = io.StringIO()
        write_trace_csv(trace, buf)
        _write_text(args.trace, buf.getvalue())
        manifest.outputs.append(args.trace)
    sys.stdout.write(_dump({"stats": stats.to_dict(), "manifest": manifest.close()}))
    return EXIT_OK


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        return f"{x:.6f}"
    return str(x)


def _sweep_point(job):
    cfg, value = job
    s = run_session(cfg)
    return [f"{value:g}", _fmt(s.qber), _fmt(s.sifted_fraction), _fmt(s.raw_bits_per_detection),
            s.verdict_individual, s.verdict_coherent, str(s.final_key_bits)]


def cmd_sweep(args) -> int:
    base = _session_from_args(args)
    target = SWEEP_PARAMS[args.param]
    jobs = []
    for k, value in enumerate(args.values):
        changes = {target: value, "seed": base.seed + k}
        if args.param == "mu":
            changes["source.kind"] = "wcp"
        jobs.append((cfgmod.with_overrides(base, **changes), value))
    if args.jobs > 1:
        with ProcessPoolExecutor(args.jobs) as pool:
            rows = list(pool.map(_sweep_point, jobs))  # map keeps input order
    else:
        rows = [_sweep_point(j) for j in jobs]

    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SWEEP_COLUMNS)
    w.writerows(rows)
    if args.out:
        _write_text(args.out, buf.getvalue())
        manifest = RunManifest("sweep", seed=base.seed, config_path=args.config, config=base.to_dict())
        manifest.outputs.append(args.out)
        _write_text(args.out + ".manifest.json", _dump({"param": args.param, "values": args.values,
                                                         "manifest": manifest.close()}))
    else:
        sys.stdout.write(buf.getvalue())
    return EXIT_OK


# --- entry point ---------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="qudit-qkd", description="4-level polarization/time-bin QKD simulator")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("--seed", type=int, default=None, help="override the session seed (u64)")
    p.add_argument("--json", action="store_true", help="print the full JSON report")
    p.add_argument("--trace", metavar="PATH", help="per-pulse CSV trace (run only)")
    sub = p.add_subparsers(dest="command", required=True)

    vb = sub.add_parser("verify-bases", help="check MUB properties and the completion solver")
    vb.add_argument("--grid", type=int, default=8, help="points per full turn (8 = pi/4 steps)")
    vb.add_argument("--out", help="also write the JSON report here")
    vb.add_argument("--inject-fault", action="store_true", help="negative control: corrupt one basis")
    vb.set_defaults(func=cmd_verify_bases)

    cs = sub.add_parser("convention-search", help="match receiver chains to the reference detection tables")
    cs.add_argument("--bases", type=_parse_bases, default=list(SUPPORTED),
                    help="comma list from psi2,psi4,chi1,chi2,chi3")
    cs.add_argument("--element-phases", action="store_true", help="also search per-element global phases")
    cs.add_argument("--out", help="also write the JSON report here")
    cs.set_defaults(func=cmd_convention_search)

    run = sub.add_parser("run", help="run one session from a JSON config")
    run.add_argument("config")
    run.add_argument("--eve", choices=["none", "intercept-resend"])
    run.add_argument("--n-pulses", type=int)
    run.set_defaults(func=cmd_run)

    sw = sub.add_parser("sweep", help="one session per parameter value, CSV out")
    sw.add_argument("--param", required=True, choices=sorted(SWEEP_PARAMS))
    sw.add_argument("--values", required=True, type=_parse_values,
                    help="comma list or inclusive start:stop:step")
    sw.add_argument("--config")
    sw.add_argument("--eve", choices=["none", "intercept-resend"])
    sw.add_argument("--n-pulses", type=int)
    sw.add_argument("--out", help="CSV path (default stdout)")
    sw.add_argument("--jobs", type=int, default=1)
    sw.set_defaults(func=cmd_sweep)
    return p


def _setup_logging() -> None:
    level = os.environ.get("QKD_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")


def main(argv=None) -> int:
    _setup_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    if args.trace and args.command != "run":
        parser.print_usage(sys.stderr)
        print("--trace is only valid with 'run'", file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except QKDError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL
    except Exception as exc:  # noqa: BLE001 - exit code contract
        log.debug("unhandled", exc_info=True)
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
