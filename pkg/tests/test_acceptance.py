"""Acceptance criteria, each at its stated tolerance.

Every test records one PASS/FAIL line in RESULTS; the lines are printed in
the pytest terminal summary, or directly when this file is run as a script.
"""

import itertools
import json
import math
import subprocess
import sys
from pathlib import Path

import numpy as np
from scipy import stats

from oracles import intercept_resend_qber
from qudit_qkd.bases import (
    CHI1,
    CHI2,
    CHI3,
    CHI_BASES,
    PSI2,
    PSI4,
    PSI_BASES,
    basis_states,
    completion_solver,
    contains_basis,
    distinct_rays,
    grid_counterexamples,
    verify_all_families,
)
from qudit_qkd.core import PolTimeState, outcome_distribution, overlap2, sample_outcome
from qudit_qkd.optics import (
    DETECTION_CELLS,
    SUPPORTED,
    TRANSMITTER_TABLE,
    build_chain,
    convention_search,
    fidelity,
    run_chain,
    transmit,
    transmit_from_table,
    transmit_physical,
)
from qudit_qkd.protocol import ChannelConfig, EveConfig, SessionConfig, run_session

ROOT = Path(__file__).resolve().parents[1]
ARTIFACT = ROOT / "reports" / "convention_search.json"
RESULTS: dict[int, str] = {}


def record(n: int, ok: bool, text: str) -> None:
    RESULTS[n] = f"{'PASS' if ok else 'FAIL'} criterion {n}: {text}"
    assert ok, RESULTS[n]


def test_1_mub_suite():
    rep = verify_all_families(tol=1e-12)
    worst = 0.0
    for fam in (PSI_BASES, CHI_BASES):
        m = np.array([s.vector for b in fam for s in basis_states(b)])
        g = np.abs(m.conj() @ m.T) ** 2
        n = len(fam)
        expect = np.kron(np.ones((n, n)) - np.eye(n), np.full((4, 4), 0.25)) + np.eye(4 * n)
        worst = max(worst, float(np.max(np.abs(g - expect))))
    ok = rep.ok and worst <= 1e-12 and not rep.coincidences
    record(1, ok, f"20 psi + 12 chi states, max |overlap^2 - target| = {worst:.1e}, "
                  f"{len(rep.coincidences)} psi/chi coincidences")


def test_2_detection_determinism():
    rep = convention_search()
    worst = 1.0
    injective = True
    for b in SUPPORTED:
        chain = build_chain(b, rep.best)
        cells = []
        for s in basis_states(b):
            ev, p = max(outcome_distribution(run_chain(chain, s)).items(), key=lambda kv: kv[1])
            worst = min(worst, p)
            cells.append(ev)
        injective &= len(set(cells)) == 4
    verdicts = {b.name: v.verdict for b, v in rep.verdicts.items()}
    committed = json.loads(ARTIFACT.read_text()) if ARTIFACT.exists() else None
    fresh = rep.to_dict()
    same = committed is not None and all(committed[k] == fresh[k] for k in fresh)
    ok = rep.ok and injective and worst >= 1 - 1e-9 and same
    record(2, ok, f"verdicts {verdicts}, min click probability {worst:.12f}, "
                  f"committed report {'matches' if same else 'MISSING or stale'}")


CROSS = [(PSI2, PSI4), (PSI4, PSI2)] + list(itertools.permutations((CHI1, CHI2, CHI3), 2))


def test_3_wrong_basis_uniformity():
    rng = np.random.default_rng(2024)
    worst_exact, worst_p = 0.0, 1.0
    cells_ok = True
    n = 100_000
    for measure, prep in CROSS:
        chain = build_chain(measure)
        outs = [run_chain(chain, s) for s in basis_states(prep)]
        for o in outs:
            dist = outcome_distribution(o)
            cells_ok &= set(dist) == DETECTION_CELLS
            worst_exact = max(worst_exact, max(abs(p - 0.25) for p in dist.values()))
        picks = rng.integers(0, 4, n)
        counts = dict.fromkeys(DETECTION_CELLS, 0)
        for k in picks:
            counts[sample_outcome(outs[k], rng)] += 1
        worst_p = min(worst_p, stats.chisquare(list(counts.values())).pvalue)
    ok = cells_ok and worst_exact <= 1e-9 and worst_p > 1e-3
    record(3, ok, f"{len(CROSS)} cross pairs, max |p - 1/4| = {worst_exact:.1e}, "
                  f"min chi-square p-value at N=1e5 = {worst_p:.3f}")


def test_4_completion_solver():
    rays = distinct_rays(completion_solver(grid=8))
    counter = grid_counterexamples(grid=8)
    found = contains_basis(rays, CHI3)
    record(4, counter == 0 and found,
           f"grid pi/4: {len(rays)} accepted rays, {counter} counterexamples, chi3 contained={found}")


def test_5_protocol_rates():
    s = run_session(SessionConfig(n_pulses=10_000, seed=5))
    ok = s.qber == 0 and abs(s.sifted_fraction - 0.5) <= 0.015 and abs(s.raw_bits_per_detection - 1.0) <= 0.03
    record(5, ok, f"N=1e4 qber={s.qber}, sifted/detected={s.sifted_fraction:.4f}, "
                  f"bits/detection={s.raw_bits_per_detection:.4f}")


def test_6_attack_detection():
    exact = intercept_resend_qber((PSI2, PSI4))
    s = run_session(SessionConfig(n_pulses=100_000, seed=6, eve=EveConfig(kind="intercept_resend")))
    ok = (abs(exact - 0.375) <= 1e-12 and abs(s.qber - 0.375) <= 0.01
          and s.verdict_individual == "fail" and s.verdict_coherent == "fail")
    record(6, ok, f"oracle {exact:.12f}, N=1e5 qber={s.qber:.4f}, "
                  f"verdicts {s.verdict_individual}/{s.verdict_coherent}")


def test_7_noise_composition():
    ps = [round(0.05 * k, 2) for k in range(9)]
    worst = 0.0
    flip_ok = True
    flipped = None
    for k, p in enumerate(ps):
        s = run_session(SessionConfig(n_pulses=100_000, seed=700 + k, channel=ChannelConfig(depolarizing_prob=p)))
        worst = max(worst, abs(s.qber - 0.75 * p))
        flip_ok &= (s.verdict_individual == "fail") == (s.qber >= 0.25)
        if flipped is None and s.qber >= 0.25:
            flipped = p
    ok = worst <= 0.01 and flip_ok and flipped is not None
    record(7, ok, f"p=0..0.4 step 0.05, max |qber - 0.75p| = {worst:.4f}, individual verdict flips at p={flipped}")


def test_8_transmitter():
    h = PolTimeState.cell("h", 0)
    v1 = PolTimeState.cell("v", 1)
    f0 = fidelity(transmit_physical("d-rotate", 0.0, "identity"), (h + v1) / math.sqrt(2))
    f1 = fidelity(transmit_physical("d-rotate", math.pi, "identity"), (h - v1) / math.sqrt(2))
    sids = [sid for sid in TRANSMITTER_TABLE if sid.basis in (PSI2, PSI4)]
    worst = min(overlap2(transmit_from_table(sid), transmit(sid)) for sid in sids)
    ok = abs(f0 - 1) <= 1e-9 and abs(f1 - 1) <= 1e-9 and len(sids) == 8 and abs(worst - 1) <= 1e-9
    record(8, ok, f"superposition source fidelity {f0:.12f}/{f1:.12f}, "
                  f"{len(sids)} protocol states, min fidelity {worst:.12f}")


def _cli(*args, cwd):
    return subprocess.run([sys.executable, "-m", "qudit_qkd", *args], cwd=cwd, capture_output=True, check=True)


def _primary(stdout: bytes) -> bytes:
    # JSON reports: everything except the manifest timestamps
    rep = json.loads(stdout)
    rep["manifest"].pop("timestamps")
    return json.dumps(rep, indent=2).encode()


def test_9_reproducibility(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"n_pulses": 3000, "seed": 99, "channel": {"depolarizing_prob": 0.1}}))
    checks = {}
    for name, args, how in [
        ("verify-bases", ["--json", "verify-bases"], "json"),
        ("convention-search", ["--json", "convention-search"], "json"),
        ("run", ["--seed", "5", "run", str(cfg)], "json"),
        ("run trace", ["--seed", "5", "--trace", "{d}/trace.csv", "run", str(cfg)], "trace.csv"),
        ("sweep", ["--seed", "5", "sweep", "--param", "depolarizing_prob", "--values", "0,0.2",
                   "--n-pulses", "2000", "--out", "{d}/sweep.csv"], "sweep.csv"),
    ]:
        outs = []
        for rep in ("a", "b"):
            d = tmp_path / rep
            d.mkdir(exist_ok=True)
            proc = _cli(*[a.format(d=d) for a in args], cwd=d)
            outs.append(_primary(proc.stdout) if how == "json" else (d / how).read_bytes())
        checks[name] = outs[0] == outs[1]
    record(9, all(checks.values()), "byte-identical reruns: " + ", ".join(f"{k}={v}" for k, v in checks.items()))


if __name__ == "__main__":
    import tempfile

    failed = 0
    for name, fn in sorted((k, v) for k, v in globals().items() if k.startswith("test_")):
        try:
            if "tmp_path" in fn.__code__.co_varnames[: fn.__code__.co_argcount]:
                with tempfile.TemporaryDirectory() as d:
                    fn(Path(d))
            else:
                fn()
        except AssertionError:
            failed += 1
    for n in sorted(RESULTS):
        print(RESULTS[n])
    sys.exit(1 if failed else 0)
