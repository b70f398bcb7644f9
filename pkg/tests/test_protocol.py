import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import depolarizing_qber, intercept_resend_qber
from qudit_qkd.bases import CHI1, CHI2, CHI3, PSI2, PSI4, StateId, basis_states
from qudit_qkd.errors import ConfigError, InsufficientPairs, MisalignedLogs
from qudit_qkd.protocol import (
    COHERENT_ATTACK_THRESHOLD,
    INDIVIDUAL_ATTACK_THRESHOLD,
    NO_CLICK,
    TRACE_COLUMNS,
    AliceRecord,
    BobRecord,
    ChannelConfig,
    DarkCount,
    EveConfig,
    SessionConfig,
    SiftedPair,
    SourceConfig,
    bob_measure,
    estimate_qber,
    measure_outcome,
    run_session,
    sift,
    symbols_to_bits,
    threshold_verdict,
    write_trace_csv,
)


def test_intercept_resend_oracle_is_three_eighths():
    assert abs(intercept_resend_qber((PSI2, PSI4)) - 0.375) < 1e-12
    assert abs(intercept_resend_qber((CHI1, CHI2)) - 0.375) < 1e-12
    # three unbiased bases: Eve guesses right a third of the time
    assert abs(intercept_resend_qber((CHI1, CHI2, CHI3)) - 0.5) < 1e-12


def test_depolarizing_oracle():
    assert depolarizing_qber(Fraction(1, 5)) == Fraction(3, 20)


def test_measure_outcome_correct_basis():
    rng = np.random.default_rng(1)
    for b in (PSI2, PSI4, CHI3):
        for i, s in enumerate(basis_states(b), start=1):
            assert all(measure_outcome(s, b, rng) == i for _ in range(20))


def test_bob_no_photon():
    rng = np.random.default_rng(0)
    b, click = bob_measure(None, rng)
    assert click is NO_CLICK and b in (PSI2, PSI4)
    b, click = bob_measure(None, rng, dark_count_prob=1.0)
    assert isinstance(click, DarkCount)


def _logs():
    alice = [AliceRecord(0, StateId(PSI2, 1)), AliceRecord(1, StateId(PSI4, 2)), AliceRecord(2, StateId(PSI2, 3))]
    bob = [BobRecord(0, PSI2, 1), BobRecord(1, PSI2, 2), BobRecord(2, PSI2, None)]
    return alice, bob


def test_sift_keeps_matching_clicked_rounds():
    pairs = sift(*_logs())
    assert [(p.pulse, p.alice_symbol, p.bob_symbol) for p in pairs] == [(0, 1, 1)]


def test_announcement_hides_symbol():
    ann = BobRecord(5, PSI4, 3).announcement()
    assert ann == (5, "psi4", True)
    assert 3 not in ann[1:2]


def test_sift_misaligned():
    alice, bob = _logs()
    with pytest.raises(MisalignedLogs):
        sift(alice, bob[:2])
    with pytest.raises(MisalignedLogs):
        sift(alice, [BobRecord(9, PSI2, 1)] + bob[1:])


def test_estimate_qber_split():
    pairs = [SiftedPair(i, 1, 1 if i % 4 else 2, PSI2) for i in range(400)]
    q, kept = estimate_qber(pairs, 0.5, np.random.default_rng(3))
    assert len(kept) == 200
    assert 0.15 < q < 0.35
    with pytest.raises(InsufficientPairs):
        estimate_qber(pairs[:1], 0.5, np.random.default_rng(3))


def test_threshold_verdict_boundaries():
    assert threshold_verdict(0.0) == (True, True)
    assert threshold_verdict(COHERENT_ATTACK_THRESHOLD) == (True, False)
    assert threshold_verdict(INDIVIDUAL_ATTACK_THRESHOLD) == (False, False)
    with pytest.raises(ValueError):
        threshold_verdict(1.5)


def test_symbols_to_bits():
    assert symbols_to_bits([1, 2, 3, 4]) == "00011011"


def test_config_validation():
    with pytest.raises(ConfigError):
        SessionConfig(n_pulses=0)
    with pytest.raises(ConfigError):
        SessionConfig(basis_set=(PSI2, CHI1))
    with pytest.raises(ConfigError):
        ChannelConfig(transmittance=1.5)
    with pytest.raises(ConfigError):
        SourceConfig(kind="wcp", mu=0)
    with pytest.raises(ConfigError):
        SessionConfig(sample_fraction=1.0)
    with pytest.raises(ValueError):
        EveConfig(kind="photon_number_splitting")


def test_ideal_session():
    s = run_session(SessionConfig(n_pulses=4000, seed=11))
    assert s.qber == 0 and s.sample_errors == 0
    assert s.detected == s.sent and s.lost == 0
    assert s.verdict_individual == s.verdict_coherent == "pass"
    assert s.final_key_bits == int(0.5 * 2 * (s.sifted - s.disclosed))


@pytest.mark.parametrize("basis_set", [(CHI1, CHI2), (CHI1, CHI2, CHI3)], ids=["chi2", "chi3"])
def test_chi_sessions_are_error_free(basis_set):
    s = run_session(SessionConfig(n_pulses=3000, basis_set=basis_set, seed=2))
    assert s.qber == 0
    assert s.sifted_fraction == pytest.approx(1 / len(basis_set), abs=0.04)


def test_session_is_deterministic():
    cfg = SessionConfig(n_pulses=2000, seed=123, channel=ChannelConfig(depolarizing_prob=0.2))
    assert run_session(cfg) == run_session(cfg)
    other = run_session(SessionConfig(n_pulses=2000, seed=124, channel=ChannelConfig(depolarizing_prob=0.2)))
    assert other.final_key_sha256 != run_session(cfg).final_key_sha256


def test_loss_and_dark_counts():
    s = run_session(SessionConfig(n_pulses=4000, seed=5, channel=ChannelConfig(transmittance=0.5)))
    assert s.detected == pytest.approx(2000, abs=150)
    assert s.lost == s.sent - s.detected
    dark = run_session(SessionConfig(n_pulses=4000, seed=5, channel=ChannelConfig(transmittance=0.0, dark_count_prob=0.1)))
    assert dark.dark_counts == dark.detected
    assert dark.dark_counts == pytest.approx(400, abs=80)
    # dark clicks are random, so about 3/4 of the disclosed symbols are wrong
    assert dark.qber == pytest.approx(0.75, abs=0.12)


def test_no_detections_gives_no_estimate():
    s = run_session(SessionConfig(n_pulses=100, channel=ChannelConfig(transmittance=0.0)))
    assert s.qber is None
    assert s.verdict_individual == "fail" and s.final_key_bits == 0


def test_misalignment_raises_errors():
    s = run_session(SessionConfig(n_pulses=3000, seed=1, channel=ChannelConfig(rotation_misalignment=0.2)))
    assert 0 < s.qber < 0.25


def test_wcp_source():
    s = run_session(SessionConfig(n_pulses=5000, seed=3, source=SourceConfig(kind="wcp", mu=0.5)))
    assert s.detected == pytest.approx(5000 * (1 - math.exp(-0.5)), rel=0.06)
    assert s.double_clicks > 0
    assert s.qber == 0  # no Eve, no noise: every copy carries the same state


def test_intercept_resend_session_matches_oracle():
    s = run_session(SessionConfig(n_pulses=20000, seed=9, eve=EveConfig(kind="intercept_resend")))
    # 4 sigma at ~5000 disclosed symbols
    assert s.qber == pytest.approx(intercept_resend_qber((PSI2, PSI4)), abs=0.03)
    assert s.verdict_individual == "fail"


@given(st.floats(0, 1), st.integers(0, 2**32))
def test_depolarizing_sessions_track_oracle(p, seed):
    s = run_session(SessionConfig(n_pulses=1500, seed=seed, channel=ChannelConfig(depolarizing_prob=p)))
    # about 375 disclosed symbols: generous 5 sigma band
    assert s.qber == pytest.approx(float(depolarizing_qber(Fraction(p))), abs=0.12)


def test_trace_rows():
    import io

    rows = []
    s = run_session(SessionConfig(n_pulses=300, seed=4), trace=rows)
    assert len(rows) == 300
    assert sum(r.sifted for r in rows) == s.sifted
    assert sum(r.disclosed for r in rows) == s.disclosed
    buf = io.StringIO()
    write_trace_csv(rows, buf)
    lines = buf.getvalue().splitlines()
    assert lines[0].split(",") == list(TRACE_COLUMNS)
    assert len(lines) == 301
