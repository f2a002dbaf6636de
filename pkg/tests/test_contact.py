import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from aiekf.contact import (
    ContactFilterConfig,
    ContactFuser,
    GaitSchedule,
    GmResidual,
)

DT = 0.001


# ---------------------------------------------------------------- schedule

def test_gait_presets():
    trot = GaitSchedule.preset("trot")
    assert trot.period == 0.4 and trot.duty == 0.6
    flying = GaitSchedule.preset("flying_trot")
    assert flying.duty < 0.5  # aerial phases exist
    pronk = GaitSchedule.preset("pronk")
    assert np.all(pronk.offsets == 0.0)
    with pytest.raises(ValueError):
        GaitSchedule.preset("gallop")


def test_trot_diagonal_pairs_alternate():
    sched = GaitSchedule.preset("trot")
    st1 = sched.in_stance(0.1)
    assert st1[0] == st1[3] and st1[1] == st1[2]
    mid = sched.in_stance(0.3)
    assert mid[0] != mid[1]


def test_flying_trot_has_aerial_phase():
    sched = GaitSchedule.preset("flying_trot")
    t = np.arange(0, 0.3, 0.001)
    stance = sched.in_stance(t)
    assert (stance.sum(axis=1) == 0).any()


def test_stand_always_in_stance():
    sched = GaitSchedule.preset("stand")
    assert sched.in_stance(1.234).all()
    assert sched.stance_prior(np.array([0.0, 5.0])).min() == 1.0


def test_duty_validation():
    with pytest.raises(ValueError):
        GaitSchedule("x", period=0.4, duty=0.0, offsets=np.zeros(4))


# ---------------------------------------------------------------- GM residual

def test_lpf_constant_force_converges():
    gm = GmResidual(4, DT)
    tau = 1.0 / (2 * math.pi * gm.cfg.lpf_cutoff_hz)
    steps = int(round(5 * tau / DT))
    F = np.full(4, 120.0)
    for _ in range(steps):
        out = gm.step(F)
    assert np.all(np.abs(out - 120.0) < 0.01 * 120.0)


def test_lpf_zero_force_decays_to_zero():
    gm = GmResidual(4, DT)
    gm.step(np.full(4, 100.0))
    for _ in range(5000):
        out = gm.step(np.zeros(4))
    assert np.abs(out).max() < 1e-6


def test_lpf_step_matches_first_order_response():
    gm = GmResidual(1, DT)
    tau = 1.0 / (2 * math.pi * gm.cfg.lpf_cutoff_hz)
    F = 100.0
    for k in range(1, 60):
        out = gm.step([F])
        expected = F * (1.0 - math.exp(-k * DT / tau))
        assert abs(out[0] - expected) <= 0.05 * F


def test_lpf_admits_negative_evidence():
    gm = GmResidual(1, DT)
    for _ in range(100):
        out = gm.step([-30.0])
    assert out[0] < 0.0


# ---------------------------------------------------------------- fusion

def test_fuse_agreeing_evidence_confident():
    fuser = ContactFuser(4)
    for _ in range(50):
        prob, var, flag = fuser.step(np.ones(4), np.full(4, 120.0))
    assert np.all(prob > 0.95)
    assert np.all(flag)
    assert np.all(var > 0.0)


def test_fuse_missed_contact_decays_fast():
    # schedule says stance but the leg carries no load: probability must
    # drop below 0.5 within five fused steps
    fuser = ContactFuser(1)
    for _ in range(50):
        fuser.step([1.0], [120.0])
    steps = 0
    prob = fuser.prob[0]
    while prob >= 0.5 and steps < 20:
        prob, _, _ = fuser.step([1.0], [0.0])
        prob = prob[0]
        steps += 1
    assert steps <= 5


def test_fuse_early_touchdown_detected():
    fuser = ContactFuser(1)
    for _ in range(50):
        fuser.step([0.0], [0.0])
    steps = 0
    prob = fuser.prob[0]
    while prob < 0.6 and steps < 30:
        prob, _, _ = fuser.step([0.0], [120.0])
        prob = prob[0]
        steps += 1
    assert steps <= 10


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2 ** 31 - 1))
def test_fuse_probability_bounded(seed):
    rng = np.random.default_rng(seed)
    fuser = ContactFuser(4)
    for _ in range(40):
        prob, var, _ = fuser.step(rng.random(4), rng.normal(80, 80, 4))
        assert np.all(prob >= 0.0) and np.all(prob <= 1.0)
        assert np.all(var > 0.0)


def test_hysteresis_prevents_chatter():
    # evidence oscillating +-10% around the threshold-equivalent force must
    # not toggle the flag more than once per 50 steps
    cfg = ContactFilterConfig()
    fuser = ContactFuser(1, cfg)
    gm = GmResidual(1, DT, cfg)
    rng = np.random.default_rng(2)
    toggles = 0
    last = None
    n = 2000
    for k in range(n):
        F = cfg.force_center * (1.0 + 0.1 * math.sin(2 * math.pi * k / 40.0))
        f = gm.step([F])
        _, _, flag = fuser.step([1.0], f)
        if last is not None and flag[0] != last:
            toggles += 1
        last = flag[0]
    assert toggles <= n / 50


def _run_detector(truth, sensors, cfg):
    from aiekf.contact import GaitSchedule

    sched = GaitSchedule.preset("trot")
    gm = GmResidual(4, sensors.dt, cfg)
    fuser = ContactFuser(4, cfg)
    flags = np.zeros((len(sensors), 4), dtype=bool)
    for k in range(len(sensors)):
        f = gm.step(sensors.force[k])
        _, _, flags[k] = fuser.step(sched.stance_prior(sensors.t[k]), f)
    return flags


def test_perfect_evidence_accuracy_and_latency():
    # with noiseless force evidence there is nothing to smooth, so the
    # accuracy invariant is checked at a noise-appropriate cutoff; the
    # latency bound also holds at the default 30 Hz cutoff
    from aiekf.simulator import ScenarioConfig, generate

    cfg = ScenarioConfig(gait="trot", duration=6.0, seed=5, force_noise=0.0,
                         gyro_noise=0.0, accel_noise=0.0, gyro_bias_walk=0.0,
                         accel_bias_walk=0.0, kin_pos_noise=0.0,
                         kin_vel_noise=0.0)
    truth, sensors = generate(cfg)

    fast = ContactFilterConfig(lpf_cutoff_hz=500.0)
    flags = _run_detector(truth, sensors, fast)
    accuracy = (flags == truth.contact).mean()
    assert accuracy >= 0.995

    for det_cfg in (fast, ContactFilterConfig()):
        flags = _run_detector(truth, sensors, det_cfg)
        # latency: after any true transition the detector agrees within 10 steps
        for leg in range(4):
            tc = truth.contact[:, leg]
            trans = np.nonzero(tc[1:] != tc[:-1])[0] + 1
            for idx in trans:
                if idx + 10 >= len(sensors):
                    continue
                assert flags[idx + 10, leg] == tc[idx + 10]
