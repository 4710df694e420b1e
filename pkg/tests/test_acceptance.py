"""Acceptance criteria 1-9, each at its stated tolerance, one PASS/FAIL line per criterion."""
import math
import time
from pathlib import Path

import numpy as np
import pytest

from oracles import (
    dvs_oracle,
    frequency_loop,
    network_gradient_error,
    permutation_map,
    random_stream,
    stacking_loop,
    time_surface_loop,
    tiny_network_losses,
)
from evlink import training
from evlink.encoders import encode_frequency, encode_stacking, encode_time_surface
from evlink.experiment import TOY_IMAGES, TOY_INSTANCES, load_config, random_embedding_map, run_pipeline
from evlink.losses import loss_contrastive, loss_discriminator, loss_identity
from evlink.probe import PROBE_SEEDS, PROBE_STEPS, mean_probe_accuracy, modality_probe
from evlink.retrieval import RankedResult, average_precision
from evlink.simulator import IntensityFrame, MotionTrajectory, SimulatorConfig, sample_times, simulate_dvs
from evlink.training import TrainConfig, fit, load_pool

TOY_CONFIG = Path(__file__).resolve().parent.parent / "configs" / "toy.json"


def toy_ids():
    return [f"inst{k:04d}" for k in range(TOY_INSTANCES) for _ in range(TOY_IMAGES)]


@pytest.fixture(scope="module")
def random_baseline():
    return permutation_map(toy_ids(), sorted(set(toy_ids())), trials=1000, seed=0)


@pytest.fixture(scope="module")
def toy_run(tmp_path_factory):
    cfg = load_config(TOY_CONFIG)
    return run_pipeline(tmp_path_factory.mktemp("toy_a"), cfg)


def test_criterion_1_encoder_oracles(criterion):
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    worst_ts = worst_ef = 0.0
    counts_exact = True
    for _ in range(100):
        s = random_stream(rng, int(rng.integers(0, 10_001)), 64, 64, t_max=90_000)
        t_ref = int(s.t[-1]) + 1 if len(s) else 0
        counts_exact &= np.array_equal(encode_stacking(s), stacking_loop(s))
        worst_ts = max(worst_ts, np.abs(encode_time_surface(s, 30_000.0, t_ref) - time_surface_loop(s, 30_000.0, t_ref)).max())
        worst_ef = max(worst_ef, np.abs(encode_frequency(s) - frequency_loop(s)).max())
    secs = time.perf_counter() - t0
    ok = counts_exact and worst_ts <= 1e-12 and worst_ef <= 1e-12 and secs < 30
    assert criterion(1, ok, f"ES bitwise={counts_exact} TS max|err|={worst_ts:.1e} EF max|err|={worst_ef:.1e} ({secs:.1f}s)")


def test_criterion_2_gradients(criterion):
    t0 = time.perf_counter()
    params, builders = tiny_network_losses()
    errs = {name: network_gradient_error(params, builders[name]) for name in ("L_dis", "L_id", "L_ct", "L")}
    secs = time.perf_counter() - t0
    ok = max(errs.values()) < 1e-3 and secs < 120
    detail = " ".join(f"{k}={v:.1e}" for k, v in errs.items())
    assert criterion(2, ok, f"max relative error {detail} ({secs:.1f}s)")


def test_criterion_3_closed_forms(criterion):
    half = np.full(4, 0.5)
    l_dis = loss_discriminator(half, half).item()
    l_ct = loss_contrastive(np.array([[0.4, 0.0]]), np.zeros((1, 2)), [0], margin=1.0).item()
    l_id = loss_identity(np.full((2, 4), 0.25), np.full((2, 4), 0.25), [0, 3]).item()
    errs = (abs(l_dis - 2 * math.log(2)), abs(l_ct - 0.18), abs(l_id - 2 * math.log(4)))
    ok = max(errs) <= 1e-9
    assert criterion(3, ok, f"L_dis={l_dis:.12f} L_ct={l_ct:.12f} L_id={l_id:.12f}")


def test_criterion_4_metrics(criterion, random_baseline):
    rel = np.array([1, 0, 1, 1, 0], dtype=bool)
    ap = average_precision(RankedResult([str(i) for i in range(5)], np.arange(5.0), rel), 3)
    rand_map = random_embedding_map(toy_ids(), draws=200, dim=64, seed=1)
    ok = abs(ap - 0.805556) <= 1e-6 and abs(rand_map - random_baseline) <= 0.02
    assert criterion(4, ok, f"AP={ap:.6f} random-embedding mAP={rand_map:.4f} permutation oracle={random_baseline:.4f}")


def test_criterion_5_update_partition(criterion, monkeypatch, toy_dataset):
    real_d, real_step = training.discriminator_step, training.train_step
    state = {"bad": [], "steps": 0}

    def spy_d(batch, params, spec, opt):
        out = real_d(batch, params, spec, opt)
        state["mid"] = params.snapshot()
        return out

    def spy_step(batch, params, spec, cfg, opts):
        before = params.snapshot()
        out = real_step(batch, params, spec, cfg, opts)
        after, mid = params.snapshot(), state.pop("mid")
        d, gc = set(params.group("D")), set(params.group("G", "C"))
        phase1 = {k for k in before if not np.array_equal(before[k], mid[k])}
        phase2 = {k for k in before if not np.array_equal(mid[k], after[k])}
        if not (phase1 <= d and phase2 <= gc):
            state["bad"].append((phase1 - d, phase2 - gc))
        state["steps"] += 1
        return out

    monkeypatch.setattr(training, "discriminator_step", spy_d)
    monkeypatch.setattr(training, "train_step", spy_step)
    for abl in ([], ["nws"], ["ntc"]):
        cfg = TrainConfig(image_size=32, conv_channels=[4, 4, 4], embed_dim=8, disc_hidden=4, max_epochs=2, ablations=abl)
        fit(toy_dataset, cfg)
    ok = state["steps"] > 0 and not state["bad"]
    assert criterion(5, ok, f"{state['steps']} train steps checked bitwise, violations={len(state['bad'])}")


def test_criterion_6_toy_retrieval(criterion, toy_run, random_baseline):
    rep = toy_run.report
    cfg = load_config(TOY_CONFIG)
    num_event_images = len(load_pool(toy_run.manifest, cfg).event_labels)
    steps = toy_run.checkpoint.epoch * math.ceil(num_event_images / cfg.batch_size)
    ok = rep.acc[1] >= 0.8 and rep.mAP >= 3 * random_baseline and steps >= 200 and toy_run.seconds < 15 * 60
    detail = f"acc@1={rep.acc[1]:.3f} mAP={rep.mAP:.3f} (3x random={3 * random_baseline:.3f}) steps={steps} ({toy_run.seconds:.0f}s)"
    assert criterion(6, ok, detail)


def test_criterion_7_adversarial_effect(criterion, toy_run):
    t0 = time.perf_counter()
    cfg = load_config(TOY_CONFIG)
    pool = load_pool(toy_run.manifest, cfg)
    nal_cfg = TrainConfig.from_dict({**cfg.to_dict(), "ablations": ["nal"]})
    nal = fit(pool, nal_cfg)
    adv_acc = mean_probe_accuracy(toy_run.checkpoint, pool)
    nal_acc = mean_probe_accuracy(nal, pool)
    # reported for context only: a long-trained probe
    adv_long = modality_probe(toy_run.checkpoint, pool, steps=1000).test_accuracy
    nal_long = modality_probe(nal, pool, steps=1000).test_accuracy
    secs = time.perf_counter() - t0 + toy_run.seconds
    ok = adv_acc < nal_acc and secs < 30 * 60
    detail = (
        f"probe accuracy ({PROBE_STEPS} steps, {PROBE_SEEDS} seeds) adversarial={adv_acc:.4f} nal={nal_acc:.4f}; "
        f"1000-step probe {adv_long:.4f} vs {nal_long:.4f} ({secs:.0f}s)"
    )
    assert criterion(7, ok, detail)


def test_criterion_8_determinism(criterion, toy_run, tmp_path):
    again = run_pipeline(tmp_path, load_config(TOY_CONFIG))
    same = {name: toy_run.files[name].read_bytes() == again.files[name].read_bytes() for name in toy_run.files}
    ok = all(same.values())
    assert criterion(8, ok, " ".join(f"{k}={'identical' if v else 'DIFFERENT'}" for k, v in same.items()))


def test_criterion_9_simulator(criterion):
    cfg = SimulatorConfig()
    flat = simulate_dvs(IntensityFrame.from_array(np.full((16, 16), 0.5)), MotionTrajectory.linear(50_000, 4.0, 2.0), cfg)
    px = np.full((16, 16), 0.1)
    px[:, 8:] = 0.9
    edge = IntensityFrame.from_array(px)
    traj = MotionTrajectory.linear(50_000, -5.0)
    s = simulate_dvs(edge, traj, cfg)
    # the edge sits between columns 7 and 8 and sweeps 5 px to the left
    near = np.mean((s.x >= 2.5 - 1) & (s.x <= 7.5 + 1)) if len(s) else 0.0
    mismatches = 0
    grng = np.random.default_rng(9)
    cases = [(edge, traj)] + [
        (IntensityFrame.from_array(grng.uniform(0.05, 1, (16, 16))),
         MotionTrajectory(np.array([0, 10_000, 20_000]), grng.uniform(-3, 3, 3), grng.uniform(-3, 3, 3)))
        for _ in range(5)
    ]
    for frame, tr in cases:
        ts, dx, dy = sample_times(tr, cfg)
        _, total = dvs_oracle(frame.pixels, ts, dx, dy, cfg.threshold, cfg.epsilon)
        mismatches += len(simulate_dvs(frame, tr, cfg)) != total
    ok = len(flat) == 0 and len(s) > 0 and near == 1.0 and mismatches == 0
    assert criterion(9, ok, f"constant image events={len(flat)} edge events={len(s)} within 1px={near:.3f} oracle mismatches={mismatches}/6")
