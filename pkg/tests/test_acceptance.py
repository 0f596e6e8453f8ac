"""End-to-end acceptance checks, one test per criterion.

Each test prints a ``PASS``/``FAIL`` line with the measured quantity so a
plain ``pytest -v`` log doubles as the acceptance report.
"""
import io
import json
import time

import numpy as np
import pytest
from scipy.spatial.transform import Rotation

from momtopo import cli, sim
from momtopo.estimator import EstimatorConfig, TrialAnalysis, momentum_rate, select_topology
from momtopo.fixtures import CHAIN3_SIGNAL, chain3, free_body_trial
from momtopo.model import Topology, enumerate_topologies
from momtopo.spatial import (
    SpatialInertia,
    Transform,
    force_transform,
    motion_transform,
    quat_integrate,
)
from momtopo.store import read_trial

CAMPAIGN_SEED = 42


@pytest.fixture
def verdict(capsys):
    def report(number, title, ok, detail):
        with capsys.disabled():
            print(f"\n{'PASS' if ok else 'FAIL'} criterion {number}: {title} ({detail})")
        assert ok, detail

    return report


def campaign(outdir, fixture, excitation="motion", require_moving=True):
    """Simulate and estimate a 10-trial campaign; returns (report, seconds)."""
    start = time.perf_counter()
    cfg = cli.CampaignConfig(fixture=fixture, trials=10, seed=CAMPAIGN_SEED, output_dir=str(outdir),
                             excitation=excitation, require_moving=require_moving)
    cli.cmd_simulate(cfg, out=io.StringIO())
    report = cli.cmd_estimate(outdir, out=io.StringIO())
    return report, time.perf_counter() - start


def error_of(row, candidate):
    return next(e["error"] for e in row["errors"] if e["candidate"] == candidate)


@pytest.fixture(scope="module")
def revolute_campaign(tmp_path_factory):
    out = tmp_path_factory.mktemp("revolute")
    report, seconds = campaign(out, "revolute-demo")
    return out, report, seconds


def test_criterion_1_revolute_ordering(revolute_campaign, verdict):
    _, report, seconds = revolute_campaign
    rows = [r for r in report["trials"] if r["motion_fraction"] >= EstimatorConfig().min_motion_fraction]
    hits = sum(error_of(r, "R") < error_of(r, "P") for r in rows)
    ok = len(rows) == 10 and hits >= 9 and seconds < 60
    verdict(1, "revolute R < P", ok, f"{hits}/{len(rows)} moving trials, {seconds:.1f} s")


def test_criterion_2_prismatic_ordering(tmp_path, verdict):
    report, seconds = campaign(tmp_path, "prismatic-demo")
    rows = [r for r in report["trials"] if r["motion_fraction"] >= EstimatorConfig().min_motion_fraction]
    hits = sum(error_of(r, "P") < error_of(r, "R") for r in rows)
    ok = len(rows) == 10 and hits >= 9
    verdict(2, "prismatic P < R", ok, f"{hits}/{len(rows)} moving trials, {seconds:.1f} s")


@pytest.mark.parametrize("fixture", ["revolute-demo", "prismatic-demo"])
def test_criterion_3_constrained_direction(tmp_path, fixture, verdict):
    campaign(tmp_path, fixture, excitation="constrained", require_moving=False)
    worst, inconclusive = 0.0, 0
    for path in sorted(tmp_path.glob("*.trial")):
        record = read_trial(path)
        rep = select_topology(record)
        worst = max(worst, max(e.mean_residual for e in rep.errors))
        inconclusive += rep.inconclusive
    ok = worst < 1e-4 and inconclusive == 10
    verdict(3, f"constrained wrench, {fixture}", ok, f"max normalized error {worst:.2e}, {inconclusive}/10 inconclusive")


def test_criterion_4_free_body_closure(verdict):
    spec, record = free_body_trial(duration=5.0, dt=1e-3)
    ratio = TrialAnalysis(record, spec, EstimatorConfig(smoothing_window=5)).closure_ratio(Topology(()))
    verdict(4, "free-body closure, window 5", ratio < 0.02, f"ratio {ratio:.2e}")


def test_criterion_5_two_joint_oracle(verdict):
    correct, worst_margin = 0, np.inf
    for truth in ("RR", "RP", "PR", "PP"):
        fx = chain3(truth)
        record = sim.run_trial(fx.spec, fx.topology, CHAIN3_SIGNAL, sim.SimConfig(duration=5.0))
        rep = select_topology(record, candidates=enumerate_topologies(2))
        correct += rep.selected == fx.topology
        true_error = rep.error_of(fx.topology)
        wrong = min(e.error for e in rep.errors if e.topology != fx.topology)
        worst_margin = min(worst_margin, wrong / true_error)
    ok = correct == 4 and worst_margin >= 2
    verdict(5, "2^2 argmin oracle", ok, f"{correct}/4 correct, smallest wrong/true ratio {worst_margin:.1f}")


def test_criterion_6_algebra(verdict):
    rng = np.random.default_rng(6)
    duality = composition = 0.0
    for _ in range(100):
        a = Transform(Rotation.random(random_state=rng).as_matrix(), rng.normal(size=3))
        b = Transform(Rotation.random(random_state=rng).as_matrix(), rng.normal(size=3))
        duality = max(duality, np.max(np.abs(force_transform(a) - np.linalg.inv(motion_transform(a)).T)))
        composition = max(composition, np.max(np.abs(motion_transform(a @ b) - motion_transform(a) @ motion_transform(b))))

    min_eig = np.inf
    for _ in range(100):
        m = rng.uniform(0.1, 5)
        half = rng.uniform(0.05, 0.5, size=3)
        box = m / 3 * np.diag([half[1] ** 2 + half[2] ** 2, half[0] ** 2 + half[2] ** 2, half[0] ** 2 + half[1] ** 2])
        M = SpatialInertia.from_com(m, rng.normal(size=3) * 0.3, box).matrix()
        assert np.array_equal(M, M.T)
        min_eig = min(min_eig, np.linalg.eigvalsh(M).min())

    q = np.array([1.0, 0.0, 0.0, 0.0])
    omega = np.array([0.4, -1.1, 2.3])
    drift = 0.0
    for _ in range(5000):
        q = quat_integrate(q, omega, 1e-3)
        drift = max(drift, abs(np.linalg.norm(q) - 1.0))

    shifted = SpatialInertia.from_com(2.0, [0.0, 1.0, 0.0], np.eye(3)).rotational_inertia
    parallel = np.max(np.abs(shifted - np.diag([3.0, 1.0, 3.0])))

    ok = duality < 1e-12 and composition < 1e-10 and min_eig > 0 and drift < 1e-9 and parallel < 1e-12
    verdict(6, "spatial algebra", ok,
            f"duality {duality:.1e}, composition {composition:.1e}, min eig {min_eig:.1e}, "
            f"quat drift {drift:.1e}, parallel axis {parallel:.1e}")


def test_criterion_7_differentiation(verdict):
    # plain central differences: smoothing disabled (window 1)
    t = np.arange(5000) * 1e-3
    phase = np.linspace(0.0, np.pi, 6)
    h = np.sin(t[:, None] + phase)
    d = momentum_rate(t, h, window=1)
    err = np.max(np.abs(d[1:-1] - np.cos(t[1:-1, None] + phase)))
    verdict(7, "momentum rate on sinusoid, window 1", err < 1e-6, f"max interior error {err:.2e}")


def test_criterion_8_determinism(revolute_campaign, tmp_path, verdict):
    first, _, _ = revolute_campaign
    campaign(tmp_path, "revolute-demo")
    files = sorted(p.name for p in first.glob("*.trial")) + ["errors.csv", "manifest.json"]
    same = [f for f in files if (first / f).read_bytes() == (tmp_path / f).read_bytes()]
    report = json.loads((tmp_path / "report.json").read_text())
    ok = len(same) == len(files) and len(report["trials"]) == 10
    verdict(8, "byte-identical campaign reruns", ok, f"{len(same)}/{len(files)} files identical")
