import math
import os
import subprocess
import sys

import numpy as np
import pytest

from momtopo import sim
from momtopo.errors import DivergenceError
from momtopo.estimator import TrialAnalysis
from momtopo.exploration import SinusoidSpec, evaluate, sample_sinusoid
from momtopo.fixtures import CHAIN3_SIGNAL, chain3, prismatic_demo, revolute_demo
from momtopo.model import Topology

G = 9.81


def stop_contact(fixture, signal, cfg):
    wrench = evaluate(signal, np.arange(cfg.n_steps) * cfg.dt)
    q0 = sim.default_initial_position(fixture.spec)
    traj = sim.integrate(fixture.spec, fixture.topology, q0, np.zeros(len(q0)), wrench, cfg)
    lo = np.array([j.limits[0] for j in fixture.spec.joints])
    hi = np.array([j.limits[1] for j in fixture.spec.joints])
    return bool(np.any((traj.q == lo) | (traj.q == hi)))


class TestBackends:
    def test_compiled_backend_selected(self):
        assert "python" in sim.BACKENDS
        if "cython" in sim.BACKENDS and not os.environ.get("MOMTOPO_PURE_PYTHON"):
            assert sim.BACKEND == "cython"

    def test_env_forces_fallback(self):
        code = "import momtopo.sim as s; print(s.BACKEND)"
        env = dict(os.environ, MOMTOPO_PURE_PYTHON="1")
        out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
        assert out.stdout.strip() == "python"

    def test_unknown_backend(self):
        with pytest.raises(ValueError):
            sim.get_backend("fortran")

    @pytest.mark.skipif("cython" not in sim.BACKENDS, reason="compiled kernel not built")
    @pytest.mark.parametrize(
        "fixture, mask",
        [(revolute_demo(), None), (prismatic_demo(), None), (chain3("RP"), 0b111111)],
        ids=["revolute", "prismatic", "chain3"],
    )
    def test_backends_agree(self, fixture, mask):
        signal = sample_sinusoid(np.random.default_rng(3), mask or fixture.motion_mask)
        cfg = sim.SimConfig(duration=0.6)
        q0 = sim.default_initial_position(fixture.spec)
        w = evaluate(signal, np.arange(cfg.n_steps) * cfg.dt)
        a = sim.integrate(fixture.spec, fixture.topology, q0, np.zeros(len(q0)), w, cfg, backend="cython")
        b = sim.integrate(fixture.spec, fixture.topology, q0, np.zeros(len(q0)), w, cfg, backend="python")
        for name in ("q", "qd", "qdd", "reaction"):
            assert np.allclose(getattr(a, name), getattr(b, name), rtol=0, atol=1e-12), name


class TestDynamics:
    def test_statics(self):
        fx = revolute_demo()
        cfg = sim.SimConfig(duration=1.0)
        q0 = sim.default_initial_position(fx.spec)
        traj = sim.integrate(fx.spec, fx.topology, q0, [0.0], np.zeros((cfg.n_steps, 6)), cfg)
        assert np.all(traj.q == q0) and np.all(traj.qd == 0.0)

    def test_terminal_velocity(self):
        # m dv/dt = F - d v  ->  v_inf = F / d = 2.0 m/s, time constant m/d = 10 s
        fx = prismatic_demo(friction=0.0, limits=(-1e3, 1e3))
        cfg = sim.SimConfig(duration=40.0)
        traj = sim.integrate(fx.spec, fx.topology, [0.0], [0.0], np.tile([0.2, 0, 0, 0, 0, 0], (cfg.n_steps, 1)), cfg)
        oracle = 2.0 * (1.0 - math.exp(-0.1 * 40.0))
        assert traj.qd[-1, 0] == pytest.approx(2.0, rel=0.05)
        assert traj.qd[-1, 0] == pytest.approx(oracle, rel=1e-3)

    def test_single_step_from_rest(self):
        fx = prismatic_demo(friction=0.0)
        state = sim.SimState.at_rest([0.05])
        cfg = sim.SimConfig()
        nxt = sim.generalized_dynamics_step(fx.spec, fx.topology, state, [0.2, 0, 0, 0, 0, 0], cfg)
        assert nxt.t == pytest.approx(cfg.dt)
        assert nxt.qd[0] == pytest.approx(0.2 * cfg.dt, rel=1e-12)
        assert nxt.q[0] == pytest.approx(0.05 + 0.2 * cfg.dt**2, rel=1e-12)

    def test_constrained_wrench_never_moves(self):
        for fx in (revolute_demo(), prismatic_demo()):
            for seed in range(5):
                signal = sample_sinusoid(np.random.default_rng(seed), fx.constrained_mask)
                record = sim.run_trial(fx.spec, fx.topology, signal, sim.SimConfig())
                assert not record.moving.any()
                assert np.array_equal(record.positions, np.broadcast_to(record.positions[0], record.positions.shape))

    def test_tangential_force_below_breakaway(self):
        # 0.2 N at the 0.3 m lever is 0.06 N m, below the 0.1 N m static friction.
        fx = revolute_demo()
        traj = sim.integrate(fx.spec, fx.topology, [0.0], [0.0], np.tile([0, 0.2, 0, 0, 0, 0], (5000, 1)),
                             sim.SimConfig())
        assert np.all(traj.q == 0.0)

    def test_tangential_force_turns_the_joint(self):
        fx = revolute_demo(friction=0.05)
        traj = sim.integrate(fx.spec, fx.topology, [0.0], [0.0], np.tile([0, 0.2, 0, 0, 0, 0], (5000, 1)),
                             sim.SimConfig())
        assert 0.0 < traj.q[-1, 0] <= math.radians(95.0)

    def test_limits_respected(self):
        fx = prismatic_demo()
        w = np.tile([0.2, 0, 0, 0, 0, 0], (6000, 1))
        w[1500:] *= -1
        traj = sim.integrate(fx.spec, fx.topology, [0.075], [0.0], w, sim.SimConfig())
        lo, hi = fx.spec.joints[0].limits
        assert traj.q.min() >= lo - 1e-12 and traj.q.max() <= hi + 1e-12
        assert traj.q.max() == hi and traj.q.min() == lo

    def test_passivity(self):
        fx = chain3("RR")
        cfg = sim.SimConfig()
        q, qd = np.array([0.2, -0.3]), np.array([0.8, -1.1])
        traj = sim.integrate(fx.spec, fx.topology, q, qd, np.zeros((800, 6)), cfg)
        ke = [sim.kinetic_energy(fx.spec, fx.topology, a, b) for a, b in zip(traj.q[::4], traj.qd[::4])]
        assert np.all(np.diff(ke) <= 1e-12)
        assert ke[-1] < ke[0]

    def test_passivity_every_step(self):
        fx = revolute_demo(friction=0.0)
        traj = sim.integrate(fx.spec, fx.topology, [0.8], [0.6], np.zeros((1000, 6)), sim.SimConfig())
        ke = [sim.kinetic_energy(fx.spec, fx.topology, a, b) for a, b in zip(traj.q, traj.qd)]
        assert np.all(np.diff(ke) <= 0.0)

    def test_divergence(self):
        fx = prismatic_demo()
        w = np.zeros((10, 6))
        w[4, 0] = np.nan
        with pytest.raises(DivergenceError) as info:
            sim.integrate(fx.spec, fx.topology, [0.07], [0.0], w, sim.SimConfig())
        assert info.value.step == 4

    def test_initial_state_outside_limits(self):
        fx = prismatic_demo()
        with pytest.raises(ValueError):
            sim.integrate(fx.spec, fx.topology, [0.5], [0.0], np.zeros((3, 6)), sim.SimConfig())

    def test_needs_anchor(self):
        from momtopo.fixtures import free_body

        with pytest.raises(ValueError):
            sim.pack_chain(free_body(), Topology(()), sim.SimConfig())


class TestTerminalWrenches:
    def test_static_weight_on_anchor(self):
        fx = revolute_demo()
        f_left, f_right = sim.measured_terminal_wrenches(fx.spec, fx.topology, sim.SimState.at_rest([0.0]))
        # Object pushes down on the grasp with its full weight; moments are about the base frame origin.
        coms = [np.array([0.15, 0, 0]), np.array([0.45, 0, 0])]
        weight = np.array([0, 0, -G])
        expected = np.r_[2 * weight, sum(np.cross(c, weight) for c in coms)]
        assert np.allclose(f_left, expected, atol=1e-12)
        assert f_left[2] == pytest.approx(-(1.0 + 1.0) * G)
        assert np.array_equal(f_right, np.zeros(6))

    def test_free_side_echoes_command(self):
        fx = prismatic_demo()
        w = np.array([0.1, -0.05, 0.02, 0.01, 0.0, -0.03])
        state = sim.SimState(0.0, sim.SimState.at_rest([0.07]).joints, w)
        _, f_right = sim.measured_terminal_wrenches(fx.spec, fx.topology, state)
        assert np.array_equal(f_right, -w)

    def test_zero_gravity_zero_wrench(self):
        fx = revolute_demo()
        f_left, f_right = sim.measured_terminal_wrenches(
            fx.spec, fx.topology, sim.SimState.at_rest([0.4]), sim.SimConfig(gravity=(0, 0, 0)))
        assert np.array_equal(f_left, np.zeros(6)) and np.array_equal(f_right, np.zeros(6))


class TestRunTrial:
    def test_sample_count(self):
        fx = prismatic_demo()
        record = sim.run_trial(fx.spec, fx.topology, sample_sinusoid(np.random.default_rng(0), 1), sim.SimConfig())
        assert len(record) == 5000
        assert record.t[-1] == pytest.approx(4.999)
        record.validate()

    def test_zero_signal_equilibrium(self):
        fx = revolute_demo()
        zero = SinusoidSpec(np.zeros(6), np.zeros(6), 0)
        record = sim.run_trial(fx.spec, fx.topology, zero, sim.SimConfig(duration=0.5))
        assert np.array_equal(record.positions, np.broadcast_to(record.positions[0], record.positions.shape))
        assert np.array_equal(record.quaternions, np.broadcast_to(record.quaternions[0], record.quaternions.shape))

    def test_determinism(self):
        fx = revolute_demo()
        signal = sample_sinusoid(np.random.default_rng(9), fx.motion_mask)
        a = sim.run_trial(fx.spec, fx.topology, signal, sim.SimConfig(seed=9))
        b = sim.run_trial(fx.spec, fx.topology, signal, sim.SimConfig(seed=9))
        assert a.equals(b)

    def test_parallel_runner_keeps_order(self):
        fx = prismatic_demo()
        jobs = [
            {"spec": fx.spec, "topology": fx.topology, "cfg": sim.SimConfig(duration=0.2, seed=s),
             "signal": sample_sinusoid(np.random.default_rng(s), 1)}
            for s in range(4)
        ]
        serial = sim.run_trials(jobs, 1)
        parallel = sim.run_trials(jobs, 2)
        assert all(a.equals(b) for a, b in zip(serial, parallel))

    def test_metadata(self):
        fx = prismatic_demo()
        record = sim.run_trial(fx.spec, fx.topology, sample_sinusoid(np.random.default_rng(0), 1),
                               sim.SimConfig(duration=0.1, seed=4))
        meta = record.metadata
        assert meta["schema"] == "trial/v1" and meta["seed"] == 4 and meta["true_topology"] == "P"
        assert meta["object_hash"] == fx.spec.digest()


class TestMomentumClosure:
    """Net wrench against the true-topology momentum rate, normalized by the mean net wrench."""

    @pytest.mark.parametrize("make", [revolute_demo, prismatic_demo], ids=["revolute", "prismatic"])
    def test_frictionless(self, make):
        fx = make(friction=0.0, limits=(-3.0, 3.0))
        rng = np.random.default_rng(21)
        for _ in range(4):
            signal = sample_sinusoid(rng, fx.motion_mask)
            record = sim.run_trial(fx.spec, fx.topology, signal, sim.SimConfig())
            assert TrialAnalysis(record).closure_ratio(fx.topology) < 0.02

    @pytest.mark.parametrize("topology", ["RR", "RP", "PR", "PP"])
    def test_frictionless_chain(self, topology):
        fx = chain3(topology)
        record = sim.run_trial(fx.spec, fx.topology, CHAIN3_SIGNAL, sim.SimConfig(duration=2.0))
        assert TrialAnalysis(record).closure_ratio(fx.topology) < 0.02

    @pytest.mark.parametrize("make", [revolute_demo, prismatic_demo], ids=["revolute", "prismatic"])
    def test_with_friction(self, make):
        fx = make()
        cfg = sim.SimConfig()
        rng = np.random.default_rng(7)
        checked = 0
        while checked < 5:
            signal = sample_sinusoid(rng, fx.motion_mask)
            record = sim.run_trial(fx.spec, fx.topology, signal, cfg)
            if record.motion_fraction < 0.3 or stop_contact(fx, signal, cfg):
                continue
            assert TrialAnalysis(record).closure_ratio(fx.topology) < 0.1
            checked += 1

    def test_stop_impacts_break_closure(self):
        # A perfectly inelastic stop removes the joint momentum within one step; the
        # smoothed momentum derivative cannot follow that impulse.
        fx = prismatic_demo()
        w = np.zeros((3000, 6))
        w[:, 0] = 0.2
        record = sim.run_trial(fx.spec, fx.topology, lambda t: w[: len(t)], sim.SimConfig(duration=3.0))
        assert TrialAnalysis(record).closure_ratio(fx.topology) > 0.1
