import numpy as np
import pytest

from phsync.controller import (
    LogCosh,
    PhParams,
    assemble,
    init_params,
)
from phsync.errors import NumericError
from phsync.numerics import BlockMask, SeededRng
from phsync.plant import KuramotoParams
from phsync.simulate import (
    ClosedLoopState,
    RolloutConfig,
    rollout,
    sample_initial,
)
from phsync.topology import Complete, ErdosRenyi, adjacency, comm_mask, generate
from phsync.verify import (
    L2Gain,
    OutputStrictPassive,
    Passive,
    closed_loop_check,
    dissipation_tolerance,
    empirical_l2_gain,
    matrix_certificate,
    open_loop_response,
    plant_dissipation,
    probe_corpus,
    report_to_json,
    trajectory_dissipation,
)

from oracles import eig_sym_jacobi


def _random_controller(seed, n=4, q=2, h=4, epsilon=0.85, kind=None):
    g = generate(kind if kind is not None else Complete(), n, SeededRng(seed, 1))
    mask = comm_mask(g)
    params = init_params(mask, (q,) * n, (h,) * n, epsilon, "logcosh", SeededRng(seed, 4))
    return assemble(params, mask), mask, g


def _scalar_controller(g_val, d_val, epsilon, alpha=None):
    mask = BlockMask(np.array([[1]]), (1,), (1,))
    params = PhParams(
        q_dims=(1,),
        p_dims=(1,),
        a_blocks=(np.zeros((1, 1)),),
        d=np.array([d_val]),
        g_blocks={(0, 0): np.array([[g_val]])},
        ham=LogCosh((np.eye(1),)),
        epsilon=epsilon,
    )
    c = assemble(params, mask)
    if alpha is not None:
        from dataclasses import replace

        c = replace(c, alpha=alpha)
    return c


def test_matrix_certificate_certified_alpha_with_unit_damping():
    # With alpha = eps * lambda_max(G G^T) and Lambda = I the top eigenvalue
    # sits at most at -1 (the -min diag Lambda bound).
    for seed in range(10):
        c, _, _ = _random_controller(seed)
        assert matrix_certificate(c) <= -1.0 + 1e-9


def test_matrix_certificate_zero_g():
    c = _scalar_controller(0.0, 0.5, 0.85)
    assert c.alpha == 0.0
    expected = -(c.alpha + np.exp(0.5))
    assert matrix_certificate(c) == pytest.approx(expected, rel=1e-12)


def test_matrix_certificate_detects_halved_alpha():
    # G = I, eps = 1, Lambda = e^-10 I: true alpha = 1, halved alpha = 0.5
    # leaves a positive residual 0.5 - e^-10.
    c = _scalar_controller(1.0, -10.0, 1.0)
    assert c.alpha == pytest.approx(1.0, abs=1e-11)
    from dataclasses import replace

    tampered = replace(c, alpha=c.alpha / 2.0)
    res = matrix_certificate(tampered)
    assert res == pytest.approx(0.5 - np.exp(-10.0), abs=1e-9)
    assert res > 0


def test_matrix_certificate_matches_jacobi_oracle():
    for seed in range(20):
        c, _, _ = _random_controller(seed, n=3, q=2)
        mc = c.epsilon * (c.g_c @ c.g_c.T)
        mc[np.diag_indices(mc.shape[0])] -= c.alpha + c.lam_diag
        ref = float(eig_sym_jacobi(mc)[0])
        assert matrix_certificate(c) == pytest.approx(ref, abs=1e-10)


def _zero_trajectory(c, n, steps=20, dt=0.01):
    from phsync.simulate import Trajectory

    times = np.arange(steps + 1) * dt
    z = np.zeros((steps + 1, n))
    zc = np.zeros((steps + 1, c.state_dim))
    return Trajectory(times, z, z.copy(), zc, z.copy(), z.copy(),
                      np.zeros(steps + 1), np.ones(steps + 1), np.zeros(steps + 1), dt)


def test_trajectory_dissipation_zero_trajectory():
    c, _, _ = _random_controller(1)
    traj = _zero_trajectory(c, 4)
    assert trajectory_dissipation(traj, c, OutputStrictPassive(c.epsilon)) == 0.0
    assert trajectory_dissipation(traj, c, Passive()) == 0.0
    assert trajectory_dissipation(traj, c, L2Gain(1.0 / c.epsilon)) == 0.0


def test_trajectory_dissipation_residual_small_on_random_rollouts():
    for seed in range(10):
        c, _, g = _random_controller(seed, n=4)
        plant = KuramotoParams(4, 1.0, np.zeros(4), adjacency(g))
        init = sample_initial(4, c.state_dim, SeededRng(seed, 3))
        traj = rollout(plant, c, init, RolloutConfig(0.005, 2.0))
        res = trajectory_dissipation(traj, c, OutputStrictPassive(c.epsilon))
        assert res <= 0.005 * 50  # coarse cap; acceptance pins the scaled tolerance


def test_trajectory_dissipation_passive_leq_osp():
    # Passive supply is pointwise larger, so its violation is never larger.
    for seed in range(10):
        c, _, g = _random_controller(seed, n=4)
        plant = KuramotoParams(4, 1.0, np.zeros(4), adjacency(g))
        init = sample_initial(4, c.state_dim, SeededRng(seed, 3))
        traj = rollout(plant, c, init, RolloutConfig(0.01, 2.0))
        res_passive = trajectory_dissipation(traj, c, Passive())
        res_osp = trajectory_dissipation(traj, c, OutputStrictPassive(c.epsilon))
        assert res_passive <= res_osp + 1e-15


def test_trajectory_dissipation_residual_scales_with_dt():
    # Drive the controller open loop with a probe so the residual is nonzero,
    # then check halving dt at least roughly halves it.
    c, _, _ = _random_controller(3, n=4)
    from phsync.verify import _max_storage_violation, _supply_series
    from phsync.controller import hamiltonian

    def residual(dt):
        steps = int(round(2.0 / dt))
        t = np.arange(steps + 1) * dt
        y = 2.0 * np.sin(3.0 * t[:, None] + np.arange(4)[None, :])
        u, xi = open_loop_response(c, y, dt)
        storage = np.array([hamiltonian(c, xi[k]) for k in range(len(xi))])
        supply = _supply_series(OutputStrictPassive(c.epsilon), u, y)
        return _max_storage_violation(storage, supply, dt)

    r_coarse = residual(2e-3)
    r_fine = residual(1e-3)
    assert r_coarse > 0
    assert r_fine <= r_coarse / 1.5


def test_open_loop_response_zero_input_zero_output():
    c, _, _ = _random_controller(4)
    y = np.zeros((50, c.input_dim))
    u, xi = open_loop_response(c, y, 0.01)
    assert not u.any() and not xi.any()


def test_probe_corpus_structure():
    cfg = RolloutConfig(0.01, 1.0)
    probes = probe_corpus(3, cfg, SeededRng(5, 6))
    names = [name for name, _ in probes]
    assert len(probes) == 21  # (step + 5 sinusoids + noise) x 3 amplitudes
    assert sum("step" in n for n in names) == 3
    assert sum("sin" in n for n in names) == 15
    assert sum("noise" in n for n in names) == 3
    t = np.arange(cfg.steps + 1) * cfg.dt
    for _, fn in probes:
        out = fn(t)
        assert out.shape == (len(t), 3)


def test_empirical_gain_below_bound():
    cfg = RolloutConfig(1e-3, 2.0)
    for seed in range(5):
        c, _, _ = _random_controller(seed, n=4, epsilon=0.85)
        probes = probe_corpus(c.input_dim, cfg, SeededRng(seed, 6))
        gamma_hat, _ = empirical_l2_gain(c, probes, cfg)
        assert gamma_hat <= (1.0 + 0.05) / 0.85


def test_empirical_gain_excludes_zero_probes_and_degenerate_fit():
    c, _, _ = _random_controller(6)
    cfg = RolloutConfig(0.01, 1.0)
    zero = ("zero", lambda t: np.zeros((len(t), c.input_dim)))
    good = probe_corpus(c.input_dim, cfg, SeededRng(6, 6))[:3]
    gamma_with, _ = empirical_l2_gain(c, list(good) + [zero], cfg)
    gamma_without, _ = empirical_l2_gain(c, list(good), cfg)
    assert gamma_with == pytest.approx(gamma_without, rel=1e-12)
    with pytest.raises(NumericError):
        empirical_l2_gain(c, [zero, zero], cfg)


def test_closed_loop_check_random_controller():
    c, _, g = _random_controller(7, n=4)
    plant = KuramotoParams(4, 1.0, np.zeros(4), adjacency(g))
    inits = [sample_initial(4, c.state_dim, SeededRng(7, 3)) for _ in range(2)]
    report = closed_loop_check(plant, c, inits, RolloutConfig(0.01, 2.0), SeededRng(7, 6))
    # Dissipation and gain guarantees are parameter independent.
    assert report.verdicts["matrix_certificate"]
    assert report.verdicts["controller_dissipation"]
    assert report.verdicts["plant_dissipation"]
    assert report.verdicts["l2_gain"]
    assert report.certificates_pass


def test_closed_loop_check_zero_start_zero_residuals():
    c, _, g = _random_controller(8, n=4)
    plant = KuramotoParams(4, 1.0, np.zeros(4), adjacency(g))
    init = ClosedLoopState(np.zeros(4), np.zeros(4), np.zeros(c.state_dim))
    report = closed_loop_check(plant, c, [init], RolloutConfig(0.01, 1.0), SeededRng(8, 6))
    assert report.controller_residual == 0.0
    assert report.plant_residual == 0.0
    assert report.verdicts["consensus"]  # phases identical throughout


def test_closed_loop_check_flags_tampered_alpha():
    from dataclasses import replace

    c = _scalar_controller(1.0, -10.0, 1.0)
    tampered = replace(c, alpha=c.alpha / 2.0)
    plant = KuramotoParams(1, 1.0, np.zeros(1), np.zeros((1, 1)))
    init = ClosedLoopState(np.zeros(1), np.array([0.5]), np.zeros(1))
    report = closed_loop_check(plant, tampered, [init], RolloutConfig(0.01, 1.0), SeededRng(9, 6))
    assert report.matrix_residual > 0
    assert not report.verdicts["matrix_certificate"]
    assert not report.certificates_pass


def test_report_json_round_trip_fields():
    import json

    c, _, g = _random_controller(10, n=4)
    plant = KuramotoParams(4, 1.0, np.zeros(4), adjacency(g))
    inits = [sample_initial(4, c.state_dim, SeededRng(10, 3))]
    report = closed_loop_check(plant, c, inits, RolloutConfig(0.01, 1.0), SeededRng(10, 6))
    doc = json.loads(report_to_json(report, config_hash="cafe"))
    assert doc["config_hash"] == "cafe"
    assert set(doc["verdicts"]) == {
        "matrix_certificate",
        "controller_dissipation",
        "plant_dissipation",
        "l2_gain",
        "consensus",
    }
    assert doc["sample_counts"]["probes"] == 21
    assert doc["matrix_residual"] == report.matrix_residual


def test_dissipation_tolerance_form():
    assert dissipation_tolerance(0.01, 4.0) == pytest.approx(0.05)
