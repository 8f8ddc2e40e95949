"""Tests for the exploration design SDP: program shapes, solve quality,
iteration bookkeeping, and the sample-based certificate checker."""

import dataclasses

import numpy as np
import pytest

from texplore import (
    ConstructionError,
    ExperimentConfig,
    ExplorationInputSpec,
    ExplorationProblem,
    FrequencyGrid,
    InfeasibleDesignError,
    InvalidParameterError,
    LinearModel,
    ParameterEllipsoid,
    ScenarioConfig,
    assemble_spectral,
    build_exploration_lmis,
    build_exploration_problem,
    certify_design,
    iterate_design,
    model_to_theta,
    naive_design,
    solve_exploration_sdp,
)
from texplore import design as design_mod
from texplore.design import SolveOutcome, reduced_z_proxy
from texplore.lmi import VERIFY_TOL
from texplore.pipeline import rebuild_problem

FAST = LinearModel(A=np.array([[0.5, 0.1], [0.0, 0.3]]), B=np.array([[1.0], [0.5]]))
THETA0 = model_to_theta(FAST)
GRID = FrequencyGrid(multiples=np.array([0, 4, 8, 12]), T=16)
PRIOR = ParameterEllipsoid(center=THETA0, shape=1e4 * np.eye(6), radius=1.0)
SCENARIO = ScenarioConfig(sample_count=40, seed=1)

SMALL = build_exploration_problem(
    FAST, PRIOR, GRID, epsilon=0.5, gamma_w=0.05, D_des=0.5 * np.eye(3),
    scenario=SCENARIO,
)
PROXY = np.full((4, 1), 1.0)


# ---------------------------------------------------------------------------
# problem assembly and validation


def test_problem_dimensions_and_isotropy():
    assert SMALL.n_phi == 3
    assert SMALL.n_Z == 3 + 2 * 9
    assert SMALL.n_reduced == 1 + 2 * 3
    assert SMALL.isotropic_weight() == pytest.approx(0.5, rel=1e-14)
    aniso = dataclasses.replace(SMALL, D_des=np.diag([1.0, 2.0, 3.0]))
    assert aniso.isotropic_weight() is None


def test_problem_validation_rejects_bad_inputs():
    ok = dict(
        epsilon=SMALL.epsilon, gamma_w=SMALL.gamma_w, horizon=SMALL.horizon,
        grid=SMALL.grid, D_des=SMALL.D_des, bounds=SMALL.bounds,
        blocks=SMALL.blocks, prior=SMALL.prior, n_x=2, n_u=1,
    )
    with pytest.raises(InvalidParameterError):
        ExplorationProblem(**{**ok, "epsilon": 1.0})
    with pytest.raises(InvalidParameterError):
        ExplorationProblem(**{**ok, "epsilon": 0.0})
    with pytest.raises(InvalidParameterError):
        ExplorationProblem(**{**ok, "gamma_w": -0.1})
    with pytest.raises(InvalidParameterError):
        ExplorationProblem(**{**ok, "horizon": 32})
    with pytest.raises(InvalidParameterError):
        ExplorationProblem(**{**ok, "D_des": np.eye(4)})
    bad_sym = np.eye(3)
    bad_sym[0, 1] = 0.5
    with pytest.raises(InvalidParameterError):
        ExplorationProblem(**{**ok, "D_des": bad_sym})
    with pytest.raises(InvalidParameterError):
        ExplorationProblem(**{**ok, "D_des": np.diag([1.0, 1.0, 0.0])})
    no_noise = dataclasses.replace(SMALL.bounds, W_phi_bar=None, w_z_scalar=None)
    with pytest.raises(InvalidParameterError):
        ExplorationProblem(**{**ok, "bounds": no_noise})
    small_prior = ParameterEllipsoid(center=np.zeros(4), shape=np.eye(4), radius=1.0)
    with pytest.raises(InvalidParameterError):
        ExplorationProblem(**{**ok, "prior": small_prior})


def test_factored_program_shapes_and_variable_sharing():
    prog, vm = build_exploration_lmis(SMALL, PROXY)
    assert {lmi.name: lmi.size for lmi in prog.lmis} == {
        "energy": 5, "cross": 11, "quad": 15, "excite": 25,
    }
    assert vm.reduced and vm.mirror_tied
    # mirror pairs on {0,4,8,12}@16: 4<->12 share a variable, 0 and 8 are their
    # own mirrors, so three distinct amplitude variables remain
    assert len(set(vm.amplitudes.tolist())) == 3
    assert vm.amplitudes[1] == vm.amplitudes[3]
    # with tied amplitudes every LMI has been rewritten over the reals
    assert not any(lmi.is_complex for lmi in prog.lmis)


def test_unfactored_program_shapes():
    prog, vm = build_exploration_lmis(SMALL, PROXY, factored=False)
    assert {lmi.name: lmi.size for lmi in prog.lmis} == {
        "energy": 5, "cross": 33, "quad": 45, "excite": 25,
    }
    assert not vm.reduced


def test_benchmark_program_shapes():
    cfg = dataclasses.replace(ExperimentConfig(), scenario_samples=25).validate()
    problem, _ = rebuild_problem(cfg)
    prog, vm = build_exploration_lmis(problem, np.full((20, 1), 1.0))
    assert {lmi.name: lmi.size for lmi in prog.lmis} == {
        "energy": 21, "cross": 41, "quad": 101, "excite": 125,
    }
    assert vm.reduced
    # lines 0 and 50 of 100 are self-mirrored; the other 18 pair up
    assert len(set(vm.amplitudes.tolist())) == 11
    assert not any(lmi.is_complex for lmi in prog.lmis)


def test_reduced_proxy_matches_lifted_assembly():
    """Dividing the Kronecker identity factor out of the canonical proxy is
    exact: kron(Z_reduced, I) must reproduce the assembled lifted matrix."""
    spec = ExplorationInputSpec(SMALL.grid, PROXY)
    Z_full = assemble_spectral(SMALL.blocks, spec, SMALL.D_des).Z_u
    Z_red = reduced_z_proxy(SMALL, spec.U_e, SMALL.isotropic_weight())
    assert Z_red.shape == (SMALL.n_reduced, SMALL.L * SMALL.n_x)
    assert np.abs(Z_full - np.kron(Z_red, np.eye(SMALL.n_phi))).max() < 1e-12
    top = np.sqrt(0.5) * (spec.U_e @ np.ones(SMALL.L)) @ SMALL.blocks.Vx.conj().T
    assert np.allclose(Z_red[0], top, atol=1e-14)


def test_construction_guards():
    with pytest.raises(ConstructionError):
        build_exploration_lmis(SMALL, np.ones((3, 2)))
    aniso = dataclasses.replace(SMALL, D_des=np.diag([1.0, 2.0, 3.0]))
    with pytest.raises(ConstructionError):
        build_exploration_lmis(aniso, PROXY, factored=True)
    spec = ExplorationInputSpec(SMALL.grid, PROXY)
    Z_red = reduced_z_proxy(SMALL, spec.U_e, 0.5)
    canonical = np.kron(Z_red, np.eye(3))
    prog, _ = build_exploration_lmis(SMALL, PROXY, Z_hat=canonical)
    assert len(prog.lmis) == 4
    with pytest.raises(ConstructionError):
        build_exploration_lmis(SMALL, PROXY, Z_hat=canonical + 0.1)


# ---------------------------------------------------------------------------
# single solves


def test_solve_is_feasible_and_energy_tight():
    out = solve_exploration_sdp(SMALL, PROXY)
    assert min(out.residuals.values()) >= -VERIFY_TOL
    amp_norm = float(np.linalg.norm(out.amplitudes))
    assert out.gamma_e >= amp_norm - 1e-9
    # minimizing gamma_e drives the energy inequality to equality
    assert out.gamma_e == pytest.approx(amp_norm, rel=1e-4)
    assert np.all(out.taus >= -1e-9)
    assert np.allclose(out.D1, out.D1.T)
    assert np.allclose(out.D2, out.D2.T)


def test_factored_matches_unfactored_solution():
    a = solve_exploration_sdp(SMALL, PROXY)
    b = solve_exploration_sdp(SMALL, PROXY, factored=False)
    assert a.factored and not b.factored
    assert a.gamma_e == pytest.approx(b.gamma_e, rel=1e-4)


def test_realified_matches_complex_path():
    tied = solve_exploration_sdp(SMALL, PROXY)
    free = solve_exploration_sdp(SMALL, PROXY, mirror_tie=False)
    assert tied.gamma_e == pytest.approx(free.gamma_e, rel=5e-3)
    # the free path symmetrizes after solving, so both spectra are mirrored
    for out in (tied, free):
        amps = out.amplitudes
        assert amps[1, 0] == pytest.approx(amps[3, 0], abs=1e-8)


def test_tied_amplitudes_cost_at_least_the_free_optimum():
    free = solve_exploration_sdp(SMALL, PROXY)
    tied = solve_exploration_sdp(SMALL, PROXY, tie_amplitudes=True)
    assert np.ptp(tied.amplitudes) == 0.0
    assert tied.gamma_e >= free.gamma_e - 1e-6


def test_gigantic_deviation_caps_are_infeasible():
    big = dataclasses.replace(
        SMALL.bounds, Gamma_tilde_phi=1e8 * np.eye(3), Gamma_tilde_x=1e8 * np.eye(8)
    )
    hopeless = dataclasses.replace(SMALL, bounds=big)
    with pytest.raises(InfeasibleDesignError):
        iterate_design(hopeless, max_iterations=2)


# ---------------------------------------------------------------------------
# iteration loop


def test_iterate_design_keeps_best_and_converges():
    des = iterate_design(SMALL)
    assert des.converged
    assert des.iterations == len(des.history)
    solved = [h for h in des.history if h["status"] == "solved"]
    assert des.gamma_e == min(h["gamma_e"] for h in solved)
    last = des.history[-1]
    assert last.get("stop") in {"settled", "negligible", "increase"} or (
        last["status"] == "infeasible"
    )
    for h in solved:
        assert h["worst_residual"] >= -VERIFY_TOL
    assert des.spec.amplitudes.shape == (4, 1)


def test_iterate_seed_is_mirror_averaged():
    seed = np.array([[1.0], [2.0], [0.5], [4.0]])
    des = iterate_design(SMALL, seed_amplitudes=seed, max_iterations=1)
    assert np.allclose(des.proxy_amplitudes.ravel(), [1.0, 3.0, 0.5, 3.0])
    # a single iteration cannot observe the energy settling
    assert not des.converged
    assert des.iterations == 1


def _scripted_outcome(problem, gamma: float) -> SolveOutcome:
    amps = np.full((problem.L, problem.n_u), gamma / 10.0)
    zeros = np.zeros((problem.n_Z, problem.n_Z))
    return SolveOutcome(
        amplitudes=amps, gamma_e=gamma, taus=np.ones(3), D1=zeros, D2=zeros,
        proxy_amplitudes=amps, Z_hat=zeros, residuals={"energy": 0.0},
        solver="scripted", factored=True, symmetrized=False,
    )


def _script_solves(monkeypatch, gammas):
    queue = iter(gammas)

    def fake_solve(problem, proxy, **kwargs):
        g = next(queue)
        if g is None:
            raise InfeasibleDesignError("scripted infeasibility")
        return _scripted_outcome(problem, g)

    monkeypatch.setattr(design_mod, "solve_exploration_sdp", fake_solve)


def test_iterate_stops_when_energy_increases(monkeypatch):
    _script_solves(monkeypatch, [5.0, 3.0, 4.0])
    des = iterate_design(SMALL, max_iterations=10)
    assert des.gamma_e == 3.0
    assert des.converged
    assert des.iterations == 3
    assert des.history[-1]["stop"] == "increase"
    assert np.allclose(des.spec.amplitudes, 0.3)


def test_iterate_settles_on_small_relative_change(monkeypatch):
    _script_solves(monkeypatch, [5.0, 5.001])
    des = iterate_design(SMALL, max_iterations=10)
    assert des.converged
    assert des.history[-1]["stop"] == "settled"
    # the best iterate is kept even when it is not the last one
    assert des.gamma_e == 5.0


def test_iterate_treats_later_infeasibility_as_converged(monkeypatch):
    _script_solves(monkeypatch, [5.0, 3.0, None])
    des = iterate_design(SMALL, max_iterations=10)
    assert des.converged
    assert des.gamma_e == 3.0
    assert des.history[-1] == {"iteration": 2, "status": "infeasible"}


def test_iterate_propagates_first_solve_infeasibility(monkeypatch):
    _script_solves(monkeypatch, [None])
    with pytest.raises(InfeasibleDesignError):
        iterate_design(SMALL, max_iterations=5)
    with pytest.raises(InvalidParameterError):
        iterate_design(SMALL, max_iterations=0)


# ---------------------------------------------------------------------------
# certification


def test_converged_design_certifies():
    des = iterate_design(SMALL)
    report = certify_design(des, samples=40, seed=3)
    assert report.certified
    assert report.failures == 0
    assert report.samples_checked >= 30
    assert min(report.worst_margins.values()) >= -1e-7
    assert report.energy_margin >= -1e-9
    rec = report.to_record()
    assert rec["certified"] is True
    assert set(rec) >= {"margin_cross", "margin_quad", "margin_excite"}


def test_halved_amplitudes_fail_certification():
    des = iterate_design(SMALL)
    halved = dataclasses.replace(
        des, spec=ExplorationInputSpec(SMALL.grid, des.spec.amplitudes / 2.0)
    )
    report = certify_design(halved, samples=40, seed=3)
    assert not report.certified
    assert report.failures > 0


def test_slack_coupling_and_summary():
    des = iterate_design(SMALL, max_iterations=2)
    assert np.allclose(des.D1 + des.D2 + des.D3, 0.0, atol=0.0)
    s = des.summary()
    assert s["gamma_e"] == pytest.approx(des.gamma_e)
    assert s["spectral_energy"] == pytest.approx(des.spec.total_energy())
    assert isinstance(s["converged"], bool)


def test_naive_design_shares_one_amplitude():
    des = naive_design(SMALL, max_iterations=3)
    assert np.ptp(des.spec.amplitudes) == 0.0
    report = certify_design(des, samples=30, seed=7)
    assert report.certified
