import numpy as np
import pytest

from plom.demo.generator import generate, preset
from plom.exceptions import DimensionMismatch, EmptyAdmissibleSet, InputError, RankDeficient, ShapeMismatch
from plom.models import InstantRecord, IsdeConfig, KernelBasis, KernelKind, LearnedSet, OrderingFlag, PlomConfig
from plom.services import gkde, info_metrics, isde, kernels, sampler, selection


def _basis(g):
    return KernelBasis(kind=KernelKind.DMAPS, eigvals=np.ones(g.shape[1]), eigvecs=g, m=g.shape[1])


def _record(n, d2, mi, nu=3):
    return InstantRecord(
        n=n,
        t=0.1 * n,
        gamma_deg=10.0,
        d2=d2,
        d2_over_nu=d2 / nu,
        kl=0.1,
        entropy=1.0,
        mi=mi,
        admissible=d2 / nu <= 0.002,
    )


@pytest.mark.parametrize("method", ["principal", "normalized"])
def test_angle_is_symmetric_and_ignores_column_order(method, rng):
    a = _basis(rng.standard_normal((30, 4)))
    b = _basis(rng.standard_normal((30, 4)))
    shuffled = _basis(b.eigvecs[:, [2, 0, 3, 1]])
    forward = selection.subspace_angle(a, b, method=method)
    assert selection.subspace_angle(b, a, method=method) == pytest.approx(forward, abs=1e-10)
    assert selection.subspace_angle(a, shuffled, method=method) == pytest.approx(forward, abs=1e-10)


@pytest.mark.parametrize("method", ["principal", "normalized"])
def test_angle_of_a_basis_with_itself(method, rng):
    q, _ = np.linalg.qr(rng.standard_normal((20, 4)))
    assert selection.subspace_angle(_basis(q), _basis(q), method=method) == pytest.approx(0.0, abs=1e-5)


def test_only_the_principal_angle_vanishes_on_a_non_orthogonal_basis(rng):
    q, _ = np.linalg.qr(rng.standard_normal((20, 3)))
    skewed = _basis(q @ np.array([[1.0, 0.8, 0.0], [0.0, 1.0, 0.5], [0.0, 0.0, 1.0]]))
    assert selection.subspace_angle(skewed, skewed) == pytest.approx(0.0, abs=1e-5)
    assert selection.subspace_angle(skewed, skewed, method="normalized") > 10.0


def test_principal_angle_ignores_column_scaling(manifold_ts):
    basis = kernels.dmaps_basis_at(manifold_ts, 1.0)
    scaled = _basis(basis.eigvecs * np.array([3.0, -1.0, 0.5, 10.0]))
    assert selection.subspace_angle(basis, scaled) == pytest.approx(0.0, abs=1e-5)


def test_orthogonal_spans_are_at_ninety_degrees():
    eye = np.eye(6)
    assert selection.subspace_angle(_basis(eye[:, :2]), _basis(eye[:, 2:4])) == pytest.approx(90.0)


def test_angle_errors(rng):
    a = rng.standard_normal((10, 3))
    with pytest.raises(DimensionMismatch):
        selection.subspace_angle(_basis(a), _basis(a[:, :2]))
    with pytest.raises(RankDeficient):
        selection.subspace_angle(_basis(np.column_stack([a[:, :2], a[:, 0]])), _basis(a))
    with pytest.raises(InputError):
        selection.subspace_angle(_basis(a), _basis(a), method="largest")


def test_concentration_of_copies_is_zero(gaussian_ts):
    eta_ar = np.tile(gaussian_ts.eta, (1, 4))
    learned = LearnedSet(eta_ar=eta_ar, n_mch=4, lam=np.zeros(0))
    assert selection.concentration(learned, gaussian_ts) == 0.0
    assert selection.concentration(eta_ar, gaussian_ts) == 0.0


def test_concentration_of_independent_draws(gaussian_ts, rng):
    eta_ar = rng.standard_normal((2, 40 * 50))
    # E||A - B||^2 / ||B||^2 = 2 for independent standard samples
    assert selection.concentration(eta_ar, gaussian_ts) == pytest.approx(2.0, rel=0.1)


def test_concentration_shape_mismatch(gaussian_ts):
    with pytest.raises(ShapeMismatch):
        selection.concentration(np.zeros((2, 41)), gaussian_ts)


def test_admissible_set_and_selection():
    d2 = {1: 0.001, 2: 0.009, 3: 0.003}
    assert selection.admissible_set(d2, nu=3, tau_c=0.002) == [1, 3]
    assert selection.select_optimal({1: 0.5, 3: 0.4}) == 3
    assert selection.select_optimal({4: 0.4, 2: 0.4}) == 2
    with pytest.raises(EmptyAdmissibleSet):
        selection.admissible_set(d2, nu=1, tau_c=0.0005)


@pytest.mark.parametrize(
    ("i_h", "i_tb", "i_db", "flag"),
    [
        (1.0, 1.5, 2.0, OrderingFlag.HOLDS),
        (1.0, 2.5, 2.0, OrderingFlag.NOT_IMPROVED),
        (1.0, None, 2.0, OrderingFlag.NOT_IMPROVED),
        (2.0, 1.5, 1.0, OrderingFlag.ASSUMPTION_FAILED),
    ],
)
def test_ordering_flag(i_h, i_tb, i_db, flag):
    assert selection.ordering_flag(i_h, i_tb, i_db) == flag


def test_summarize_picks_the_lowest_admissible_mi():
    records = [_record(1, 0.003, 1.6), _record(2, 0.03, 1.1), _record(3, 0.004, 1.4)]
    report = selection.summarize(records, nu=3, n_d=400, n_ar=40_000, mi_h=1.2, mi_db=1.9)

    assert report.admissible == [1, 3]
    assert report.n_opt == 3
    assert report.mi_tb_opt == 1.4
    assert report.ordering == OrderingFlag.HOLDS
    assert not report.fell_back_to_dmaps
    assert report.mi_norm_h == pytest.approx(report.mi_norm_tb_opt, abs=1e-10)
    assert report.chi_valid


def test_summarize_falls_back_to_dmaps():
    records = [_record(1, 0.3, 1.6), _record(2, 0.4, 1.1)]
    report = selection.summarize(records, nu=3, n_d=400, n_ar=40_000, mi_h=1.2, mi_db=1.9)
    assert report.fell_back_to_dmaps
    assert report.n_opt is None
    assert report.admissible == []
    assert report.chi_opt is None


def test_evaluate_instants(gaussian_model, small_traj):
    ts = gaussian_model.ts
    dmaps = kernels.dmaps_basis_at(ts, 1.0)
    matrices = kernels.transient_connected_matrices(ts, small_traj, [1, 2], 1.0)
    bases = kernels.transient_bases(matrices, dmaps.m)
    cfg = PlomConfig(dt_sv=sampler.default_dt_sv(gaussian_model.bw.s_hat), s_hat=gaussian_model.bw.s_hat, m0=4, n_mch=3)

    progress = []
    records, learned = selection.evaluate_instants(
        gaussian_model, bases, dmaps, cfg, progress_callback=lambda done, total: progress.append((done, total))
    )

    assert [r.n for r in records] == [1, 2]
    assert sorted(learned) == [1, 2]
    assert progress == [(1, 2), (2, 2)]
    for record in records:
        assert record.d2 == pytest.approx(selection.concentration(learned[record.n], ts))
        assert record.admissible == (record.d2_over_nu <= 0.002)
        assert 0.0 <= record.gamma_deg <= 90.0


def test_learned_metrics_keys(gaussian_model):
    ts = gaussian_model.ts
    cfg = PlomConfig(dt_sv=0.1, s_hat=gaussian_model.bw.s_hat, m0=3, n_mch=2)
    learned = sampler.generate(gaussian_model, sampler.full_basis(ts.n_d), cfg)
    metrics = selection.learned_metrics(learned, ts, info_metrics.sample_set(ts.eta))
    assert set(metrics) == {"d2", "d2_over_nu", "kl", "entropy", "mi"}


@pytest.mark.slow
def test_reduced_bases_keep_learned_sets_concentrated():
    ts = generate(preset("appli1-like", seed=7))
    model = gkde.build_model(ts)
    dmaps = kernels.dmaps_basis(ts)
    cfg = PlomConfig(dt_sv=sampler.default_dt_sv(model.bw.s_hat), s_hat=model.bw.s_hat, n_mch=100, seed=1)
    reference = info_metrics.sample_set(ts.eta)

    rodb = selection.learned_metrics(sampler.generate(model, dmaps, cfg), ts, reference)
    baseline = selection.learned_metrics(sampler.generate(model, sampler.full_basis(ts.n_d), cfg), ts, reference)

    isde_cfg = IsdeConfig.from_bandwidths(model.bw, kappa=30, n_instants=5, n_mc=400, seed=2)
    traj = isde.simulate(model, isde_cfg)
    assert dmaps.eps_dm is not None
    matrices = kernels.transient_connected_matrices(ts, traj, list(range(1, 6)), dmaps.eps_dm)
    bases = kernels.transient_bases(matrices, dmaps.m)
    records, _ = selection.evaluate_instants(model, bases, dmaps, cfg, tau_c=0.01)

    assert rodb["d2_over_nu"] <= 0.01
    admissible = [r for r in records if r.admissible]
    assert admissible
    assert all(r.d2_over_nu <= 0.01 for r in admissible)
    assert baseline["d2"] >= 0.3
    # Concentration comes with a larger divergence from the training GKDE
    assert rodb["kl"] > baseline["kl"]
    assert all(r.kl > baseline["kl"] for r in admissible)
