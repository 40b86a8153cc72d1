import csv
import io

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from segres.core import Codebook, ImageField, Kernel, Membership, ModelParams, ObservationMask
from segres.corrupt import DegradeSpec, degrade, make_scene
from segres.driver import (
    TRACE_COLUMNS,
    DomainError,
    Termination,
    check_partial_minimizer,
    energy,
    fixed_g_energy,
    run,
)
from segres.metrics import segmentation_accuracy
from segres.restore import ConvergenceWarning


def _two_level(size=32):
    lab = np.zeros((size, size), dtype=int)
    lab[size // 4 : 3 * size // 4, size // 5 : size // 2] = 1
    lab[size // 8 : size // 3, 2 * size // 3 :] = 1
    f = np.where(lab == 1, 0.8, 0.2)[None]
    return ImageField(f), lab


# --- energy -----------------------------------------------------------------

def test_energy_of_exact_segmentation_is_tv_only():
    img, lab = _two_level(16)
    u = Membership(np.stack([lab == 0, lab == 1]).astype(float))
    c = Codebook(np.array([[0.2], [0.8]]))
    e = energy(img, img, u, c, ObservationMask.full((16, 16)), ModelParams(mu=3, lam=4, phases=2))
    assert e.restoration == 0 and e.segmentation == 0
    assert e.tv == pytest.approx(oracles.tv_loop(u.data[0]) + oracles.tv_loop(u.data[1]))


def test_energy_single_phase_is_variance_term():
    f = np.random.default_rng(0).uniform(size=(1, 5, 5))
    mean = f.mean()
    g = ImageField(np.full_like(f, mean))
    u = Membership(np.stack([np.ones((5, 5)), np.zeros((5, 5))]))
    c = Codebook(np.array([[mean], [0.0]]))
    e = energy(ImageField(f), g, u, c, ObservationMask.full((5, 5)), ModelParams(mu=2, lam=1, phases=2))
    assert e.total == pytest.approx(2 * np.sum((f - mean) ** 2), rel=1e-12)


@pytest.mark.parametrize("channels,blur", [(1, False), (1, True), (3, True)])
def test_energy_matches_loop(channels, blur):
    rng = np.random.default_rng(channels + 10 * blur)
    f = rng.uniform(size=(channels, 5, 5))
    g = rng.uniform(size=(channels, 5, 5))
    u = rng.dirichlet(np.ones(3), size=(5, 5)).transpose(2, 0, 1)
    c = rng.uniform(size=(3, channels))
    w = (rng.uniform(size=(5, 5)) > 0.3) * 1.0
    taps = None
    if blur:
        taps = rng.uniform(0.1, 1, (3, 3))
        taps /= taps.sum()
    p = ModelParams(mu=1.7, lam=0.6, phases=3, kernel=None if taps is None else Kernel(taps))
    e = energy(ImageField(f), ImageField(g), Membership(u), Codebook(c), ObservationMask(w), p)
    assert e.total == pytest.approx(oracles.energy_loop(f, g, u, c, w, 1.7, 0.6, taps), rel=1e-12)


@pytest.mark.parametrize("fidelity", ["gaussian", "impulsive"])
def test_energy_components_nonnegative(fidelity):
    rng = np.random.default_rng(1)
    args = (
        ImageField(rng.uniform(size=(1, 6, 6))),
        ImageField(rng.uniform(size=(1, 6, 6))),
        Membership(rng.dirichlet(np.ones(2), size=(6, 6)).transpose(2, 0, 1)),
        Codebook(rng.uniform(size=(2, 1))),
        ObservationMask.full((6, 6)),
    )
    e = energy(*args, ModelParams(mu=1, lam=1, phases=2, fidelity=fidelity))
    assert min(e.restoration, e.segmentation, e.tv) >= 0
    assert e.total == pytest.approx(e.restoration + e.segmentation + e.tv)


def test_poisson_energy_and_domain_error():
    rng = np.random.default_rng(2)
    f = rng.uniform(0.1, 1, size=(1, 4, 4))
    g = rng.uniform(0.1, 1, size=(1, 4, 4))
    rest = (ImageField(f), ImageField(g), Membership.uniform(2, (4, 4)), Codebook(np.zeros((2, 1))), ObservationMask.full((4, 4)))
    p = ModelParams(mu=1, lam=1, phases=2, fidelity="poisson")
    assert energy(*rest, p).restoration == pytest.approx(np.sum(g - f * np.log(g)))
    bad = ImageField(np.where(np.arange(16).reshape(1, 4, 4) == 5, -0.1, g))
    with pytest.raises(DomainError):
        energy(rest[0], bad, *rest[2:], p)


def test_impulsive_energy_is_l1():
    f = np.zeros((1, 3, 3))
    g = np.full((1, 3, 3), 0.5)
    e = energy(ImageField(f), ImageField(g), Membership.uniform(2, (3, 3)), Codebook(np.zeros((2, 1))),
               ObservationMask.full((3, 3)), ModelParams(mu=2, lam=1, phases=2, fidelity="impulsive"))
    assert e.restoration == pytest.approx(2 * 9 * 0.5)


# --- run --------------------------------------------------------------------

def test_clean_two_level_image_segmented_exactly():
    img, lab = _two_level()
    res = run(img, None, ModelParams(mu=1, lam=5, phases=2))
    assert np.mean(res.labels.labels == lab) == 1.0
    # relaxed memberships stay slightly soft along edges, so c is close, not exact
    np.testing.assert_allclose(res.c.values[:, 0], [0.2, 0.8], atol=1e-2)
    assert res.status is Termination.CONVERGED


def test_baseline_matches_full_mode_on_clean_image():
    img, _ = _two_level()
    full = run(img, None, ModelParams(mu=1, lam=5, phases=2))
    base = run(img, None, ModelParams(mu=1, lam=5, phases=2, baseline_mode=True))
    np.testing.assert_array_equal(full.labels.labels, base.labels.labels)
    np.testing.assert_array_equal(base.g.data, img.data)


def test_four_phase_noisy_scene():
    img, truth, _ = make_scene("shapes4", 64, seed=0)
    f, mask, _ = degrade(img, DegradeSpec(noise_variance=0.05, seed=0))
    res = run(f, mask, ModelParams(mu=1000, lam=10, phases=4))
    assert segmentation_accuracy(res.labels, truth) >= 99.0
    assert res.trace.is_monotone()


@settings(max_examples=6, deadline=None)
@given(
    st.sampled_from(["shapes2", "barcode", "shapes4", "rgb-3"]),
    st.integers(0, 1000),
    st.sampled_from([0.0, 0.3]),
    st.sampled_from(["none", "gaussian:5:2"]),
)
@pytest.mark.filterwarnings("ignore::segres.restore.ConvergenceWarning")
def test_energy_never_increases(scene, seed, drop, blur):
    img, truth, _ = make_scene(scene, 32, seed)
    f, mask, kernel = degrade(img, DegradeSpec(0.02, blur, drop, seed))
    res = run(f, mask, ModelParams(mu=50, lam=5, phases=truth.phases, kernel=kernel, max_outer=40))
    assert res.trace.is_monotone(1e-9)
    if res.status is Termination.CONVERGED:
        assert res.trace.rows[-1].dc_norm <= res.params.epsilon


def test_run_is_deterministic():
    img, _, _ = make_scene("shapes4", 32, 3)
    f, mask, kernel = degrade(img, DegradeSpec(0.01, "motion:5:90", 0.2, 3))
    p = ModelParams(mu=100, lam=5, phases=4, kernel=kernel)
    a, b = run(f, mask, p), run(f, mask, p)
    np.testing.assert_array_equal(a.labels.labels, b.labels.labels)
    assert [r.as_list()[:-1] for r in a.trace.rows] == [r.as_list()[:-1] for r in b.trace.rows]
    np.testing.assert_array_equal(a.g.data, b.g.data)


def test_unconverged_cg_summarized_once_per_run():
    img, _, _ = make_scene("shapes4", 32, 0)
    f, mask, kernel = degrade(img, DegradeSpec(1e-3, "gaussian:9:4", 0.4, 0))
    p = ModelParams(mu=100, lam=5, phases=4, kernel=kernel, cg_max_iter=5, max_outer=5)
    with pytest.warns(ConvergenceWarning) as caught:
        res = run(f, mask, p)
    assert len(caught) == 1 and "g-steps" in str(caught[0].message)
    assert res.trace.cg_unconverged > 0
    assert res.trace.is_monotone()


def test_max_outer_status():
    img, _, _ = make_scene("shapes2", 32, 0)
    f, mask, _ = degrade(img, DegradeSpec(0.2, seed=0))
    res = run(f, mask, ModelParams(mu=1, lam=5, phases=2, max_outer=1, epsilon=1e-12))
    assert res.status is Termination.MAX_OUTER and len(res.trace.rows) == 2


def test_non_gaussian_run_rejected():
    img, _ = _two_level(8)
    with pytest.raises(DomainError):
        run(img, None, ModelParams(mu=1, lam=1, phases=2, fidelity="poisson"))


def test_trace_csv_columns():
    img, _ = _two_level(16)
    res = run(img, None, ModelParams(mu=1, lam=5, phases=2))
    rows = list(csv.reader(io.StringIO(res.trace.to_csv())))
    assert rows[0] == TRACE_COLUMNS
    assert len(rows) == len(res.trace.rows) + 1
    buf = io.StringIO()
    res.trace.to_csv(buf)
    assert buf.getvalue() == res.trace.to_csv()
    assert float(rows[1][1]) == res.trace.rows[0].energy.total


# --- partial minimizer ------------------------------------------------------

def _converged_noisy_run():
    img, _, _ = make_scene("shapes2", 32, 1)
    f, mask, _ = degrade(img, DegradeSpec(0.05, seed=1))
    res = run(f, mask, ModelParams(mu=10, lam=5, phases=2))
    assert res.status is Termination.CONVERGED
    return res


def test_partial_minimizer_ok_on_converged_run():
    report = check_partial_minimizer(_converged_noisy_run(), trials=200, step=1e-3)
    assert report.ok, str(report)


def test_partial_minimizer_detects_shifted_c():
    res = _converged_noisy_run()
    shifted = res.c.values.copy()
    shifted[0, 0] += 0.1
    report = check_partial_minimizer(res, trials=50, c=Codebook(shifted))
    assert "c" in report.violated
    assert "violated" in str(report)


def test_converged_tiny_run_hits_exhaustive_optimum():
    rng = np.random.default_rng(0)
    lab = np.array([[0, 0, 1], [0, 1, 1], [0, 0, 1]])
    f = ImageField((np.where(lab == 1, 0.8, 0.2) + rng.normal(0, 0.05, (3, 3)))[None])
    p = ModelParams(mu=1, lam=10, phases=2, inner_tol=1e-8, max_inner=5000)
    res = run(f, None, p)
    s = (res.g.data[0][None] - res.c.values[:, 0, None, None]) ** 2
    best, _ = oracles.binary_labeling_optimum(s, p.lam)
    restoration = p.mu * np.sum((f.data - res.g.data) ** 2)
    assert fixed_g_energy(res) == pytest.approx(best + restoration, rel=1e-9)
