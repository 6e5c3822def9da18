import dataclasses

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.linalg import subspace_angles

from _cca_oracle import latent_dataset, whitened_svd_cca
from tagrank.cca import (cca_bytes, fit_cca, load_cca, ncca_similarities, ncca_similarity,
                         project, read_cca_bytes, save_cca)
from tagrank.errors import FormatError

seeds = st.integers(0, 2**32 - 1)


@settings(max_examples=40)
@given(seeds, st.integers(25, 80), st.integers(1, 9), st.integers(1, 9))
def test_matches_whitened_svd_oracle(seed, n, dv, dt):
    rng = np.random.default_rng(seed)
    F_v, F_t = latent_dataset(rng, n=n, latent=2, dv=dv, dt=dt, noise=0.3)
    m = fit_cca(F_v, F_t)
    s, Pv, Pt, Cvv, Ctt = whitened_svd_cca(F_v, F_t, m.reg_v, m.reg_t)
    c = m.dim
    np.testing.assert_allclose(m.correlations, s[:c], atol=1e-8)
    assert np.max(np.abs(m.P_v.T @ Cvv @ m.P_v - np.eye(c))) <= 1e-6
    assert np.max(np.abs(m.P_t.T @ Ctt @ m.P_t - np.eye(c))) <= 1e-6
    # compare leading directions whose correlations are well separated
    gaps = np.diff(np.concatenate([[np.inf], s[:c], [-np.inf]]))
    for k in range(c):
        if min(-gaps[k], -gaps[k + 1]) > 1e-3 and s[k] > 1e-3:
            assert subspace_angles(m.P_v[:, [k]], Pv[:, [k]]).max() <= 1e-6
            assert subspace_angles(m.P_t[:, [k]], Pt[:, [k]]).max() <= 1e-6


def test_three_latent_factors():
    F_v, F_t = latent_dataset(np.random.default_rng(11))
    m = fit_cca(F_v, F_t)
    assert m.correlations[:3].min() >= 0.99
    assert m.correlations[3] < 0.5
    assert m.dim == 8


def test_identical_views():
    X = np.random.default_rng(2).normal(size=(60, 5))
    m = fit_cca(X, X.copy(), reg=1e-6)
    np.testing.assert_allclose(m.correlations, 1.0, atol=1e-6)


def test_scaled_one_dimensional_view():
    x = np.random.default_rng(3).normal(size=(40, 1))
    m = fit_cca(x, 3 * x, reg=0.0)
    assert m.correlations[0] == pytest.approx(1.0, abs=1e-12)
    a, b = project(m, x, "visual")[:, 0], project(m, 3 * x, "textual")[:, 0]
    assert np.corrcoef(a, b)[0, 1] == pytest.approx(1.0, abs=1e-12)


def test_uncorrelated_directions_are_still_whitened():
    rng = np.random.default_rng(5)
    F_v = rng.normal(size=(50, 3))
    F_t = np.hstack([F_v[:, :1], rng.normal(size=(50, 5))])
    F_t[:, 1:] -= F_v @ np.linalg.lstsq(F_v, F_t[:, 1:], rcond=None)[0]    # orthogonal to F_v
    m = fit_cca(F_v, F_t, reg=1e-9)
    s, *_ = whitened_svd_cca(F_v, F_t, 1e-9, 1e-9)
    np.testing.assert_allclose(m.correlations, s[:3], atol=1e-8)
    Xt = F_t - F_t.mean(0)
    np.testing.assert_allclose(m.P_t.T @ (Xt.T @ Xt + 1e-9 * np.eye(6)) @ m.P_t, np.eye(3), atol=1e-6)


@given(seeds)
def test_correlations_sorted_and_bounded(seed):
    rng = np.random.default_rng(seed)
    m = fit_cca(rng.normal(size=(30, 4)), rng.normal(size=(30, 6)))
    assert np.all(np.diff(m.correlations) <= 1e-15)
    assert m.correlations.min() >= 0 and m.correlations.max() <= 1


def test_sign_convention_and_determinism(rng):
    F_v, F_t = latent_dataset(rng)
    m1, m2 = fit_cca(F_v, F_t), fit_cca(F_v.copy(), F_t.copy())
    assert cca_bytes(m1) == cca_bytes(m2)
    pivots = m1.P_v[np.argmax(np.abs(m1.P_v), axis=0), np.arange(m1.dim)]
    assert np.all(pivots > 0)


def test_fit_errors(rng):
    with pytest.raises(ValueError):
        fit_cca(rng.normal(size=(10, 3)), rng.normal(size=(9, 3)))
    with pytest.raises(ValueError):
        fit_cca(rng.normal(size=(10, 3)), rng.normal(size=(10, 3)), c=4)
    with pytest.raises(ValueError):
        fit_cca(rng.normal(size=(1, 3)), rng.normal(size=(1, 3)))
    with pytest.raises(ValueError):
        fit_cca(rng.normal(size=(10, 3)), rng.normal(size=(10, 3)), reg=-1.0)


# --- projection and similarity ---------------------------------------------------------

def test_projection_properties(rng):
    F_v, F_t = latent_dataset(rng)
    m = fit_cca(F_v, F_t)
    np.testing.assert_allclose(project(m, F_v.mean(0), "visual"), 0.0, atol=1e-12)
    m0 = dataclasses.replace(m, power=0.0)
    np.testing.assert_allclose(project(m0, F_v[:3], "visual"), (F_v[:3] - m.mean_v) @ m.P_v)
    lam = m.correlations.copy()
    lam[1] = 0.0
    mz = dataclasses.replace(m, correlations=lam)
    assert not project(mz, F_t[:4], "textual")[:, 1].any()
    with pytest.raises(ValueError):
        project(m, F_v[:2], "audio")
    with pytest.raises(ValueError):
        project(m, F_t[:2], "visual")


def test_similarity_examples():
    assert ncca_similarity([1.0, 2.0], [1.0, 2.0]) == pytest.approx(1.0)
    assert ncca_similarity([1.0, 0.0], [0.0, 3.0]) == 0.0
    with pytest.raises(ValueError):
        ncca_similarity([0.0, 0.0], [1.0, 0.0])


@given(st.lists(st.floats(-10, 10), min_size=3, max_size=3), st.lists(st.floats(-10, 10), min_size=3, max_size=3),
       st.floats(0.01, 100))
def test_similarity_scale_invariant(a, b, s):
    a, b = np.array(a), np.array(b)
    if np.linalg.norm(a) < 1e-3 or np.linalg.norm(b) < 1e-3:
        return
    assert ncca_similarity(s * a, b) == pytest.approx(ncca_similarity(a, b), abs=1e-9)
    assert ncca_similarities(a, np.vstack([b, b]))[1] == pytest.approx(ncca_similarity(a, b), abs=1e-12)


# --- model file -------------------------------------------------------------------------

def test_cca_file_round_trip(tmp_path, rng):
    F_v, F_t = latent_dataset(rng)
    m = fit_cca(F_v, F_t, c=4, text_mode="PCTI", power=3.0)
    save_cca(tmp_path / "c.bin", m)
    back = load_cca(tmp_path / "c.bin")
    assert back.text_mode == "PCTI" and back.power == 3.0 and (back.reg_v, back.reg_t) == (m.reg_v, m.reg_t)
    for f in ("P_v", "P_t", "correlations", "mean_v", "mean_t"):
        assert getattr(back, f).tobytes() == getattr(m, f).tobytes()
    assert read_cca_bytes(cca_bytes(fit_cca(F_v, F_t))).text_mode is None
    data = cca_bytes(m)
    with pytest.raises(FormatError):
        read_cca_bytes(data[:-1])
    with pytest.raises(FormatError):
        read_cca_bytes(b"X" * 8 + data[8:])
