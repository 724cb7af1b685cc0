import numpy as np
import pytest

from srtvit.errors import DegenerateBasisError
from srtvit.fields import DenseField
from srtvit.viz import GRAY, fit_pca, project, render_pca, render_scalar


def jacobi_eig(a, sweeps=100):
    """Classical cyclic Jacobi eigensolver; returns ascending-sorted pairs reversed."""
    a = np.array(a, dtype=np.float64)
    n = a.shape[0]
    v = np.eye(n)
    for _ in range(sweeps):
        off = np.sqrt(np.sum(a**2) - np.sum(np.diag(a) ** 2))
        if off < 1e-14:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                if abs(a[p, q]) < 1e-300:
                    continue
                theta = (a[q, q] - a[p, p]) / (2 * a[p, q])
                t = np.sign(theta) / (abs(theta) + np.sqrt(theta**2 + 1)) if theta != 0 else 1.0
                c = 1 / np.sqrt(t**2 + 1)
                s = t * c
                j = np.eye(n)
                j[p, p] = j[q, q] = c
                j[p, q], j[q, p] = s, -s
                a = j.T @ a @ j
                v = v @ j
    lam = np.diag(a)
    order = np.argsort(lam)[::-1]
    return lam[order], v[:, order]


def field_from(points, h, w, weight=None):
    data = np.asarray(points, np.float32).reshape(h, w, -1)
    wt = np.ones((h, w), np.float32) if weight is None else weight
    return DenseField(data, wt)


def test_recovers_planted_subspace(rng):
    c = 12
    basis, _ = np.linalg.qr(rng.standard_normal((c, 3)))
    coeffs = rng.standard_normal((400, 3)) * [5.0, 3.0, 2.0]
    f = field_from(coeffs @ basis.T + 1e-3 * rng.standard_normal((400, c)), 20, 20)
    pca = fit_pca(f)
    # Projector onto the fitted span matches the planted one.
    p_fit = pca.components.T @ pca.components
    assert np.max(np.abs(p_fit - basis @ basis.T)) <= 1e-3


def test_matches_jacobi_oracle(rng):
    c = 6
    x = rng.standard_normal((300, c)) @ rng.standard_normal((c, c))
    f = field_from(x, 15, 20)
    pca = fit_pca(f, max_iter=5000, tol=1e-12)
    xc = x.astype(np.float32).astype(np.float64)
    xc = xc - xc.mean(0)
    lam, vec = jacobi_eig(xc.T @ xc / len(xc))
    assert np.allclose(pca.eigenvalues, lam[:3], rtol=1e-5)
    for k in range(3):
        assert abs(abs(pca.components[k] @ vec[:, k]) - 1.0) <= 1e-5


def test_orthonormal_and_sign_rule(rng):
    f = field_from(rng.standard_normal((64, 8)), 8, 8)
    pca = fit_pca(f)
    assert np.allclose(pca.components @ pca.components.T, np.eye(3), atol=1e-9)
    assert np.all(np.diff(pca.eigenvalues) <= 0)
    for v in pca.components:
        assert v[np.argmax(np.abs(v))] > 0


def test_constant_field_is_degenerate():
    with pytest.raises(DegenerateBasisError) as exc:
        fit_pca(field_from(np.ones((16, 5)), 4, 4))
    assert exc.value.rank == 0


def test_rank_one_field_is_degenerate(rng):
    x = np.outer(rng.standard_normal(36), rng.standard_normal(5))
    with pytest.raises(DegenerateBasisError) as exc:
        fit_pca(field_from(x, 6, 6))
    assert exc.value.rank == 1


def test_too_few_valid_pixels(rng):
    w = np.zeros((4, 4), np.float32)
    w[0, :3] = 1
    with pytest.raises(ValueError):
        fit_pca(field_from(rng.standard_normal((16, 4)), 4, 4, w))


def test_invalid_pixels_ignored_and_gray(rng):
    x = rng.standard_normal((36, 5))
    w = np.ones((6, 6), np.float32)
    w[0] = 0
    f = field_from(x, 6, 6, w)
    g = x.copy()
    g[:6] = 1e6  # garbage under zero weight must not matter
    assert np.allclose(fit_pca(f).components, fit_pca(field_from(g, 6, 6, w)).components)
    img = render_pca(f, fit_pca(f))
    assert np.all(img[0] == GRAY)
    assert img[1:].min() == 0.0 and img[1:].max() == 1.0


def test_two_clusters_split_on_first_component(rng):
    a = rng.standard_normal(8)
    x = np.concatenate([a + 0.05 * rng.standard_normal((32, 8)), -a + 0.05 * rng.standard_normal((32, 8))])
    f = field_from(x, 8, 8)
    proj = project(f, fit_pca(f))[:, :, 0].ravel()
    assert np.all(np.sign(proj[:32]) == -np.sign(proj[32:]))


def test_render_scale_invariant(rng):
    x = rng.standard_normal((64, 6))
    f1, f2 = field_from(x, 8, 8), field_from(3.0 * x + 2.0, 8, 8)
    r1 = render_pca(f1, fit_pca(f1))
    r2 = render_pca(f2, fit_pca(f2))
    assert np.max(np.abs(r1 - r2)) <= 1e-5


def test_joint_basis_over_several_fields(rng):
    x = rng.standard_normal((64, 6))
    f = field_from(x, 8, 8)
    joint = fit_pca(f, f)
    assert np.allclose(joint.components, fit_pca(f).components, atol=1e-9)


def test_deterministic(rng):
    f = field_from(rng.standard_normal((64, 6)), 8, 8)
    assert np.array_equal(render_pca(f, fit_pca(f)), render_pca(f, fit_pca(f)))


def test_render_scalar_examples():
    out = render_scalar(np.array([[0.0, 1.0], [2.0, 4.0]]))
    assert out.shape == (2, 2, 1)
    assert np.allclose(out[:, :, 0], [[0, 0.25], [0.5, 1.0]])
    assert np.allclose(render_scalar(np.array([[0.0, 1.0, 4.0]]), gamma=0.5)[0, :, 0], [0, 0.5, 1])
    assert np.all(render_scalar(np.full((3, 3), 7.0)) == GRAY)
    with pytest.raises(ValueError):
        render_scalar(np.zeros((2, 2)), gamma=0)


def test_captured_variance_matches_oracle(rng):
    x = rng.standard_normal((400, 10)) @ rng.standard_normal((10, 10))
    f = field_from(x, 20, 20)
    pca = fit_pca(f, max_iter=5000, tol=1e-12)
    xc = x.astype(np.float32).astype(np.float64)
    xc = xc - xc.mean(0)
    cov = xc.T @ xc / len(xc)
    lam, _ = jacobi_eig(cov)
    proj = project(f, pca).reshape(-1, 3)
    captured = np.sum(proj.var(axis=0)) / np.trace(cov)
    assert abs(captured - lam[:3].sum() / lam.sum()) <= 1e-4
