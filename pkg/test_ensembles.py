#!/usr/bin/env python3
"""
Pruebas de los ensembles iid, ortogonales, por bloques y QMC.
"""

import sys
import os
import logging

import numpy as np
import pytest
from scipy import stats

# Configurar logging para ver los detalles del proceso
logging.basicConfig(level=logging.INFO)
logger = logging.getLogger(__name__)

# Agregar el directorio del proyecto al path
sys.path.append(os.path.dirname(os.path.abspath(__file__)))

from app.models.models import IsotropicLaw, Method
from app.modules.ensembles.ensembles import (
    block_sizes,
    bomc_block_seed,
    gram_schmidt,
    halton_point,
    halton_points,
    inverse_normal_cdf,
    qmc_gaussian_points,
    radial_renormalize,
    random_rotation,
    rotate_ensemble,
    sample_bomc,
    sample_iid,
    sample_omc_block,
    sample_omc_blocks,
    sample_qmc,
)
from app.utils.errors import (
    CapacityError,
    DegeneracyError,
    DimensionError,
    DomainError,
    ParameterError,
    PreconditionError,
)
from app.utils.seeding import make_rng


def _max_block_dot(rows: np.ndarray, block: int) -> float:
    worst = 0.0
    for start in range(0, rows.shape[0], block):
        b = rows[start:start + block]
        norms = np.linalg.norm(b, axis=1)
        g = np.abs(b @ b.T) / np.outer(norms, norms)
        np.fill_diagonal(g, 0.0)
        worst = max(worst, float(g.max()))
    return worst


def test_sample_iid_deterministic():
    law = IsotropicLaw.gaussian(3)
    a = sample_iid(law, 2, 7)
    b = sample_iid(law, 2, 7)
    assert np.array_equal(a.rows, b.rows)
    assert a.method == Method.MC
    assert not a.rows.flags.writeable


def test_sample_iid_sphere_norms():
    e = sample_iid(IsotropicLaw.sphere(4), 5, 1)
    assert np.allclose(np.linalg.norm(e.rows, axis=1), 1.0, atol=1e-12)


def test_sample_iid_chi_square_moment():
    e = sample_iid(IsotropicLaw.gaussian(8), 100_000, 3)
    sq = np.sum(e.rows ** 2, axis=1)
    se = np.std(sq, ddof=1) / np.sqrt(sq.size)
    assert abs(np.mean(sq) - 8.0) < 3 * se


def test_sample_iid_directions_are_balanced():
    e = sample_iid(IsotropicLaw.gaussian(5), 20_000, 12)
    u = e.rows / np.linalg.norm(e.rows, axis=1, keepdims=True)
    assert np.linalg.norm(u.mean(axis=0)) < 0.05


def test_invalid_law_parameters():
    with pytest.raises(ParameterError):
        sample_iid(IsotropicLaw(tag="GaussianScaled", d=3, lengthscale=-1.0), 4, 0)
    with pytest.raises(ParameterError):
        sample_iid(IsotropicLaw(tag="MaternSpectral", d=3, nu=0.0), 4, 0)


def test_gram_schmidt_examples():
    eye = np.eye(4)[:3]
    assert np.allclose(gram_schmidt(eye), eye)
    out = gram_schmidt(np.array([[1.0, 0.0], [1.0, 1.0]]))
    assert np.allclose(out, [[1.0, 0.0], [0.0, 1.0]], atol=1e-12)

    q = gram_schmidt(make_rng(4).standard_normal((4, 4)))
    assert np.max(np.abs(q @ q.T - np.eye(4))) < 1e-10


def test_gram_schmidt_errors():
    with pytest.raises(DimensionError):
        gram_schmidt(np.ones((3, 2)))
    with pytest.raises(DegeneracyError):
        gram_schmidt(np.array([[1.0, 2.0, 0.0], [2.0, 4.0, 0.0]]))


def test_omc_block_orthogonality():
    e = sample_omc_block(IsotropicLaw.gaussian(3), 3, 5)
    g = e.rows @ e.rows.T
    assert np.max(np.abs(g - np.diag(np.diag(g)))) < 1e-8
    assert e.method == Method.OMC

    sphere = sample_omc_block(IsotropicLaw.sphere(3), 3, 5)
    assert np.max(np.abs(sphere.rows @ sphere.rows.T - np.eye(3))) < 1e-8

    with pytest.raises(DimensionError):
        sample_omc_block(IsotropicLaw.gaussian(3), 4, 5)


def test_omc_block_norms_follow_chi():
    law = IsotropicLaw.gaussian(8)
    norms = np.concatenate([np.linalg.norm(sample_omc_block(law, 8, seed).rows, axis=1) for seed in range(2000)])
    assert stats.kstest(norms, stats.chi(8).cdf).pvalue > 0.001


def test_omc_block_first_coordinate_marginal():
    law = IsotropicLaw.gaussian(4)
    first = np.array([sample_omc_block(law, 4, seed).rows[0, 0] for seed in range(3000)])
    assert stats.kstest(first, stats.norm.cdf).pvalue > 0.001


def test_bomc_blocks():
    law = IsotropicLaw.gaussian(4)
    e = sample_bomc(law, 8, 2)
    assert e.block_size == 4 and e.s == 8
    assert _max_block_dot(e.rows, 4) < 1e-8

    single = sample_bomc(law, 4, 9)
    expected = sample_omc_block(law, 4, bomc_block_seed(9, 0))
    assert np.array_equal(single.rows, expected.rows)

    assert block_sizes(6, 4) == [4, 2]
    assert sample_bomc(law, 6, 1).s == 6


def test_many_bomc_ensembles_orthogonal():
    rng = make_rng(21)
    for k in range(200):
        d = int(rng.integers(1, 33))
        s = int(rng.integers(1, 3 * d + 1))
        e = sample_bomc(IsotropicLaw.gaussian(d), s, k)
        if s > 1 and d > 1:
            assert _max_block_dot(e.rows, d) < 1e-8


def test_batched_blocks_orthogonal():
    rng = make_rng(5)
    blocks = sample_omc_blocks(IsotropicLaw.sphere(6), 6, 100, rng)
    assert blocks.shape == (100, 6, 6)
    gram = blocks @ np.swapaxes(blocks, 1, 2)
    assert np.max(np.abs(gram - np.eye(6))) < 1e-10


def test_random_rotation():
    r1 = random_rotation(1, 3)
    assert r1.shape == (1, 1) and abs(abs(r1[0, 0]) - 1.0) < 1e-15
    r = random_rotation(7, 11)
    assert np.max(np.abs(r.T @ r - np.eye(7))) <= 1e-10

    e = sample_iid(IsotropicLaw.gaussian(7), 12, 4)
    rotated = rotate_ensemble(e, r)
    assert np.max(np.abs(rotated.rows @ rotated.rows.T - e.rows @ e.rows.T)) <= 1e-9


def test_halton_examples():
    assert np.allclose(halton_point(1, 1), [0.5])
    assert np.allclose(halton_point(3, 1), [0.75])
    assert np.allclose(halton_point(1, 2), [0.5, 1.0 / 3.0])
    pts = halton_points(1, 4, 2)
    assert np.allclose(pts[:, 0], [0.5, 0.25, 0.75, 0.125])
    with pytest.raises(CapacityError):
        halton_point(1, 513)
    with pytest.raises(DomainError):
        halton_point(0, 2)


def test_halton_points_continue_the_sequence():
    full = halton_points(1, 30, 5)
    assert np.allclose(halton_points(21, 10, 5), full[20:], rtol=0.0, atol=1e-15)
    assert np.allclose(halton_point(7, 5), full[6])
    # sexta coordenada en base 13
    assert np.allclose(halton_point(1, 6)[5], 1.0 / 13.0)
    assert halton_points(1, 4, 512).shape == (4, 512)


def test_inverse_normal_cdf():
    assert inverse_normal_cdf(0.5) == 0.0
    assert abs(inverse_normal_cdf(0.975) - 1.959964) < 1e-5
    grid = np.linspace(0.001, 0.999, 10_000)
    q = inverse_normal_cdf(grid)
    assert np.all(np.diff(q) > 0)
    assert np.max(np.abs(stats.norm.cdf(q) - grid)) <= 1e-8
    for bad in (0.0, 1.0, -0.1):
        with pytest.raises(DomainError):
            inverse_normal_cdf(bad)


def test_sample_qmc():
    law = IsotropicLaw.sphere(3)
    a = sample_qmc(law, 100, 9)
    b = sample_qmc(law, 100, 9)
    assert np.array_equal(a.rows, b.rows)
    assert np.allclose(np.linalg.norm(a.rows, axis=1), 1.0, atol=1e-10)
    assert a.method == Method.QMC


def test_qmc_points_more_balanced_than_iid():
    qmc_norms, iid_norms = [], []
    for seed in range(200):
        qmc_norms.append(np.linalg.norm(qmc_gaussian_points(3, 100, seed).mean(axis=0)))
        iid_norms.append(np.linalg.norm(make_rng(seed).standard_normal((100, 3)).mean(axis=0)))
    assert np.mean(qmc_norms) < np.mean(iid_norms)


def test_radial_renormalize():
    u = sample_iid(IsotropicLaw.sphere(3), 6, 2).rows
    same = radial_renormalize(u, IsotropicLaw.sphere(3), 5)
    assert np.array_equal(same.rows, u)

    g = radial_renormalize(u[:, :2] / np.linalg.norm(u[:, :2], axis=1, keepdims=True), IsotropicLaw.gaussian(2), 5)
    directions = g.rows / np.linalg.norm(g.rows, axis=1, keepdims=True)
    expected = u[:, :2] / np.linalg.norm(u[:, :2], axis=1, keepdims=True)
    assert np.max(np.abs(directions - expected)) < 1e-10

    with pytest.raises(PreconditionError):
        radial_renormalize(2.0 * u, IsotropicLaw.gaussian(3), 5)


def test_radial_renormalize_scaled_law():
    law = IsotropicLaw(tag="GaussianScaled", d=4, lengthscale=2.0)
    u = sample_iid(IsotropicLaw.sphere(4), 10_000, 8).rows
    radii = np.linalg.norm(radial_renormalize(u, law, 13).rows, axis=1)
    assert stats.kstest(radii, stats.chi(4, scale=0.5).cdf).pvalue > 0.001


if __name__ == "__main__":
    test_sample_iid_deterministic()
    test_sample_iid_sphere_norms()
    test_sample_iid_chi_square_moment()
    test_gram_schmidt_examples()
    test_omc_block_orthogonality()
    test_bomc_blocks()
    test_random_rotation()
    test_halton_examples()
    test_halton_points_continue_the_sequence()
    test_inverse_normal_cdf()
    test_sample_qmc()
    test_radial_renormalize()
    print("\n✅ Pruebas de ensembles completadas")
