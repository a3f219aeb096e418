import math

import numpy as np
import pytest

from mambalab import Rng, pgm_read
from mambalab import erf as E
from mambalab import vision as V
from mambalab.errors import DegenerateMapError, InvalidDimensionError, ShapeError


def _center_only(shape, value):
    a = np.zeros(shape)
    a[..., shape[-2] // 2, shape[-1] // 2] = value
    return a


def test_identity_contribution():
    g = E.BlockGraph([E.Identity(1)])
    cm = E.contribution(g, Rng(1).normal(0, 1, (1, 1, 5, 5)))
    np.testing.assert_array_equal(cm.perImage[0, 0], _center_only((5, 5), 1.0))
    g3 = E.BlockGraph([E.Identity(3)])
    on = E.contribution(g3, np.zeros((3, 5, 5))).perImage
    assert on.sum() == 3 and np.count_nonzero(on.sum(axis=(0, 1))) == 1


def test_scale_contribution():
    x = Rng(2).normal(0, 1, (1, 5, 5))
    base = E.contribution(E.BlockGraph([E.DWConv(np.ones((1, 3, 3)))]), x).perImage
    scaled = E.contribution(E.BlockGraph([E.DWConv(np.ones((1, 3, 3))), E.Scale(1, 2.5)]), x).perImage
    np.testing.assert_array_equal(scaled, 2.5 * base)


def test_dwconv_box_contribution():
    on = E.contribution(E.make_graph("dwconv", Rng(0)), np.zeros((1, 5, 5))).perImage[0, 0]
    ref = np.zeros((5, 5))
    ref[1:4, 1:4] = 1.0
    np.testing.assert_array_equal(on, ref)


def test_stacked_convs_stay_in_rf_box():
    rng = Rng(3)
    k1, k2 = rng.uniform(0.1, 1, (2, 3, 3)), rng.uniform(0.1, 1, (2, 3, 3))
    g = E.BlockGraph([E.DWConv(k1), E.PWConv(rng.normal(0, 1, (2, 2))), E.DWConv(k2)])
    on = E.contribution(g, rng.normal(0, 1, (2, 2, 11, 11))).perImage.sum(axis=(0, 1))
    support = np.argwhere(on != 0)
    assert support.min() >= 5 - 2 and support.max() <= 5 + 2
    assert np.count_nonzero(on) == 25


def test_contribution_additive_over_images():
    g = E.make_graph("ss2d", Rng(4), dim=2)
    imgs = Rng(5).uniform(size=(3, 1, 7, 7))
    batch = E.contribution(g, imgs).perImage.sum(axis=0)
    singles = sum(E.contribution(g, im).perImage[0] for im in imgs)
    np.testing.assert_allclose(batch, singles, atol=1e-15, rtol=0)


def test_erf_image_examples():
    on = _center_only((1, 1, 5, 5), 9.0)
    A = E.erf_image(E.ContributionMap(on))
    np.testing.assert_array_equal(A, _center_only((5, 5), 1.0))
    np.testing.assert_array_equal(E.erf_image(E.ContributionMap(np.full((2, 1, 3, 4), 0.7))), 1.0)
    on = np.ones((1, 1, 3, 3))
    on[0, 0, 0, 0] = -5.0
    A = E.erf_image(E.ContributionMap(on))
    assert A[0, 0] == 0.0 and A.max() == 1.0


def test_erf_image_log_scale():
    on = np.zeros((1, 1, 1, 2))
    on[0, 0, 0] = [9.0, 99.0]
    np.testing.assert_allclose(E.erf_image(E.ContributionMap(on))[0], [0.5, 1.0], atol=1e-15)


def test_erf_image_degenerate():
    with pytest.raises(DegenerateMapError):
        E.erf_image(E.ContributionMap(-np.ones((1, 1, 3, 3))))


def test_contribution_invariants_random_blocks():
    rng = Rng(6)
    for name in E.BLOCK_NAMES:
        cm = E.contribution(E.make_graph(name, rng), rng.uniform(size=(2, 1, 7, 7)))
        assert np.all(cm.clamped >= 0)
        A = cm.final
        assert A.min() >= 0 and A.max() == 1.0


def test_fd_oracle_identity():
    g = E.BlockGraph([E.Identity(1)])
    fd = E.fd_gradient_oracle(g, Rng(7).normal(0, 1, (1, 5, 5)))
    np.testing.assert_allclose(fd, _center_only((1, 5, 5), 1.0), atol=1e-9, rtol=0)


def test_fd_oracle_linear_graph():
    rng = Rng(8)
    g = E.BlockGraph([E.PWConv(rng.normal(0, 1, (3, 2))), E.DWConv(rng.normal(0, 1, (3, 3, 3)))])
    x = rng.normal(0, 1, (2, 6, 6))
    rev = E.central_gradient(g, x)
    fd = E.fd_gradient_oracle(g, x)
    assert E.gradient_rel_error(rev, fd) < 1e-7


def test_fd_oracle_crackmamba():
    rng = Rng(9)
    g = E.make_graph("crackmamba", rng)
    x = rng.uniform(size=(1, 8, 8))
    assert E.gradient_rel_error(E.central_gradient(g, x), E.fd_gradient_oracle(g, x)) < 1e-5


def test_fd_step_must_be_positive():
    with pytest.raises(ValueError):
        E.fd_gradient_oracle(E.BlockGraph([E.Identity(1)]), np.zeros((1, 3, 3)), step=0.0)


def test_gradient_rel_error_floor():
    assert E.gradient_rel_error(np.full(3, 1e-9), np.zeros(3)) == pytest.approx(0.1)


def test_center_index():
    assert E.center_index(33, 33) == (16, 16)
    assert E.center_index(8, 5) == (4, 2)


def test_cross_profile_examples():
    p = E.cross_profile(_center_only((5, 5), 1.0))
    assert p.crossMean > 0 and p.offCrossMean == 0 and p.centerIsMax
    p = E.cross_profile(np.full((5, 7), 0.3))
    assert p.crossMean == pytest.approx(p.offCrossMean, rel=1e-15)
    with pytest.raises(InvalidDimensionError):
        E.cross_profile(np.ones((4, 5)))


def test_cross_profile_ss2d_33():
    rng = Rng(42)
    g = E.make_graph("ss2d", rng)
    imgs, _ = E.synth_cracks(rng, 8, 33)
    prof = E.cross_profile(E.erf_image(E.contribution(g, imgs)))
    assert prof.crossMean > prof.offCrossMean
    assert prof.centerIsMax


def test_graph_channel_chain():
    with pytest.raises(ShapeError):
        E.BlockGraph([E.Identity(2), E.Identity(3)])
    with pytest.raises(ShapeError):
        E.BlockGraph([])
    with pytest.raises(ShapeError):
        E.BlockGraph([E.Identity(2)]).forward(np.zeros((3, 4, 4)))
    with pytest.raises(ValueError):
        E.make_graph("resnet", Rng(1))


def test_synth_cracks_determinism():
    a, ma = E.synth_cracks(Rng(1), 2, 24)
    b, mb = E.synth_cracks(Rng(1), 2, 24)
    for x, y in zip(a + ma, b + mb):
        assert np.array_equal(x, y)


def test_synth_cracks_mask_count_and_range():
    imgs, masks = E.synth_cracks(Rng(2), 5, 20, width=3, noise=0.2)
    for im, m in zip(imgs, masks):
        assert im.shape == m.shape == (1, 20, 20)
        assert m.sum() >= 3 * 20
        assert im.min() >= 0 and im.max() <= 1
        assert set(np.unique(m)) <= {0.0, 1.0}


def test_synth_cracks_noise_free():
    imgs, masks = E.synth_cracks(Rng(3), 3, 16, noise=0.0)
    for im, m in zip(imgs, masks):
        assert np.array_equal(im, m)


def test_synth_cracks_bad_dims():
    with pytest.raises(InvalidDimensionError):
        E.synth_cracks(Rng(1), 1, 8)
    with pytest.raises(InvalidDimensionError):
        E.synth_cracks(Rng(1), 1, 16, width=8)


def test_writers(tmp_path):
    A = np.array([[0.0, 0.5], [1.0, 1 / 3]])
    E.write_erf_pgm(A, tmp_path / "a.pgm")
    back = pgm_read(tmp_path / "a.pgm").array()[0]
    np.testing.assert_array_equal(np.round(back * 255), [[0, 128], [255, 85]])
    E.write_erf_csv(A, tmp_path / "a.csv")
    assert (tmp_path / "a.csv").read_text() == "0,0.5\n1,0.333333333\n"


def test_fmt9():
    assert E.fmt9(math.pi) == "3.14159265"
    assert E.fmt9(1e-12) == "1e-12"
