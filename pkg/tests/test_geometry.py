import numpy as np
import pytest

from elastrip.errors import ConstraintError, SingularTransformError
from elastrip.geometry import (CoefficientLaw, CutoffFn, HarmonicTerm,
                               SourceSpec, SurfaceProfile, invert_vertical,
                               make_profile, sample_ensemble, transform_fields,
                               transform_map)
from elastrip.params import StripGeometry

CELL = (2 * np.pi, 2 * np.pi)
GEOM = StripGeometry(m=-0.2, M_sup=0.25, h=1.0, cell=CELL)


def flat(offset=0.0):
    return SurfaceProfile(offset=offset, terms=(), cell=CELL)


def wavy():
    return SurfaceProfile(offset=0.0,
                          terms=(HarmonicTerm(1, 0, 0.08, 0.0),
                                 HarmonicTerm(0, 1, 0.0, 0.05)), cell=CELL)


def test_profile_extrema_and_lipschitz():
    f = wavy()
    assert f.f_max <= 0.13 + 1e-12
    assert f.f_min >= -0.13 - 1e-12
    # gradient sup is 0.08 + safety margin against grid sampling
    assert 0.08 <= f.L <= 1.05 * np.hypot(0.08, 0.05) + 1e-12
    assert flat().L == 0.0
    assert flat().is_flat() and not f.is_flat()


def test_make_profile_slab_violation_names_point():
    with pytest.raises(ConstraintError, match=r"f\("):
        make_profile(0.0, [(1, 0, 0.5, 0.0)], GEOM)


def test_cutoff_shape():
    a = CutoffFn(delta=0.2, gamma_gap=1.0)
    assert a(0.0) == 1.0 and a(0.2) == 1.0
    assert a(1.0) == 0.0 and a(1.5) == 0.0
    x = 0.6
    assert a(x) == pytest.approx((1.0 - x) / 0.8)
    assert a.derivative(0.1) == 0.0
    assert a.derivative(0.5) == pytest.approx(-1.25)
    with pytest.raises(ConstraintError):
        CutoffFn(delta=0.6, gamma_gap=1.0)   # plateau past half the gap


def test_transform_surface_and_top():
    """The flattening map takes the reference level to the rough surface and
    is the identity at the artificial plane."""
    f0, f = flat(), wavy()
    cut = CutoffFn(delta=0.2, gamma_gap=1.0)
    y1, y2 = 1.3, 2.1
    x3, _, _, _ = transform_fields(y1, y2, 0.0, f0, f, cut)
    assert float(x3) == pytest.approx(float(f.values(y1, y2)), abs=1e-14)
    x3_top, J1, J2, J3 = transform_fields(y1, y2, 1.0, f0, f, cut)
    assert float(x3_top) == pytest.approx(1.0)
    assert J1 == J2 == J3 == 0.0


def test_transform_map_jacobian_consistency():
    f0, f = flat(), wavy()
    cut = CutoffFn(delta=0.2, gamma_gap=1.0)
    td = transform_map(np.array([0.7, 1.9, 0.45]), f0, f, cut)
    assert td.det_J == pytest.approx(np.linalg.det(td.J), rel=1e-12)
    np.testing.assert_allclose(td.J @ td.J_inv, np.eye(3), atol=1e-13)
    # finite-difference check of the vertical derivative
    eps = 1e-6
    up = transform_map(np.array([0.7, 1.9, 0.45 + eps]), f0, f, cut)
    dn = transform_map(np.array([0.7, 1.9, 0.45 - eps]), f0, f, cut)
    fd = (up.x[2] - dn.x[2]) / (2 * eps)
    assert fd == pytest.approx(td.J[2, 2], rel=1e-6)


def test_transform_singular_amplitude_raises():
    f0 = flat()
    f = SurfaceProfile(offset=0.0, terms=(HarmonicTerm(1, 0, 0.9, 0.0),), cell=CELL)
    cut = CutoffFn(delta=0.2, gamma_gap=1.0)
    with pytest.raises(SingularTransformError):
        transform_map(np.array([0.0, 0.0, 0.5]), f0, f, cut)


def test_invert_vertical_roundtrip():
    f0, f = flat(), wavy()
    cut = CutoffFn(delta=0.2, gamma_gap=1.0)
    rng = np.random.default_rng(0)
    y1 = rng.uniform(0, CELL[0], 50)
    y2 = rng.uniform(0, CELL[1], 50)
    y3 = rng.uniform(0.0, 1.0, 50)
    x3, _, _, _ = transform_fields(y1, y2, y3, f0, f, cut)
    back = invert_vertical(x3, y1, y2, f0, f, cut, h=1.0)
    np.testing.assert_allclose(back, y3, atol=1e-12)


def test_ensemble_deterministic_and_admissible():
    law = CoefficientLaw(bands=((1, 0, 0.05), (0, 1, 0.05)))
    a = sample_ensemble(123, 6, 0.3, law, GEOM, flat())
    b = sample_ensemble(123, 6, 0.3, law, GEOM, flat())
    for sa, sb in zip(a, b):
        assert sa.surface.terms == sb.surface.terms
        assert sa.source == sb.source
    for s in a:
        assert GEOM.m < s.surface.f_min and s.surface.f_max < GEOM.M_sup
        assert s.surface.sup_distance_1inf(flat()) <= 0.3


def test_ensemble_counter_based_streams():
    """Sample k is identical no matter how many samples are drawn around it."""
    law = CoefficientLaw(bands=((1, 1, 0.04),))
    few = sample_ensemble(9, 3, 0.3, law, GEOM, flat())
    many = sample_ensemble(9, 8, 0.3, law, GEOM, flat())
    for k in range(3):
        assert few[k].surface.terms == many[k].surface.terms


def test_law_worst_case_dominates_samples():
    law = CoefficientLaw(bands=((1, 0, 0.05), (2, 1, 0.03)))
    bound = law.worst_case_1inf(CELL)
    f0 = flat()
    for s in sample_ensemble(4, 10, bound, law, GEOM, f0):
        assert s.surface.sup_distance_1inf(f0) <= bound + 1e-12


def test_source_spec_support_above_slab():
    law = CoefficientLaw(bands=((1, 0, 0.04),))
    for s in sample_ensemble(1, 5, 0.3, law, GEOM, flat(), source_spec=SourceSpec()):
        lo, hi = s.source.support()
        assert lo >= GEOM.M_sup
        assert hi <= GEOM.h


def test_ensemble_rejects_bad_sizes():
    law = CoefficientLaw(bands=((1, 0, 0.04),))
    with pytest.raises(ConstraintError):
        sample_ensemble(0, 0, 0.3, law, GEOM, flat())
