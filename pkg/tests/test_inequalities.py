import numpy as np
import pytest

from distsde.grid import GridSpec
from distsde.inequalities import CATALOG, verify_inequality


def test_catalog_has_nine_entries():
    assert len(CATALOG) == 9


@pytest.mark.parametrize("key", CATALOG)
def test_ratio_finite_and_refinement_stable(key):
    rep = verify_inequality(key, trials=100)
    assert np.isfinite(rep.max_ratio) and np.isfinite(rep.max_ratio_refined)
    assert rep.refinement_drift <= 0.15
    assert rep.passed


@pytest.mark.parametrize("key", ["composition", "composition_negative"])
def test_identity_map_gives_unit_ratio(key):
    rep = verify_inequality(key, trials=10, map_strength=0.0)
    assert rep.max_ratio == pytest.approx(1.0, rel=1e-12)
    assert rep.max_ratio_refined == pytest.approx(1.0, rel=1e-12)


def test_localization_ratio_is_two_sided():
    assert verify_inequality("localization", trials=10).max_ratio >= 1.0


def test_trials_are_prefix_stable():
    few = verify_inequality("product", trials=5, seed=3)
    many = verify_inequality("product", trials=20, seed=3)
    assert few.max_ratio <= many.max_ratio


def test_unknown_key_rejected():
    with pytest.raises(ValueError, match="unknown"):
        verify_inequality("nonsense")


@pytest.mark.parametrize(
    "key, kwargs",
    [
        ("product", {"alpha": 1.5}),
        ("holder", {"alpha": 0.2, "p": 4.0}),
        ("interpolation", {"alpha": 0.9, "beta": 0.5}),
        ("composition_negative", {"beta": 0.3, "q": 2.0}),
    ],
)
def test_exponent_windows_enforced(key, kwargs):
    with pytest.raises(ValueError, match="violated"):
        verify_inequality(key, trials=1, **kwargs)


def test_grid_too_small_rejected():
    with pytest.raises(ValueError):
        verify_inequality("product", trials=1, grid=GridSpec(1, 4.0, 128))


def test_map_strength_bounds():
    with pytest.raises(ValueError):
        verify_inequality("composition", trials=1, map_strength=1.0)
