import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from poseval.exceptions import InvalidIncrement
from poseval.geometry import check_rotation, rot_x, rot_z
from poseval.symmetry import SymmetryClass, generate_symmetries, is_closed, min_pairwise_angle


@pytest.mark.parametrize("cls, count", [("cuboid", 4), ("bottle", 2), ("cylinder", 720), ("none", 1)])
def test_set_sizes(cls, count):
    assert len(generate_symmetries(cls)) == count


@pytest.mark.parametrize("cls", ["cuboid", "bottle", "cylinder", "none"])
def test_identity_first_and_valid_rotations(cls):
    symset = generate_symmetries(cls, 10.0)
    assert np.array_equal(symset[0], np.eye(3))
    for R in symset:
        check_rotation(R)


@pytest.mark.parametrize("cls", ["cuboid", "bottle", "none"])
def test_finite_sets_closed(cls):
    assert is_closed(generate_symmetries(cls))


def test_cuboid_is_klein_four_group():
    rots = generate_symmetries("cuboid").as_array()
    for R in rots[1:]:
        np.testing.assert_allclose(R @ R, np.eye(3), atol=1e-12)


def test_bottle_flip_is_about_vertical_axis():
    R = generate_symmetries("bottle")[1]
    np.testing.assert_allclose(R, rot_z(math.pi), atol=0)
    np.testing.assert_allclose(R @ [0, 0, 1.0], [0, 0, 1.0], atol=1e-15)


def test_cylinder_structure():
    symset = generate_symmetries("cylinder", 45.0)
    assert len(symset) == 16
    np.testing.assert_allclose(symset[1], rot_z(math.radians(45)), atol=0)
    np.testing.assert_allclose(symset[8], rot_x(math.pi), atol=0)
    assert min_pairwise_angle(symset) == pytest.approx(math.radians(45))


@settings(max_examples=10)
@given(st.sampled_from([2, 3, 4, 5, 6, 9, 10, 12, 15, 18, 20, 30, 36, 45, 60, 90, 180]))
def test_cylinder_closed_when_increment_divides_180(inc):
    assert is_closed(generate_symmetries("cylinder", inc))


def test_cylinder_closed_at_default_increment():
    assert is_closed(generate_symmetries("cylinder", 1.0))


def test_no_duplicates():
    assert min_pairwise_angle(generate_symmetries("cylinder", 1.0)) > math.radians(0.99)


@pytest.mark.parametrize("inc", [0, -5, 7, 0.7])
def test_invalid_increment(inc):
    with pytest.raises(InvalidIncrement):
        generate_symmetries("cylinder", inc)


def test_parse():
    assert SymmetryClass.parse("Cuboid") is SymmetryClass.CUBOID
    assert SymmetryClass.parse("no-symmetry") is SymmetryClass.NONE
    with pytest.raises(ValueError):
        SymmetryClass.parse("sphere")
