import numpy as np
import pytest

from recodyn.measure import (
    Cylinder,
    Measure,
    SignedMeasure,
    cylinder_value,
    marginal,
    point_mass,
    product,
    random_measure,
    uniform,
)
from recodyn.type_space import TypeSpace

TWO = TypeSpace((2, 2))
BIN = TypeSpace((2,))


def test_marginal_examples():
    np.testing.assert_allclose(marginal(uniform(TWO), [0]).flat, [0.5, 0.5])
    delta = point_mass(TypeSpace((2, 2, 2)), (1, 0, 1))
    np.testing.assert_array_equal(marginal(delta, [0, 2]).weights, [[0, 0], [0, 1]])
    np.testing.assert_allclose(marginal(Measure(TWO, [0.5, 0, 0, 0.5]), [1]).flat, [0.5, 0.5])


def test_marginal_preserves_mass(rng):
    omega = random_measure(TypeSpace((2, 3, 2)), rng, total=2.5)
    for block in ([0], [1, 2], [0, 2], [0, 1, 2]):
        assert marginal(omega, block).mass() == pytest.approx(2.5, abs=1e-14)


def test_product_examples():
    half = Measure(BIN, [0.5, 0.5])
    np.testing.assert_allclose(product([half, half]).flat, uniform(TWO).flat)
    np.testing.assert_array_equal(product([point_mass(BIN, (0,)), point_mass(BIN, (1,))]).flat, [0, 1, 0, 0])
    np.testing.assert_allclose(product([Measure(BIN, [0.3, 0.7]), half]).flat, [0.15, 0.15, 0.35, 0.35])
    with pytest.raises(ValueError):
        product([half, half], blocks=[[0], [2]])


def test_mass_and_norm():
    assert uniform(TWO).mass() == pytest.approx(1.0)
    s = SignedMeasure(BIN, [1.0, -1.0])
    assert s.mass() == 0.0 and s.variation_norm() == 2.0
    assert (uniform(TWO) * 3).mass() == pytest.approx(3.0)
    assert isinstance(uniform(TWO) * -1, SignedMeasure) and not isinstance(uniform(TWO) * -1, Measure)


def test_positive_measure_rejects_negative_entries():
    with pytest.raises(ValueError):
        Measure(BIN, [0.5, -0.1])
    m = Measure(BIN, [0.5, -1e-14])
    assert m.flat[1] == 0.0


def test_measures_are_immutable():
    m = uniform(TWO)
    with pytest.raises(ValueError):
        m.weights[0, 0] = 1.0
    with pytest.raises(AttributeError):
        m.space = BIN


def test_weights_are_validated():
    with pytest.raises(ValueError):
        SignedMeasure(TWO, [1, 2, 3])
    with pytest.raises(ValueError):
        SignedMeasure(BIN, [np.nan, 0])


def test_cylinder_examples(rng):
    omega = random_measure(TypeSpace((2, 3)), rng)
    assert cylinder_value(omega, Cylinder.of({})) == pytest.approx(1.0)
    assert cylinder_value(Measure(TWO, [0.5, 0, 0, 0.5]), Cylinder.of({0: 0})) == 0.5
    assert cylinder_value(point_mass(TWO, (1, 1)), Cylinder.of({0: 0})) == 0.0
    with pytest.raises(ValueError):
        Cylinder.of({1: 3}).index(TypeSpace((2, 3)))
