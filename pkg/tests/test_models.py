import math

import numpy as np
import pytest

from onlinesurrogate.models import (
    MODEL_IDS,
    PlateauParams,
    easom,
    get_model,
    hartmann6,
    michalewicz,
    plateau_pressure,
    rastrigin,
    rosenbrock,
)

H6_MIN = (0.20169, 0.15001, 0.4768, 0.2753, 0.311, 0.6573)


class TestRastrigin:
    def test_known_values(self):
        assert rastrigin((0, 0), 2) == 0
        assert rastrigin((1, 1), 2) == pytest.approx(2, abs=1e-12)
        # 20 + 0.25 + 10 cos(pi) term cancels the zero coordinate
        assert rastrigin((0.5, 0), 2) == pytest.approx(20.25, abs=1e-12)

    @pytest.mark.parametrize("d", range(1, 11))
    def test_origin_zero_any_dim(self, d):
        assert rastrigin(np.zeros(d), d) == 0

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            rastrigin((0, 0, 0), 2)


class TestRosenbrock:
    def test_known_values(self):
        assert rosenbrock((1, 1)) == 0
        assert rosenbrock(np.ones(8), 8) == 0
        assert rosenbrock((-1.2, 1)) == pytest.approx(24.2, abs=1e-12)

    @pytest.mark.parametrize("d", range(2, 11))
    def test_ones_zero(self, d):
        assert rosenbrock(np.ones(d), d) == 0

    def test_eight_dim_is_sum_of_coupled_pairs(self, rng):
        x = rng.uniform(-2, 2, 8)
        pairs = sum(rosenbrock(x[i : i + 2]) for i in range(7))
        assert rosenbrock(x, 8) == pytest.approx(pairs, rel=1e-12)

    def test_rejects_one_dim(self):
        with pytest.raises(ValueError):
            rosenbrock((1.0,))


class TestHartmann:
    def test_global_minimum(self):
        assert hartmann6(H6_MIN) == pytest.approx(-3.322, abs=1e-3)

    def test_far_from_wells(self):
        assert abs(hartmann6(-np.ones(6))) < 1e-3

    def test_range_on_box(self, rng):
        X = rng.uniform(-1, 1, (100_000, 6))
        vals = np.array([hartmann6(x) for x in X[:20_000]])
        assert vals.max() <= 1e-12
        assert vals.min() > -3.33

    def test_dimension(self):
        with pytest.raises(ValueError):
            hartmann6(np.zeros(5))


class TestEasom:
    def test_well_center(self):
        assert easom((math.pi, math.pi)) == pytest.approx(-1, abs=1e-15)

    def test_far_field(self):
        assert abs(easom((10, 10))) < 1e-10

    def test_off_center(self):
        # -cos(pi) cos(pi + 1) exp(-1) = cos(pi + 1) / e, which is negative
        expected = -math.cos(math.pi) * math.cos(math.pi + 1) * math.exp(-1)
        assert easom((math.pi, math.pi + 1)) == pytest.approx(expected, abs=1e-15)
        assert expected == pytest.approx(-0.1988, abs=1e-4)


class TestMichalewicz:
    def test_origin(self):
        assert michalewicz((0, 0)) == 0

    def test_half_pi(self):
        assert michalewicz((math.pi / 2, math.pi / 2)) == pytest.approx(-1.00098, abs=1e-5)

    def test_grid_minimum(self):
        g = np.linspace(0, math.pi, 1201)
        A, B = np.meshgrid(g, g, indexing="ij")
        vals = -(np.sin(A) * np.sin(A**2 / math.pi) ** 20 + np.sin(B) * np.sin(2 * B**2 / math.pi) ** 20)
        assert vals.min() == pytest.approx(-1.8013, abs=1e-3)
        i, j = np.unravel_index(vals.argmin(), vals.shape)
        assert michalewicz((g[i], g[j])) == pytest.approx(vals.min(), abs=1e-12)

    def test_bad_steepness(self):
        with pytest.raises(ValueError):
            michalewicz((1, 1), m=0)


class TestPlateau:
    def test_flat_inside_plateau(self):
        p = PlateauParams()
        y = 0.3
        n1, n2 = p.onset(y), p.end(y)
        flat = plateau_pressure(n1, y)
        for n in np.linspace(n1, n2, 11):
            assert plateau_pressure(n, y) == flat

    def test_continuity_at_junctions(self):
        p = PlateauParams()
        y = 0.2
        for n in (p.onset(y), p.end(y)):
            below = plateau_pressure(n - 1e-9, y)
            above = plateau_pressure(n + 1e-9, y)
            assert abs(above - below) < 1e-7

    @pytest.mark.parametrize("y", [0.01, 0.1, 0.33, 0.6])
    def test_monotone_in_density(self, y):
        n = np.linspace(0.04, 1.6, 1000)
        P = np.array([plateau_pressure(v, y) for v in n])
        assert np.all(np.diff(P) >= 0)

    def test_out_of_bounds(self):
        with pytest.raises(ValueError):
            plateau_pressure(2.0, 0.1)
        with pytest.raises(ValueError):
            plateau_pressure(0.5, 0.9)


class TestRegistry:
    def test_all_ids_resolve(self):
        assert set(MODEL_IDS) == {
            "rastrigin2", "rosenbrock2", "rosenbrock8", "easom", "michalewicz2", "hartmann6", "plateau"
        }
        for mid in MODEL_IDS:
            m = get_model(mid)
            x = (m.spec.lower + m.spec.upper) / 2
            assert np.isfinite(m(x))

    def test_deterministic(self, rng):
        m = get_model("hartmann6")
        x = rng.uniform(-1, 1, 6)
        assert m(x) == m(x.copy())

    def test_bounds_enforced(self):
        m = get_model("rosenbrock2")
        with pytest.raises(ValueError):
            m((11.0, 1.0))
        with pytest.raises(ValueError):
            m((1.0, 1.0, 1.0))

    def test_bounds_override(self):
        m = get_model("rosenbrock2", [(-5, 5), (-5, 5)])
        assert m((-1.2, 1)) == pytest.approx(24.2)

    def test_unknown(self):
        with pytest.raises(KeyError):
            get_model("sphere")
