import numpy as np
import pytest

from mapcfo import (
    ConfigError,
    MimoConfig,
    make_combined_pilot,
    make_periodic_pilot,
    make_td_pilot,
    read_complex_csv,
    write_complex_csv,
    zadoff_chu,
)

ORTHO_TOL = 1e-10


def gram_deviation(pilot):
    target = pilot.n * pilot.power / pilot.l_t
    return np.abs(pilot.gram() - target * np.eye(pilot.l_t)).max()


class TestPeriodicPilot:
    def test_identity_stack_example(self):
        pilot = make_periodic_pilot(MimoConfig(3, 1, 6), m=2, power=1.0)
        expected = np.vstack([np.eye(3), np.eye(3)])
        assert np.array_equal(pilot.entries, expected)
        assert pilot.layout == "periodic"

    def test_single_antenna_reduces_to_tone(self):
        n = 7
        pilot = make_periodic_pilot(MimoConfig(1, 1, n), m=n, power=1.0)
        assert np.array_equal(pilot.entries, np.ones((n, 1)))

    def test_zadoff_chu_scrambling_keeps_power_and_gram(self):
        n = 8
        code = zadoff_chu(n)
        pilot = make_periodic_pilot(MimoConfig(2, 1, n), m=4, power=2.0, scrambling=code)
        assert abs(pilot.power - 2.0) < 1e-12
        assert np.abs(pilot.gram() - 8.0 * np.eye(2)).max() < 1e-12

    def test_mixing_matrix_applied(self):
        l_t = 2
        dft = np.exp(-2j * np.pi * np.outer(np.arange(l_t), np.arange(l_t)) / l_t) / np.sqrt(l_t)
        pilot = make_periodic_pilot(MimoConfig(l_t, 1, 8), m=4, power=1.0, mixing=dft)
        assert gram_deviation(pilot) < ORTHO_TOL
        assert np.allclose(pilot.entries[:2], dft, atol=1e-12)

    def test_dimension_mismatch(self):
        with pytest.raises(ConfigError):
            make_periodic_pilot(MimoConfig(3, 1, 7), m=2)

    def test_non_unit_modulus_scrambling_rejected(self):
        with pytest.raises(ConfigError):
            make_periodic_pilot(MimoConfig(2, 1, 4), m=2, scrambling=np.array([1, 1, 2, 1]))

    def test_non_unitary_mixing_rejected(self):
        with pytest.raises(ConfigError):
            make_periodic_pilot(MimoConfig(2, 1, 4), m=2, mixing=np.ones((2, 2)))


class TestTdPilot:
    def test_block_example(self):
        pilot = make_td_pilot(MimoConfig(3, 1, 6), m=2, power=1.0)
        expected = np.array(
            [
                [1, 0, 0],
                [1, 0, 0],
                [0, 1, 0],
                [0, 1, 0],
                [0, 0, 1],
                [0, 0, 1],
            ],
            dtype=complex,
        )
        assert np.array_equal(pilot.entries, expected)

    def test_single_antenna_matches_periodic(self):
        cfg = MimoConfig(1, 1, 4)
        td = make_td_pilot(cfg, m=4, power=1.0)
        periodic = make_periodic_pilot(cfg, m=4, power=1.0)
        assert np.array_equal(td.entries, periodic.entries)

    def test_gram_is_scaled_identity(self):
        pilot = make_td_pilot(MimoConfig(2, 1, 16), m=8, power=1.0)
        assert np.abs(pilot.gram() - 8.0 * np.eye(2)).max() < 1e-12


class TestCombinedPilot:
    def make_8_8(self, power=1.0):
        head = make_periodic_pilot(MimoConfig(2, 1, 8), m=4, power=power)
        tail = make_td_pilot(MimoConfig(2, 1, 8), m=4, power=power)
        return make_combined_pilot(head, tail)

    def test_concatenation_shape_and_gram(self):
        pilot = self.make_8_8()
        assert pilot.entries.shape == (16, 2)
        assert pilot.layout == "combined"
        assert np.abs(pilot.gram() - 8.0 * np.eye(2)).max() < 1e-12
        head = make_periodic_pilot(MimoConfig(2, 1, 8), m=4)
        assert np.array_equal(pilot.entries[:8], head.entries)

    def test_empty_tail_degenerates_to_head(self):
        head = make_periodic_pilot(MimoConfig(2, 1, 8), m=4)
        assert make_combined_pilot(head, None) is head

    def test_antenna_mismatch_rejected(self):
        head = make_periodic_pilot(MimoConfig(2, 1, 8), m=4)
        tail = make_td_pilot(MimoConfig(3, 1, 6), m=2)
        with pytest.raises(ConfigError):
            make_combined_pilot(head, tail)


@pytest.mark.parametrize("l_t,m", [(1, 8), (2, 8), (3, 4), (4, 4), (2, 16)])
@pytest.mark.parametrize("maker", [make_periodic_pilot, make_td_pilot])
def test_orthogonality_invariant(maker, l_t, m):
    pilot = maker(MimoConfig(l_t, 1, l_t * m), m=m, power=1.3)
    assert gram_deviation(pilot) < ORTHO_TOL


def test_scrambling_neutrality_for_power():
    cfg = MimoConfig(2, 1, 12)
    plain = make_td_pilot(cfg, m=6, power=1.0)
    rng = np.random.default_rng(0)
    code = np.exp(2j * np.pi * rng.random(12))
    scrambled = make_td_pilot(cfg, m=6, power=1.0, scrambling=code)
    assert abs(plain.power - scrambled.power) < 1e-12
    assert np.abs(plain.gram() - scrambled.gram()).max() < 1e-12


def test_declared_power_must_match_entries():
    from mapcfo import PilotMatrix

    with pytest.raises(ConfigError):
        PilotMatrix(np.eye(2, dtype=complex), 3.0, "custom")


def test_zadoff_chu_is_unit_modulus():
    for n in (7, 8, 16):
        code = zadoff_chu(n)
        assert np.abs(np.abs(code) - 1.0).max() < 1e-12


def test_row_products_match_definition():
    pilot = make_td_pilot(MimoConfig(2, 1, 8), m=4, power=2.0)
    direct = np.array(
        [
            [np.sum(pilot.entries[k1] * pilot.entries[k2].conj()) for k2 in range(8)]
            for k1 in range(8)
        ]
    )
    assert np.abs(pilot.row_products() - direct).max() < 1e-12


def test_csv_round_trip(tmp_path):
    pilot = make_periodic_pilot(
        MimoConfig(2, 1, 8), m=4, power=1.7, scrambling=zadoff_chu(8)
    )
    path = tmp_path / "pilot.csv"
    write_complex_csv(pilot.entries, path)
    back = read_complex_csv(path)
    assert np.abs(back - pilot.entries).max() < 1e-16
