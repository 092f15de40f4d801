import numpy as np
import pytest

from hqfnn import qcore, qnn
from hqfnn.errors import InvalidArgument
from hqfnn.noiselab import (DEFAULT_GAMMAS, PLACEMENTS, SweepConfig, ad_single_gate_fidelity,
                            circuit_fidelity, run_sweep, simulate_noisy)


def one_gate():
    """Ry(x) followed by identity trainable gates, i.e. only the encoding rotation."""
    return qnn.MembershipCircuit(1, 1, np.zeros(3))


def test_gamma_zero_gives_pure_output(rng):
    for qubits in (1, 2):
        circ = qnn.MembershipCircuit.random(qubits, 2, rng)
        for placement in PLACEMENTS:
            rho = simulate_noisy(circ, 0.3, qcore.make_channel("AD", 0.0), placement)
            want = qcore.to_mixed(qnn.final_state(circ, 0.3)).rho
            assert np.allclose(rho.rho, want, atol=1e-13)
            assert circuit_fidelity(circ, 0.3, "DP", 0.0, placement) == pytest.approx(1.0, abs=1e-12)


def test_single_gate_ad_closed_form():
    g = 0.2
    for x in np.linspace(-1, 1, 11):
        c, s = np.cos(x / 2), np.sin(x / 2)
        rho = simulate_noisy(one_gate(), x, qcore.make_channel("AD", g), "end_of_circuit").rho
        assert rho[0, 0] == pytest.approx(c**2 + g * s**2, abs=1e-13)
        assert rho[0, 1] == pytest.approx(c * s * np.sqrt(1 - g), abs=1e-13)
        assert rho[1, 1] == pytest.approx((1 - g) * s**2, abs=1e-13)
        assert circuit_fidelity(one_gate(), x, "AD", g) == pytest.approx(
            ad_single_gate_fidelity(x, g), abs=1e-10)


def test_trace_one_for_random_configs(rng):
    for _ in range(20):
        circ = qnn.MembershipCircuit.random(int(rng.integers(1, 3)), 2, rng)
        ch = qcore.make_channel(str(rng.choice(qcore.CHANNELS)), rng.uniform())
        rho = simulate_noisy(circ, rng.uniform(-1, 1), ch, str(rng.choice(PLACEMENTS)))
        rho.check()


@pytest.mark.parametrize("gamma", DEFAULT_GAMMAS)
def test_end_of_circuit_depolarising_closed_forms(rng, gamma):
    circ = qnn.MembershipCircuit.random(1, 2, rng)
    for x in np.linspace(-1, 1, 7):
        assert circuit_fidelity(circ, x, "MIX_DP", gamma) == pytest.approx(1 - gamma / 2, abs=1e-10)
        assert circuit_fidelity(circ, x, "DP", gamma) == pytest.approx(1 - 2 * gamma / 3, abs=1e-10)


def test_table_dp_column_from_mixing_form():
    table = run_sweep(SweepConfig("MIX_DP"))
    means = [m for _, m in table.rows]
    assert means == pytest.approx([0.9950, 0.9850, 0.9750, 0.9650, 0.9500], abs=5e-4)
    assert table.grid.shape == (5, 100)


@pytest.mark.parametrize("channel", ["AD", "DP", "MIX_DP"])
@pytest.mark.parametrize("placement", PLACEMENTS)
def test_mean_fidelity_monotone(channel, placement):
    circ = qnn.MembershipCircuit.random(1, 2, np.random.default_rng(4))
    table = run_sweep(SweepConfig(channel, (0.0,) + DEFAULT_GAMMAS, 25, circ, placement))
    means = [m for _, m in table.rows]
    assert means[0] == 1.0
    assert all(b <= a + 1e-12 for a, b in zip(means, means[1:]))


@pytest.mark.parametrize("channel", ["AD", "DP", "MIX_DP"])
def test_end_of_circuit_floor_at_gamma_point_one(rng, channel):
    for layers in (1, 2):
        circ = qnn.MembershipCircuit.random(1, layers, rng)
        table = run_sweep(SweepConfig(channel, (0.1,), 30, circ, "end_of_circuit"))
        assert table.rows[0][1] >= 0.93


@pytest.mark.parametrize("channel", ["AD", "DP", "MIX_DP"])
def test_each_gate_noise_is_worse(rng, channel):
    circ = qnn.MembershipCircuit.random(1, 2, rng)
    for g in DEFAULT_GAMMAS:
        for x in np.linspace(-1, 1, 9):
            each = circuit_fidelity(circ, x, channel, g, "after_each_gate")
            end = circuit_fidelity(circ, x, channel, g, "end_of_circuit")
            assert each <= end + 1e-12


def test_csv_outputs():
    table = run_sweep(SweepConfig("AD", (0.0, 0.1), 3))
    grid = table.grid_csv().splitlines()
    assert grid[0] == "gamma,x,fidelity" and len(grid) == 7
    assert grid[1] == "0.000000,-1.000000,1.000000"
    summary = table.summary_csv().splitlines()
    assert summary[0] == "gamma,mean_fidelity" and summary[1] == "0.000000,1.000000"


def test_config_validation():
    with pytest.raises(InvalidArgument):
        SweepConfig("XX")
    with pytest.raises(InvalidArgument):
        SweepConfig("AD", (1.5,))
    with pytest.raises(InvalidArgument):
        SweepConfig("AD", placement="middle")
    with pytest.raises(InvalidArgument):
        circuit_fidelity(one_gate(), 0.1, "AD", -0.1)
