import numpy as np
import pytest

from hppspc import datagen
from hppspc.datagen import (Blocks, DataSet, DayProfile, FoGains, Trajectory,
                            add_measurement_noise, collect_trajectories, excitation_rank,
                            fo_step, load_dataset, save_dataset, split_blocks)
from hppspc.plant import PlantConfig, initial_state, plant_step

NO_DITHER = FoGains(dither_std=0.0)
LO, HI = (0.0, 0.0, -4.0), (4.0, 4.0, 4.0)


def flat_day(n=200, p_ref=3.0, wind=2.5, solar=2.0):
    return DayProfile(np.full(n, p_ref), np.full(n, wind), np.full(n, solar))


def test_fo_zero_error_keeps_renewables():
    u = fo_step([1.0, 1.5, 0.5], [1.0, 1.5, 0.5], 3.0, LO, HI, NO_DITHER)
    np.testing.assert_array_equal(u[:2], [1.0, 1.5])


def test_fo_projection_at_upper_bounds():
    hi = (2.0, 1.0, 4.0)
    u = fo_step([2.0, 1.0, 0.0], [2.0, 1.0, 0.0], 5.0, LO, hi, NO_DITHER)
    np.testing.assert_array_equal(u[:2], [2.0, 1.0])
    assert u[2] == 2.0  # battery covers the residual


def test_fo_dither_requires_rng():
    with pytest.raises(ValueError, match="rng"):
        fo_step([0, 0, 0], [0, 0, 0], 1.0, LO, HI, FoGains())


def test_fo_converges_on_constant_reference():
    cfg = PlantConfig()
    state = initial_state(cfg)
    u = np.zeros(3)
    y = state.outputs
    errs = []
    gains = FoGains(weights=(0.5, 0.5, 0.5), dither_std=0.0)
    for _ in range(50):
        u = fo_step(u, y, 3.0, LO, (4.0, 4.0, 0.0), gains)
        y, state = plant_step(state, u, 4.0, 4.0, cfg)
        errs.append(abs(3.0 - y.sum()))
    assert errs[-1] < 0.05 * 3.0


def test_collect_single_window_shape():
    ds = collect_trajectories([flat_day(40)], 1, 20, 20, 0.0, np.random.default_rng(0))
    assert ds.u.shape == (1, 40, 3) and ds.y.shape == (1, 40, 3)


def test_collect_noiseless_records_plant_output():
    day = flat_day(60)
    ds = collect_trajectories([day], 21, 20, 20, 0.0, np.random.default_rng(0))
    # ideal inner loops: output equals the clamped setpoint
    np.testing.assert_allclose(ds.y[..., :2], np.minimum(ds.u[..., :2], [2.5, 2.0]))
    np.testing.assert_allclose(ds.y[..., 2], np.clip(ds.u[..., 2], -4, 4))


def test_collect_insufficient_samples():
    with pytest.raises(ValueError, match="insufficient samples: 5 windows of length 40"):
        collect_trajectories([flat_day(42)], 5, 20, 20, 0.0, np.random.default_rng(0))


def test_noise_ratio_zero_is_identity():
    tr = Trajectory(np.ones((5, 3)), np.ones((5, 3)))
    assert add_measurement_noise(tr, 0.0, np.random.default_rng(0)) is tr


def test_noise_zero_channel_unchanged():
    u = np.zeros((10, 3))
    u[:, 0] = 1.0
    out = add_measurement_noise(Trajectory(u, u.copy()), 0.02, np.random.default_rng(0))
    np.testing.assert_array_equal(out.u_seq[:, 1:], 0.0)


def test_noise_monte_carlo_std():
    x = np.full((10_000, 1), 3.0)
    out = add_measurement_noise(Trajectory(x, x), 0.02, np.random.default_rng(3))
    assert np.std(out.y_seq - x) == pytest.approx(0.02 * 3.0, rel=0.05)


def test_split_blocks_hand_example():
    ds = DataSet(np.array([[[1.0], [2.0]]]), np.array([[[3.0], [4.0]]]), 1, 1)
    b = split_blocks(ds)
    np.testing.assert_array_equal(b.M[:, 0], [3.0, 1.0, 2.0])
    np.testing.assert_array_equal(b.Y_N[:, 0], [4.0])


def test_split_assemble_round_trip():
    rng = np.random.default_rng(0)
    ds = DataSet(rng.normal(size=(7, 5, 3)), rng.normal(size=(7, 5, 3)), 2, 3)
    back = datagen.assemble(split_blocks(ds))
    np.testing.assert_array_equal(back.u, ds.u)
    np.testing.assert_array_equal(back.y, ds.y)


def test_default_block_shapes_and_rank(scenario):
    from hppspc.harness import generate_dataset
    b = split_blocks(generate_dataset(scenario))
    assert b.M.shape == (180, 1000)
    assert excitation_rank(b) == (120, True)


def test_rank_zero_inputs():
    ds = DataSet(np.zeros((50, 4, 3)), np.zeros((50, 4, 3)), 2, 2)
    assert excitation_rank(split_blocks(ds)) == (0, False)


def test_rank_random_inputs_full():
    rng = np.random.default_rng(0)
    ds = DataSet(rng.normal(size=(200, 10, 3)), np.zeros((200, 10, 3)), 5, 5)
    assert excitation_rank(split_blocks(ds)) == (30, True)


def test_rank_duplicated_trajectory_deficient():
    one = np.random.default_rng(0).normal(size=(1, 10, 3))
    ds = DataSet(np.repeat(one, 100, axis=0), np.zeros((100, 10, 3)), 5, 5)
    rank, full = excitation_rank(split_blocks(ds))
    assert rank == 1 and not full


def test_save_load_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    ds = DataSet(rng.normal(size=(4, 6, 3)), rng.normal(size=(4, 6, 3)), 3, 3, seed=7)
    save_dataset(ds, tmp_path / "d.csv")
    back = load_dataset(tmp_path / "d.csv")
    np.testing.assert_array_equal(back.u, ds.u)
    np.testing.assert_array_equal(back.y, ds.y)
    assert (back.t_ini, back.n, back.seed) == (3, 3, 7)


def test_load_detects_row_mismatch(tmp_path):
    ds = DataSet(np.ones((2, 4, 3)), np.ones((2, 4, 3)), 2, 2)
    side = save_dataset(ds, tmp_path / "d.csv")
    side.write_text(side.read_text().replace('"T": 2', '"T": 3'))
    with pytest.raises(ValueError, match="sidecar"):
        load_dataset(tmp_path / "d.csv")


def test_generation_is_deterministic(scenario):
    from dataclasses import replace
    from hppspc.harness import generate_dataset
    small = replace(scenario, data=replace(scenario.data, T=50, n_days=2))
    a, b = generate_dataset(small), generate_dataset(small)
    np.testing.assert_array_equal(a.u, b.u)
    np.testing.assert_array_equal(a.y, b.y)
