import numpy as np
import pytest

from faafsim.harness import (COLUMNS, ConfigError, ExperimentConfig, SuccessMatrix, config_text,
                             load_config, parse_pattern, render_matrix, run_experiment, trial_seed,
                             trial_specs)

SMALL = dict(repetitions=2, steps=150, lock_patterns=((True, True, True, True), (True, True, True, False)))


def test_column_order():
    assert COLUMNS == ("+++", "+-+", "-++", "--+", "++-", "+--", "-+-", "---")


def test_empty_lock_patterns_rejected():
    with pytest.raises(ConfigError):
        ExperimentConfig("square", lock_patterns=())


@pytest.mark.parametrize("kw", [dict(scenario="hexagon"), dict(scenario="square", repetitions=0),
                                dict(scenario="square", jitter=(-1.0, 0.0)),
                                dict(scenario="square", workers=0)])
def test_config_validation(kw):
    with pytest.raises(ConfigError):
        ExperimentConfig(**kw)


def test_pattern_parsing():
    assert parse_pattern("1011") == (True, False, True, True)
    with pytest.raises(ConfigError):
        parse_pattern("10x1")


@pytest.mark.parametrize("scenario,obj,force,laps,r_end,yaw",
                         [("square", "square_prism", 11, 12, 18, 8), ("triangle", "triangle_prism", 12, 8, 26, 15),
                          ("wellplate-lid", "wellplate_lid", 8, 8, 16, 6), ("petri-lid", "petri_lid", 8, 8, 16, 6)])
def test_presets_carry_scenario_parameters(scenario, obj, force, laps, r_end, yaw):
    cfg = load_config(scenario=scenario)
    assert cfg.object == obj
    assert cfg.press.target_force == force and cfg.press.gain == 0.02
    assert cfg.spiral.laps == laps and cfg.spiral.r_end == r_end
    assert max(m[2] for m in cfg.offset_magnitudes) == yaw
    assert cfg.repetitions == 5 and cfg.jitter == (0.25, 0.5)


def test_lateral_preset_reverses_spiral():
    assert load_config(scenario="square-lateral").spiral.direction == "cw"
    assert load_config(scenario="square").spiral.direction == "ccw"


def test_lid_preset_rows():
    cfg = load_config(scenario="wellplate-lid")
    assert cfg.offset_magnitudes == ((2, 2, 2), (4, 4, 4), (6, 6, 6))
    assert (True, False, True, True) in cfg.lock_patterns     # y locked
    assert (True, True, False, True) in cfg.lock_patterns     # z locked
    assert (False, False, True, False) in cfg.lock_patterns   # only z enabled


def test_config_file_overrides_preset(tmp_path):
    p = tmp_path / "exp.ini"
    p.write_text("[experiment]\nscenario = triangle\nlocks = 1111\nrepetitions = 3\n\n[press]\nforce = 9\n")
    cfg = load_config(p)
    assert cfg.scenario == "triangle" and cfg.repetitions == 3
    assert cfg.press.target_force == 9.0 and cfg.spiral.r_end == 26
    assert load_config(p, "square").object == "square_prism"
    with pytest.raises(ConfigError):
        load_config(None, None)


def test_config_text_round_trip(tmp_path):
    for sc in ("square", "wellplate-lid", "plunge-sweep"):
        cfg = load_config(scenario=sc, seed=4)
        p = tmp_path / f"{sc}.ini"
        p.write_text(config_text(cfg))
        assert load_config(p) == cfg


def test_render_all_success_row():
    m = SuccessMatrix(["✓ ✓ ✓ ✓"], np.full((1, 8), 5), 5)
    out = render_matrix(m)
    assert out.splitlines()[2].count("5/5") == 8
    head = out.splitlines()[0].split("|")[1].split()
    assert tuple(head) == COLUMNS


def test_matrix_csv_round_trip():
    rng = np.random.default_rng(2)
    m = SuccessMatrix(["✓ ✓ ✓ ✓", "- ✓ ✓ -", "(±2,±2,±2) ✓ - ✓ ✓"], rng.integers(0, 6, (3, 8)), 5)
    back = SuccessMatrix.from_csv(m.to_csv())
    assert back.labels == m.labels and back.repetitions == 5
    assert np.array_equal(back.successes, m.successes)
    assert back.to_csv() == m.to_csv()


def test_matrix_rejects_overfull_cell():
    with pytest.raises(ValueError):
        SuccessMatrix(["a"], np.full((1, 8), 6), 5)


def test_seeds_shared_across_lock_rows():
    cfg = load_config(scenario="square", **SMALL)
    by_row = {}
    for key, spec in trial_specs(cfg):
        by_row.setdefault(key.row, []).append(spec.seed)
    assert by_row[0] == by_row[1]
    assert len(set(by_row[0])) == len(by_row[0])
    assert trial_seed(0, 0, 1, 0) != trial_seed(1, 0, 1, 0)


def test_zero_jitter_repetitions_share_a_simulation():
    cfg = load_config(scenario="square", jitter=(0.0, 0.0), **SMALL)
    specs = [s for _, s in trial_specs(cfg)]
    assert len(set(specs)) == len(specs) // cfg.repetitions


@pytest.fixture(scope="module")
def small_runs(tmp_path_factory):
    out = {}
    for w in (1, 2):
        d = tmp_path_factory.mktemp(f"w{w}")
        cfg = load_config(scenario="square", workers=w, output_dir=str(d), **SMALL)
        out[w] = (run_experiment(cfg), d)
    return out


def test_tally_conservation(small_runs):
    res, _ = small_runs[1]
    assert sum(res.tallies.values()) == res.config.n_trials == 2 * 8 * 2
    assert res.completed
    assert int(res.matrix.successes.sum()) == res.tallies["success"]


def test_outputs_written(small_runs):
    _, d = small_runs[1]
    for name in ("matrix.txt", "matrix.csv", "trials.csv", "config.ini", "summary.json"):
        assert (d / name).exists()
    assert len((d / "trials.csv").read_text().splitlines()) == 33


def test_parallel_matches_serial(small_runs):
    (_, d1), (_, d2) = small_runs[1], small_runs[2]
    for name in ("matrix.csv", "trials.csv"):
        assert (d1 / name).read_bytes() == (d2 / name).read_bytes()


def test_reproducible_bytes(small_runs, tmp_path):
    res, d1 = small_runs[1]
    cfg = load_config(scenario="square", output_dir=str(tmp_path), **SMALL)
    run_experiment(cfg)
    for name in ("matrix.csv", "trials.csv"):
        assert (tmp_path / name).read_bytes() == (d1 / name).read_bytes()


def test_traces_written(tmp_path):
    cfg = load_config(scenario="square", output_dir=str(tmp_path), traces=True, repetitions=1,
                      steps=60, lock_patterns=((True, True, True, True),))
    run_experiment(cfg)
    assert len(list((tmp_path / "traces").glob("*.csv"))) == 8
    assert len(list((tmp_path / "traces").glob("*.json"))) == 8


def test_plunge_sweep_scenario(tmp_path):
    cfg = load_config(scenario="plunge-sweep", output_dir=str(tmp_path),
                      pairs=(("square_prism", "square_base"),))
    res = run_experiment(cfg)
    assert res.plunge[1] == ("square_prism", "square_base", "0000", 1)
    assert res.completed
    assert (tmp_path / "plunge.csv").exists()
