import json
import math

import numpy as np
import pytest

from risfed import cli
from risfed.errors import ActionSpaceTooLarge, CheckpointError
from risfed.metrics import HEADER_LINE, read_metrics, recompute_objectives
from risfed.simulator import Simulator
from risfed.training import evaluate_checkpoint, placements, run, run_centralized, run_fdrl, run_variant

from .conftest import TINY_YAML


def _rows_by_episode_robot(path):
    out = {}
    for r in read_metrics(path):
        out.setdefault((int(r["episode"]), int(r["robot"])), []).append(r)
    return out


def test_metrics_header_is_fixed(tmp_path, tiny_cfg):
    run_fdrl(tiny_cfg, tmp_path)
    first = (tmp_path / "metrics.csv").read_text().splitlines()[0]
    assert first == HEADER_LINE and first.startswith("episode,")


def test_same_seed_identical_outputs(tmp_path, tiny_cfg):
    run_fdrl(tiny_cfg, tmp_path / "a")
    run_fdrl(tiny_cfg, tmp_path / "b")
    for name in ("metrics.csv", "eval.csv", "episodes.csv", "checkpoint.bin"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_different_seed_differs(tmp_path, tiny_cfg):
    run_fdrl(tiny_cfg, tmp_path / "a")
    run_fdrl(tiny_cfg.copy(run={"seed": 8}), tmp_path / "b")
    assert (tmp_path / "a" / "metrics.csv").read_bytes() != (tmp_path / "b" / "metrics.csv").read_bytes()


def test_loop_bounds(tmp_path, tiny_cfg):
    cfg = tiny_cfg.copy(fleet={"t_max": 5}, run={"episodes": 1})
    run_fdrl(cfg, tmp_path)
    for rows in _rows_by_episode_robot(tmp_path / "metrics.csv").values():
        assert len(rows) <= 5


def test_trajectories_start_and_arrive(tmp_path, tiny_cfg):
    cfg = tiny_cfg.copy(fleet={"t_max": 40}, run={"episodes": 4})
    run_fdrl(cfg, tmp_path)
    starts, dests = placements(cfg)
    for (_, k), rows in _rows_by_episode_robot(tmp_path / "metrics.csv").items():
        assert (float(rows[0]["x"]), float(rows[0]["y"])) == starts[k]
        for prev, nxt in zip(rows, rows[1:]):
            assert (prev["next_x"], prev["next_y"]) == (nxt["x"], nxt["y"])
        arrivals = [i for i, r in enumerate(rows) if (float(r["next_x"]), float(r["next_y"])) == dests[k]]
        # A robot stops emitting rows once it reaches its destination.
        assert arrivals in ([], [len(rows) - 1])


def test_power_budget_whenever_feasible(tmp_path, tiny_cfg):
    run_fdrl(tiny_cfg, tmp_path)
    p_max = tiny_cfg.power_config().p_max
    slots = {}
    for r in read_metrics(tmp_path / "metrics.csv"):
        if r["sic_feasible"] == "1":
            key = (r["episode"], r["slot"])
            slots[key] = slots.get(key, 0.0) + float(r["power_w"])
    assert slots
    assert all(total <= p_max * (1 + 1e-12) for total in slots.values())


def test_summary_objective_matches_offline_recompute(tmp_path, tiny_cfg):
    result = run_fdrl(tiny_cfg, tmp_path)
    offline = recompute_objectives(tmp_path / "eval.csv", tiny_cfg.energy_model())
    assert len(offline) == tiny_cfg.run.eval_episodes
    for ep, value in offline.items():
        assert math.isclose(value, result.eval_objectives[ep - 1], rel_tol=1e-9, abs_tol=1e-300)
    train = recompute_objectives(tmp_path / "metrics.csv", tiny_cfg.energy_model())
    np.testing.assert_allclose(list(train.values()), result.episode_objectives, rtol=1e-9)
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert math.isclose(summary["eval_objective"], np.mean(list(offline.values())), rel_tol=1e-9)


def test_single_robot_oma_equals_noma(tiny_cfg):
    cfg = tiny_cfg.copy(fleet={"num_robots": 1, "starts": [[0.25, 0.25]], "destinations": [[4.25, 1.25]]})
    a = run_fdrl(cfg)
    b = run_variant(cfg, "oma")
    assert a.episode_rewards == b.episode_rewards
    assert a.eval_objectives == b.eval_objectives


def test_single_robot_rate_sequences_identical(tmp_path, tiny_cfg):
    cfg = tiny_cfg.copy(fleet={"num_robots": 1, "starts": [[0.25, 0.25]], "destinations": [[4.25, 1.25]]})
    run_fdrl(cfg, tmp_path / "noma")
    run_variant(cfg, "oma", tmp_path / "oma")
    rates = [[r["rate"] for r in read_metrics(tmp_path / d / "metrics.csv")] for d in ("noma", "oma")]
    assert rates[0] == rates[1]


def test_qoe_logs_rate_and_utility(tmp_path, tiny_cfg):
    run_variant(tiny_cfg, "qoe", tmp_path)
    rows = read_metrics(tmp_path / "metrics.csv")
    rc = tiny_cfg.reward_config()
    for r in rows:
        rate = float(r["rate"])
        expected = rc.qoe_floor if rate <= 0 else max(rc.qoe_c1 * math.log10(rate) + rc.qoe_c2, rc.qoe_floor)
        assert float(r["utility"]) == pytest.approx(expected, rel=1e-12)


def test_rho_min_echoed_in_summary(tmp_path, tiny_cfg):
    run_fdrl(tiny_cfg, tmp_path)
    resolved = json.loads((tmp_path / "summary.json").read_text())["resolved"]
    assert resolved["rho_min_defaulted"] is True
    assert resolved["rho_min_w"] == tiny_cfg.channel.noise_power_w


def test_federated_rounds_counted(tiny_cfg):
    result = run_fdrl(tiny_cfg)
    assert result.summary["federation_rounds"] == sum(result.episode_steps) // tiny_cfg.federation.sync_period
    nets = result.networks
    assert nets["local_0"].equal(nets["local_1"]) or result.summary["federation_rounds"] > 0


def test_centralized_small_runs(tmp_path, tiny_cfg):
    result = run_centralized(tiny_cfg, tmp_path)
    assert result.summary["action_space"]["centralized"] == 4 * 24**2
    assert (tmp_path / "metrics.csv").read_text().startswith(HEADER_LINE)


def test_centralized_refuses_at_cap(tiny_cfg):
    cfg = tiny_cfg.copy(
        fleet={"num_robots": 4, "starts": None, "destinations": None},
        ris={"elements_per_side": 2},
    )
    with pytest.raises(ActionSpaceTooLarge) as exc:
        run_centralized(cfg)
    assert exc.value.size == 1_327_104 and exc.value.cap == 1_000_000


def test_checkpoint_eval_reproduces_greedy_run(tmp_path, tiny_cfg):
    result = run(tiny_cfg, tmp_path)
    again = evaluate_checkpoint(tiny_cfg, tmp_path / "checkpoint.bin")
    assert again.eval_objectives == result.eval_objectives


def test_checkpoint_wrong_shape_rejected(tmp_path, tiny_cfg):
    run(tiny_cfg, tmp_path)
    wider = tiny_cfg.copy(training={"hidden_layers": [9]})
    with pytest.raises(CheckpointError):
        evaluate_checkpoint(wider, tmp_path / "checkpoint.bin")


def test_simulator_masks_protect_sic(tiny_cfg):
    sim = Simulator(tiny_cfg, np.random.default_rng(0))
    starts, dests = placements(tiny_cfg)
    sim.reset(starts, dests)
    for g in range(sim.num_global_actions):
        ranks = sim.ranks(g)
        strongest = next(k for k, r in ranks.items() if r == 1)
        mask = sim.local_mask(strongest, ranks)
        assert not mask[:4].any() and mask[4:].all()


def test_simulator_outage_on_equal_powers(tiny_cfg):
    sim = Simulator(tiny_cfg, np.random.default_rng(0))
    sim.reset(*placements(tiny_cfg))
    out = sim.step(0, [4, 4])  # both robots at level 2: SIC gap is zero
    assert not out.feasible and out.rates.tolist() == [0.0, 0.0]


# -- command line ---------------------------------------------------------------


@pytest.fixture
def tiny_file(tmp_path):
    path = tmp_path / "tiny.yaml"
    path.write_text(TINY_YAML)
    return path


def test_cli_validate(tiny_file, capsys):
    assert cli.main(["validate-config", str(tiny_file)]) == cli.EXIT_OK
    assert json.loads(capsys.readouterr().out)["ok"] is True


def test_cli_config_error_exit_code(tmp_path, capsys):
    bad = tmp_path / "bad.yaml"
    bad.write_text("fleet:\n  wheels: 3\n")
    assert cli.main(["validate-config", str(bad)]) == cli.EXIT_CONFIG
    assert "fleet.wheels" in capsys.readouterr().err


def test_cli_run_eval_report(tmp_path, tiny_file, capsys):
    out = tmp_path / "out"
    code = cli.main(["run", "--config", str(tiny_file), "--algo", "fdrl", "--seed", "3", "--episodes", "2",
                     "--out", str(out)])
    assert code == cli.EXIT_OK
    assert json.loads((out / "summary.json").read_text())["episodes"] == 2
    assert cli.main(["eval", "--checkpoint", str(out / "checkpoint.bin"), "--config", str(out / "config.yaml")]) == 0
    assert cli.main(["report", str(out)]) == 0
    for name in ("training_curve.png", "trajectories.png", "rates.png"):
        assert (out / name).stat().st_size > 0


def test_cli_env_overrides_out_dir(tmp_path, tiny_file, monkeypatch):
    monkeypatch.setenv(cli.OUT_DIR_ENV, str(tmp_path / "env"))
    assert cli.main(["run", "--config", str(tiny_file), "--episodes", "1", "--out", str(tmp_path / "flag")]) == 0
    assert (tmp_path / "env" / "metrics.csv").exists()
    assert not (tmp_path / "flag").exists()


def test_cli_cap_refusal_exit_code(tmp_path, capsys):
    path = tmp_path / "big.yaml"
    path.write_text("fleet: {num_robots: 4}\nris: {elements_per_side: 2}\nrun: {episodes: 1}\n")
    assert cli.main(["run", "--config", str(path), "--algo", "central", "--out", str(tmp_path / "o")]) == 4
    assert "1327104" in capsys.readouterr().err


def test_cli_divergence_exit_code(tmp_path, tiny_file):
    text = TINY_YAML.replace("optimizer: adam", "optimizer: sgd\n  learning_rate: 1.0e+200")
    path = tmp_path / "diverge.yaml"
    path.write_text(text)
    with np.errstate(all="ignore"):
        code = cli.main(["run", "--config", str(path), "--episodes", "3", "--out", str(tmp_path / "o")])
    assert code == cli.EXIT_DIVERGED
