import math

import pytest

import adaplan

TINY = {
    "env": {"max_steps": 30},
    "diffuser": {"horizon": 8, "diffusion_steps": 5, "hidden": [32], "embed_dim": 8},
    "invdyn": {"members": 2, "hidden": [32], "epochs": 1},
}


def test_math():
    assert adaplan.entropy([0.2] * 5) == pytest.approx(math.log(5), abs=1e-12)
    assert adaplan.entropy([0, 0, 1, 0, 0]) == 0.0
    assert sum(adaplan.softmax([3.0, -1.0, 0.5, 12.0, -7.0])) == pytest.approx(1.0, abs=1e-9)
    probs, u, action = adaplan.combine_members([[0.9, 0.1, 0, 0, 0], [0.1, 0.9, 0, 0, 0]])
    assert probs[:2] == pytest.approx([0.5, 0.5])
    assert u == pytest.approx(math.log(2))
    assert action == 0
    sched = adaplan.cosine_schedule(100)
    assert sched["alpha_bar"][0] == 1.0
    assert sched["alpha_bar"][-1] < 1e-3


def test_env_reset_is_deterministic():
    env = adaplan.Env()
    a = env.reset(7)
    assert len(a) == env.obs_dim == 35
    assert env.reset(7) == a
    obs, reward, done, cause = env.step(1)
    assert len(obs) == 35 and reward >= 0.0
    assert env.steps == 1
    with pytest.raises(IndexError):
        env.step(9)


def test_bad_config_is_rejected():
    with pytest.raises(ValueError):
        adaplan.Env({"env": {"lanes": 0}})


def test_tiny_pipeline(tmp_path):
    header = adaplan.generate_dataset(tmp_path / "d.jsonl", 400, 1, TINY)
    assert header["transitions"] >= 400  # the last episode runs to its end
    losses = adaplan.train_diffuser(tmp_path / "d.jsonl", tmp_path / "m.ckpt", 3, 2, TINY)
    assert len(losses) == 3 and all(math.isfinite(x) for x in losses)
    acc = adaplan.train_invdyn(tmp_path / "d.jsonl", tmp_path / "ens", 3, TINY)
    assert len(acc) == 2 and all(0.0 <= a <= 1.0 for a in acc)

    planner = adaplan.Planner(tmp_path / "m.ckpt", tmp_path / "ens", TINY)
    cont = planner.evaluate("continuous", 0.0, 2, 5)
    assert cont["saved_nfe_pct"] == 0.0
    assert cont["plan_counts"] == cont["lengths"]
    nr = planner.evaluate("no-replan", 0.0, 2, 5)
    assert nr["saved_nfe_pct"] > 0.0
    summary = planner.episode("adaptive", 0.1, 5)
    assert summary == planner.episode("adaptive", 0.1, 5)
    assert planner.calibrate(1, 99) >= 0.0
