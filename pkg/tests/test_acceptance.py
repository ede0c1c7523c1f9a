"""Acceptance criteria 1-9, each at its stated tolerance.

Every test reports one ``criterion N: PASS|FAIL`` line (printed, and repeated
in the terminal summary) before asserting.
"""

import json
import math
import time

import numpy as np
import pytest
import torch

from indoorfas.channel import (
    Polarization,
    RadioParams,
    channel_coefficient,
    fresnel_gamma,
    image_method_reference,
    indicator_functions,
)
from indoorfas.cli import main
from indoorfas.geometry import FasLine, Layout, Point, builtin_layout
from indoorfas.optim import FasConstraints, random_search_sum_rate, sum_rate, wmmse
from indoorfas.radiomap import average_rate, map_metrics, path_loss_map
from indoorfas.rl import (
    BanditEnv,
    FasEnv,
    TrainConfig,
    group_advantages,
    grpo_objective,
    grpo_train,
    kl_estimate,
    make_critic,
    make_policy,
    parameter_count,
    ppo_init,
)
from indoorfas.rl.grpo import Group, Trajectory
from indoorfas.rl.policy import DTYPE
from indoorfas.tworay import TwoRayInstance, exhaustive_search, snr_two_ray, solve_closed_form

from conftest import (
    ACCEPTANCE_LINES,
    CONFIGS_DIR,
    ToyPolicy,
    interior_point,
    oracle_indicators,
    random_rectilinear,
    random_two_ray,
    rel_err,
    single_wall_snr,
)


def report(n: int, ok: bool, detail: str) -> None:
    line = f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}"
    print(line)
    ACCEPTANCE_LINES.append(line)


# ------------------------------------------------------------ 1


TABLE = {
    # (config, frequency): (theta* / pi, rate bits/s/Hz)
    ("tworay_rx1.json", 5e9): (0.6084, 25.4155),
    ("tworay_rx1.json", 60e9): (0.6010, 18.8406),
    ("tworay_rx2.json", 5e9): (0.2998, 20.9301),
    ("tworay_rx2.json", 60e9): (0.2998, 16.0837),
}


def test_criterion_1_closed_form_angles(tmp_path):
    t0 = time.perf_counter()
    rows, angle_ok, rate_ok, matches = [], True, True, []
    for name in ("tworay_rx1.json", "tworay_rx2.json"):
        out = tmp_path / name
        assert main(["tworay-solve", "--config", str(CONFIGS_DIR / name), "--out", str(out)]) == 0
        for r in json.loads((out / "tworay.json").read_text())["results"]:
            want_theta, want_rate = TABLE[(name, r["frequency"])]
            got = r["theta_star_over_pi"]
            a_ok = abs(got - want_theta) <= 5e-4
            fits = [k for k in ("rate_two_ray", "rate_full_layout") if abs(r[k] - want_rate) <= 0.5]
            angle_ok &= a_ok
            rate_ok &= bool(fits)
            matches.append(fits)
            rows.append(
                f"{name[7:10]}@{r['frequency'] / 1e9:g}GHz theta*={got:.4f}pi (want {want_theta}) "
                f"{'ok' if a_ok else 'off'}; rates two-ray {r['rate_two_ray']:.2f} full {r['rate_full_layout']:.2f} "
                f"(want {want_rate})"
            )
    elapsed = time.perf_counter() - t0
    ok = angle_ok and rate_ok and elapsed < 5
    report(1, ok, f"{elapsed:.1f}s; " + " | ".join(rows) + f"; interpretations within 0.5: {matches}")
    # informational: the receiver at (1.25, 1.25) used by the joint-optimization scenario
    for f in (5e9, 60e9):
        inst = TwoRayInstance(1.25, 1.25, 0.5, 5.24, RadioParams(frequency=f), 0.6 * math.pi, 0.82 * math.pi)
        sol = solve_closed_form(inst)
        print(f"  info: Rx (1.25, 1.25) at {f / 1e9:g} GHz gives theta*={sol.theta_star / math.pi:.5f}pi, "
              f"two-ray rate {sol.rate:.4f}")
    assert angle_ok, "closed-form angles differ from the reference table"
    assert rate_ok, "no rate interpretation within 0.5 bits/s/Hz"
    assert elapsed < 5


# ------------------------------------------------------------ 2


def test_criterion_2_closed_form_near_optimal():
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    need = {"Case1": 0.999, "Case2": 0.99, "Case3": 0.999}
    worst = {}
    for case in need:
        ratios = []
        for _ in range(200):
            inst = random_two_ray(rng, case)
            assert inst.case.value == case
            ratios.append(solve_closed_form(inst).rate / exhaustive_search(inst).rate)
        worst[case] = min(ratios)
    elapsed = time.perf_counter() - t0
    ok = all(worst[c] >= need[c] for c in need) and elapsed < 120
    report(2, ok, f"{elapsed:.1f}s; worst closed-form/oracle rate ratio " +
           ", ".join(f"{c} {worst[c]:.5f} (need {need[c]})" for c in need))
    assert ok


# ------------------------------------------------------------ 3


def test_criterion_3_oracle_equivalence():
    t0 = time.perf_counter()
    rng = np.random.default_rng(3)
    worst = 0.0
    for _ in range(500):
        w, h = rng.uniform(0.5, 10, 2)
        lay = Layout.rectangle(w, h, rng.uniform(1, 10))
        params = RadioParams(frequency=rng.uniform(1e9, 60e9), polarization=str(rng.choice(["TE", "TM"])))
        tx = (rng.uniform(0, w), rng.uniform(0, h))
        rx = (rng.uniform(0, w), rng.uniform(0, h))
        worst = max(worst, rel_err(channel_coefficient(lay, params, tx, rx), image_method_reference(lay, params, tx, rx, 1)))
    agree, total, walls_seen = 0, 0, set()
    for _ in range(1000):
        lay, shape = random_rectilinear(rng)
        walls_seen.add(len(lay.walls))
        tx, rx = interior_point(rng, lay, shape), interior_point(rng, lay, shape)
        ind = indicator_functions(lay, tx, rx)
        agree += (ind.wall_nlos, ind.los) == oracle_indicators(lay, shape, tx, rx)
        total += 1
    elapsed = time.perf_counter() - t0
    ok = worst < 1e-10 and agree == total and elapsed < 120
    report(3, ok, f"{elapsed:.1f}s; max rel. error vs image method {worst:.2e} over 500 rectangles; "
                  f"indicator agreement {agree}/{total} layouts with wall counts {sorted(walls_seen)}")
    assert ok


# ------------------------------------------------------------ 4


def test_criterion_4_snr_identity():
    rng = np.random.default_rng(4)
    worst = 0.0
    for _ in range(1000):
        x1, h, y0 = rng.uniform(0.3, 5), rng.uniform(0.2, 4), rng.uniform(0.1, 2)
        params = RadioParams(
            frequency=rng.uniform(1e9, 60e9), polarization=str(rng.choice(["TE", "TM"])),
            gt=rng.uniform(0.5, 2), gr=rng.uniform(0.5, 2), noise_power=10 ** rng.uniform(-13, -11),
        )
        inst = TwoRayInstance(x1, y0 + h, y0, rng.uniform(1, 10), params, math.pi / 2, math.pi / 2 + 0.1,
                              power=rng.uniform(0.1, 2))
        theta = rng.uniform(inst.lower_bound + 0.01, math.pi - 0.05)
        a, b = snr_two_ray(theta, inst), single_wall_snr(theta, inst)
        worst = max(worst, abs(a - b) / b)
    ok = worst < 1e-10
    report(4, ok, f"max rel. error of the two-ray SNR vs the complex single-wall channel {worst:.2e} over 1000 pairs")
    assert ok


# ------------------------------------------------------------ 5


def test_criterion_5_fresnel_identities():
    eps_values = np.linspace(1, 20, 39)
    alphas = np.linspace(1e-6, math.pi / 2, 400)
    normal = max(
        abs(fresnel_gamma(math.pi / 2, e, m) - (1 - math.sqrt(e)) / (1 + math.sqrt(e)))
        for e in eps_values for m in Polarization
    )
    vacuum = max(abs(fresnel_gamma(a, 1.0, m)) for a in alphas for m in Polarization)
    bound = max(abs(fresnel_gamma(a, e, m)) for a in alphas for e in eps_values for m in Polarization)
    ok = normal < 1e-14 and vacuum == 0 and bound <= 1
    report(5, ok, f"normal-incidence deviation {normal:.1e}, max |gamma| at eps=1 {vacuum}, "
                  f"max |gamma| over sweep {bound:.6f}")
    assert ok


# ------------------------------------------------------------ 6


def _p1_env() -> FasEnv:
    rxs = (Point(1.25, 1.25), Point(4.25, 3.0))
    c = FasConstraints(0.8975836176504333 * math.pi, 0.9220208696226306 * math.pi)
    return FasEnv(builtin_layout("rectangle5"), RadioParams(), rxs, 2, c, FasLine(0.5, rxs[0]))


def _toy_group(rng):
    trajs = []
    for _ in range(4):
        raw = rng.normal(0, 1, (3, 1))
        trajs.append(Trajectory(rng.uniform(-1, 1, (3, 1)), raw, raw, rng.normal(0, 1, 3), np.zeros(3)))
    group = Group(trajs)
    group.advantages = group_advantages(group.rewards)
    return group


def test_criterion_6_grpo_machinery():
    rng = np.random.default_rng(6)
    mean_dev = std_dev = 0.0
    for _ in range(2000):
        r = rng.normal(rng.uniform(-100, 100), rng.uniform(0.01, 50), int(rng.integers(2, 65)))
        a = group_advantages(r)
        mean_dev, std_dev = max(mean_dev, abs(a.mean())), max(std_dev, abs(a.std() - 1))
    kl_min = min(kl_estimate(x, 1.0) for x in rng.uniform(1e-9, 100, 10_000))
    cfg = TrainConfig(kl_penalty=0.3, clip=0.2)
    grad_err = 0.0
    for _ in range(10):
        group = _toy_group(rng)
        old, ref = ToyPolicy(0.4, 0.1, -0.2), ToyPolicy(0.2, -0.3, 0.1)
        base = old.theta.detach().numpy() + rng.uniform(-0.05, 0.05, 3)
        cur = ToyPolicy(*base)
        (grad,) = torch.autograd.grad(grpo_objective(group, cur, old, ref, cfg), cur.theta)
        for i in range(3):
            e = np.eye(3)[i] * 1e-6
            up = grpo_objective(group, ToyPolicy(*(base + e)), old, ref, cfg).item()
            down = grpo_objective(group, ToyPolicy(*(base - e)), old, ref, cfg).item()
            grad_err = max(grad_err, abs(grad[i].item() - (up - down) / 2e-6))
    env = _p1_env()
    actor, critic = parameter_count(make_policy(env)), parameter_count(make_critic(env))
    ratio = actor / (actor + critic)
    ok = mean_dev < 1e-9 and std_dev < 1e-6 and kl_min >= 0 and grad_err < 1e-5 and 0.45 <= ratio <= 0.55
    report(6, ok, f"advantage |mean| {mean_dev:.1e}, |std-1| {std_dev:.1e}; min KL {kl_min:.2e} over 1e4; "
                  f"gradient vs finite differences {grad_err:.1e}; GRPO/PPO parameters {actor}/{actor + critic} "
                  f"= {ratio:.4f}")
    assert ok


# ------------------------------------------------------------ 7


def _mean_policy_reward(env, policy, samples: int, seed: int) -> float:
    rng = np.random.default_rng(seed)
    gen = torch.Generator().manual_seed(seed)
    states = np.array([env.reset(rng) for _ in range(samples)])
    actions, _, _ = policy.sample(torch.as_tensor(states, dtype=DTYPE), gen)
    return float(np.mean([env.step(s, a)[1] for s, a in zip(states, actions.numpy())]))


def test_criterion_7_grpo_improves_over_reference():
    t0 = time.perf_counter()
    env = _p1_env()
    cfg = TrainConfig(group_size=8, trajectory_length=5, ppo_init_steps=10_000, grpo_iterations=250, seed=0)
    ppo = ppo_init(env, cfg)
    result = grpo_train(env, cfg, reference=ppo.actor)
    steps = ppo.steps + cfg.grpo_iterations * cfg.group_size * cfg.trajectory_length
    ref_mean = _mean_policy_reward(env, result.reference, 2000, seed=99)
    late_max = float(np.mean([r["group_max"] for r in result.records[-10:]]))
    bandit = grpo_train(BanditEnv(target=0.7), TrainConfig(grpo_iterations=500, seed=0))
    acts, _, _ = bandit.policy.sample(torch.zeros(100_000, 1, dtype=DTYPE), torch.Generator().manual_seed(0))
    bandit_mean = float(acts.mean())
    elapsed = time.perf_counter() - t0
    ok = steps <= 20_000 and late_max > ref_mean and abs(bandit_mean - 0.7) <= 0.05 and elapsed < 1800
    report(7, ok, f"{elapsed:.0f}s; {steps} env steps; reference mean reward {ref_mean:.2f}, GRPO group-max "
                  f"(mean of last 10 iterations) {late_max:.2f}; bandit policy mean {bandit_mean:.4f} (optimum 0.7)")
    assert ok


# ------------------------------------------------------------ 8


def test_criterion_8_wmmse_soundness():
    rng = np.random.default_rng(8)
    worst_step, worst_power = 0.0, 0.0
    for i in range(200):
        k = int(rng.integers(1, 4))
        n = int(rng.integers(k, 5))
        H = 10 ** rng.uniform(-6, -4) * (rng.standard_normal((k, n)) + 1j * rng.standard_normal((k, n)))
        p = rng.uniform(0.1, 2)
        res = wmmse(H, p, 1e-12, multistart=bool(i % 2))
        worst_step = min(worst_step, float(np.min(np.diff(res.history), initial=0.0)))
        worst_power = max(worst_power, res.beams.power / p - 1)
        assert res.sum_rate == pytest.approx(sum_rate(H, res.beams, 1e-12))
    gaps = []
    for _ in range(5):
        H = 1e-5 * (rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2)))
        best = random_search_sum_rate(H, 1.0, 1e-12, 10**6, seed=int(rng.integers(2**31)))
        gaps.append(best - wmmse(H, 1.0, 1e-12).sum_rate)
    ok = worst_step >= -1e-9 and worst_power <= 1e-9 and max(gaps) <= 0.01
    report(8, ok, f"worst per-iteration sum-rate change {worst_step:.1e}; worst relative power excess "
                  f"{worst_power:.1e}; random-search minus WMMSE on K=N=2 {', '.join(f'{g:+.4f}' for g in gaps)}")
    assert ok


# ------------------------------------------------------------ 9


def test_criterion_9_radio_map_fidelity():
    t0 = time.perf_counter()
    params, tx = RadioParams(), (1.0, 1.0)
    rows, ok = [], True
    for name in ("rectangle5", "lshape"):
        lay = builtin_layout(name)
        model = path_loss_map(lay, params, tx, 0.05)
        oracle = path_loss_map(lay, params, tx, 0.05, max_order=3)
        again = path_loss_map(lay, params, tx, 0.05)
        m = map_metrics(model, oracle)
        gap = abs(average_rate(model, params, 1.0) - average_rate(oracle, params, 1.0))
        same = model.values.tobytes() == again.values.tobytes()
        ok &= m.rmse_db <= 6 and gap < 0.5 and same
        rows.append(f"{name}: MAE {m.mae_db:.2f} dB, RMSE {m.rmse_db:.2f} dB, rate gap {gap:.3f}, "
                    f"rerun identical {same}")
    elapsed = time.perf_counter() - t0
    ok &= elapsed < 600
    report(9, ok, f"{elapsed:.0f}s; " + " | ".join(rows))
    assert ok
