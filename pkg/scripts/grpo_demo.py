"""Objective math demo: advantages, clipping behavior, and a gradient check."""

import random

import numpy as np

from tabflow.grpo import (
    GroupRollout,
    GrpoConfig,
    group_advantages,
    grpo_objective,
    grpo_objective_grad,
)


def main() -> None:
    rng = random.Random(0)
    cfg = GrpoConfig()
    lengths = [rng.randrange(3, 9) for _ in range(4)]
    rollout = GroupRollout(
        rewards=[1.0, 0.4, 0.0, 0.9],
        token_logp_new=[[rng.uniform(-2, 0) for _ in range(n)] for n in lengths],
        token_logp_old=[[rng.uniform(-2, 0) for _ in range(n)] for n in lengths],
    )
    advantages = group_advantages(rollout.rewards)
    print("rewards:    ", rollout.rewards)
    print("advantages: ", np.round(advantages, 4).tolist())
    print("mean/std:   ", round(float(advantages.mean()), 12), round(float(advantages.std()), 6))
    objective = grpo_objective(rollout, advantages, cfg)
    print("objective J:", objective)

    # affine reward transform leaves J unchanged
    scaled = GroupRollout(
        rewards=[3.0 * r + 7.0 for r in rollout.rewards],
        token_logp_new=rollout.token_logp_new,
        token_logp_old=rollout.token_logp_old,
    )
    print("J after 3R+7:", grpo_objective(scaled, group_advantages(scaled.rewards), cfg))

    # finite-difference spot check of the analytic gradient
    grads = grpo_objective_grad(rollout, advantages, cfg)
    eps = 1e-6
    i, t = 1, 2
    up = [list(r) for r in rollout.token_logp_new]
    dn = [list(r) for r in rollout.token_logp_new]
    up[i][t] += eps
    dn[i][t] -= eps
    numeric = (
        grpo_objective(GroupRollout(rollout.rewards, up, rollout.token_logp_old), advantages, cfg)
        - grpo_objective(GroupRollout(rollout.rewards, dn, rollout.token_logp_old), advantages, cfg)
    ) / (2 * eps)
    print(f"dJ/dlogp[{i}][{t}]: analytic={grads[i][t]:.8f} numeric={numeric:.8f}")


if __name__ == "__main__":
    main()
