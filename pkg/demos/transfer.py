"""Reuse a Q-table trained on one phone to warm-start training on another.

Compares the convergence episode of paired scratch and warm-started runs.
"""

from statistics import median

import numpy as np

from infersched.agent import detect_convergence, train, transfer_init
from infersched.policies import reward_model
from infersched.profiles import load_shipped_world

EPISODES = 200


def main(seeds=10):
    source_world = load_shipped_world("mi8pro.world")
    target = load_shipped_world("s10e.world")
    source, _ = train(source_world, source_world.scenario("S1"), episodes=10_000, rng=np.random.default_rng(0))
    actions = reward_model(target).actions

    scratch, warm = [], []
    for seed in range(seeds):
        _, h = train(target, target.scenario("S1"), episodes=EPISODES, rng=np.random.default_rng(seed))
        scratch.append(detect_convergence(h) or EPISODES)
        init = transfer_init(source, actions, np.random.default_rng([seed, 1]))
        _, h = train(target, target.scenario("S1"), episodes=EPISODES, rng=np.random.default_rng(seed), init=init)
        warm.append(detect_convergence(h) or EPISODES)
        print(f"seed {seed}: scratch {scratch[-1]:>4}  transfer {warm[-1]:>4}")
    a, b = median(scratch), median(warm)
    print(f"median: scratch {a}, transfer {b} ({100 * (a - b) / a:.1f}% fewer episodes)")


if __name__ == "__main__":
    main()
