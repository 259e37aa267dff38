"""Train the scheduler on one scenario and compare it with every baseline.

    python3 demos/quickstart.py [scenario]
"""

import sys

import numpy as np

from infersched.agent import detect_convergence, train
from infersched.harness import compare, run_experiment
from infersched.policies import AgentPolicy, OraclePolicy, fit_comparators, fixed_policies
from infersched.profiles import load_shipped_world


def main(scenario_id="D3"):
    world = load_shipped_world("mi8pro.world")
    sc = world.scenario(scenario_id)
    q, history = train(world, sc, episodes=5000, rng=np.random.default_rng(0))
    print(f"{world.name}/{sc.id}: greedy reward settled at episode {detect_convergence(history)}")

    policies = [AgentPolicy(q), OraclePolicy(), *fixed_policies(world), *fit_comparators(world)]
    table = compare([run_experiment(world, sc, p, steps=300, seed=1) for p in policies])
    print(f"{'policy':<16}{'ppw_norm':>10}{'qos_viol':>10}{'pred_acc':>10}")
    for row in table.rows:
        print(f"{row['policy']:<16}{row['ppw_normalized']:>10.2f}"
              f"{row['qos_violation_ratio']:>10.3f}{row['prediction_accuracy']:>10.3f}")


if __name__ == "__main__":
    main(*sys.argv[1:])
