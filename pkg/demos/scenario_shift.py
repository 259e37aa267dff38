"""Show how the best execution target for each NN moves as the runtime
environment changes: a CPU co-runner, memory pressure, weak Wi-Fi."""

from infersched.policies import oracle_decide
from infersched.profiles import load_shipped_world
from infersched.scenarios import step_scenario


def main():
    world = load_shipped_world("mi8pro.world")
    static = [sc for sc in world.scenarios if sc.is_static]
    print(f"{'nn':<18}" + "".join(f"{sc.id:>16}" for sc in static))
    for nn in world.nns:
        labels = [oracle_decide(world, nn, step_scenario(sc, 0)).label for sc in static]
        print(f"{nn.name:<18}" + "".join(f"{x:>16}" for x in labels))


if __name__ == "__main__":
    main()
