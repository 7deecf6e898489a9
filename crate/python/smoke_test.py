"""Smoke test for the `lgt` extension module.

Build and install first:  pip install ./crates/py --no-build-isolation
"""

import math
import tempfile
from pathlib import Path

import lgt


def close(a, b, tol=1e-9):
    return abs(a - b) <= tol * max(1.0, abs(b))


def main():
    # tree with two branches, one dying after layer 2
    tree = lgt.LayeredTree()
    tree.apply_layer([(1, 0), (2, 0)])
    tree.apply_layer([(3, 1), (4, 1), (5, 2)])
    assert tree.current_layer == 2 and tree.leaves() == [3, 4, 5]

    cfg = lgt.entropic_target(tree)
    masses = cfg.leaf_masses()
    assert close(sum(masses.values()), 1.0)
    # y(1) = 2^(1/2), y(2) = 1
    assert close(cfg.mass(1), math.sqrt(2) / (1 + math.sqrt(2)))
    assert close(masses[3], masses[4])

    biased, y = lgt.explicit_argmin(tree, gamma={5: 0.7})
    assert close(y[5], math.exp(-0.7))
    assert biased.mass(5) < cfg.mass(5)
    assert lgt.ot_cost(cfg, cfg) == 0.0
    plan = lgt.ot_coupling(cfg, biased)
    assert close(sum(m[2] * m[3] for m in plan), lgt.ot_cost(cfg, biased))

    removed = tree.apply_layer([(6, 3), (7, 4)])
    assert removed == [(5, 2)] and tree.deactivated_edges == 2

    star = lgt.Instance.star(3, 5)
    with tempfile.TemporaryDirectory() as d:
        path = Path(d) / "star.json"
        star.save(path)
        loaded = lgt.Instance.load(path)
    assert loaded.to_json() == star.to_json()

    trace = lgt.run(loaded, "entropic")
    assert len(trace.steps()) == 5
    assert trace.worst_slack() >= 0.0
    assert trace.final_ratio() <= lgt.ratio_ceiling(3)
    assert trace.report("csv").startswith("run_id,policy,instance,t,")

    mean, stderr, fractional = lgt.randomized_stats(loaded, "entropic", trials=400, seed=7)
    assert abs(mean - fractional) <= 4 * stderr + 1e-12

    chain = lgt.run_adversary("max_mass", 1, 10, "uniform")
    assert chain.final_ratio() == 1.0

    comb = lgt.Instance.comb(4, 60)
    ratios = {p: lgt.run(comb, p).final_ratio() for p in ("entropic", "dfs", "random_dfs", "uniform")}
    assert ratios["entropic"] < ratios["dfs"]

    checks = lgt.run_checks("identity", seed=42)
    assert checks and all(c["pass"] for c in checks)

    try:
        lgt.Instance.from_json('{"name": "x", "width": 1, "seed": null, "layers": [[[1, 0], [2, 0]]]}')
    except ValueError as e:
        assert "width" in str(e)
    else:
        raise AssertionError("width violation accepted")

    print("smoke test passed:", ", ".join(f"{p}={r:.3f}" for p, r in ratios.items()))


if __name__ == "__main__":
    main()
