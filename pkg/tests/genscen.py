"""Randomized scenario generator for the acceptance convergence suite.

Every scenario is a pure function of its seed: bots join up front, build and
edit a shared diagram with plenty of cross-bot contention, fight over grabs,
stream movement and presence, and speak. Budgets stay inside the acceptance
envelope (<= 500 events, <= 10 000 movement packets).
"""

from __future__ import annotations

import base64
from random import Random

from modelsync.scenario import Scenario, parse_scenario
from modelsync.simulator import NetConfig

# worst one-way latency is 300 + 100 jitter; joins finish within one RTT
JOIN_SLACK_MS = 1100.0
GRANT_SLACK_MS = 900.0


def _pose(rng: Random) -> dict:
    return {
        "position": {"x": rng.uniform(-8, 8), "y": rng.uniform(0, 2), "z": rng.uniform(-8, 8)},
        "orientation": {"x": 0, "y": 0, "z": 0, "w": 1},
    }


def build_random_scenario(seed: int) -> tuple[Scenario, NetConfig]:
    rng = Random(seed * 7919 + 17)
    n_bots = rng.randint(2, 8)
    loss = (0.0, 0.1, 0.3)[seed % 3]
    latency = rng.uniform(0.0, 300.0)
    jitter = rng.uniform(0.0, 100.0)

    all_classes = [f"s{seed}-b{b}-c{i}" for b in range(n_bots) for i in range(rng.randint(2, 5))]
    bots = []
    for b in range(n_bots):
        script = [{"t": rng.uniform(0, 100), "op": "join"}]
        t = JOIN_SLACK_MS + rng.uniform(0, 200)
        own = [c for c in all_classes if c.startswith(f"s{seed}-b{b}-")]
        for alias in own:
            script.append({"t": t, "op": "submit", "event": {
                "op": "CreateClass", "id": alias, "name": f"C{alias[-6:]}".replace("-", "_"),
                "pose": _pose(rng),
            }})
            t += rng.uniform(20, 80)
        # edits race across bots: renames, member lists, connectors, deletes
        t += rng.uniform(100, 300)
        for _ in range(rng.randint(3, 12)):
            target = rng.choice(all_classes)
            roll = rng.random()
            if roll < 0.4:
                ev = {"op": "RenameClass", "id": target, "name": f"R{rng.randrange(1000)}"}
            elif roll < 0.6:
                ev = {"op": "SetAttributes", "id": target,
                      "lines": [f"+ a{i}: int" for i in range(rng.randrange(3))]}
            elif roll < 0.75:
                ev = {"op": "SetMethods", "id": target,
                      "lines": [f"+ m{i}()" for i in range(rng.randrange(3))]}
            elif roll < 0.9:
                ev = {"op": "CreateConnector", "id": f"s{seed}-b{b}-k{rng.randrange(10_000)}",
                      "kind": rng.choice(["Association", "Inheritance", "Composition",
                                          "Aggregation", "Dependency", "DirectedAssociation",
                                          "Realization"]),
                      "source": rng.choice(all_classes), "target": rng.choice(all_classes)}
            else:
                ev = {"op": "DeleteClass", "id": rng.choice(own)}
            script.append({"t": t, "op": "submit", "event": ev})
            t += rng.uniform(10, 60)
        # grab / drag / release, with contention on shared targets
        for _ in range(rng.randint(1, 2)):
            target = rng.choice(all_classes)
            t += rng.uniform(50, 200)
            script.append({"t": t, "op": "grab", "object": target})
            duration = rng.uniform(200, 700)
            rate = rng.choice([20, 30, 40])
            t += GRANT_SLACK_MS
            script.append({"t": t, "op": "move", "object": target, "to": _pose(rng),
                           "duration_ms": duration, "rate_hz": rate})
            t += duration + GRANT_SLACK_MS
            script.append({"t": t, "op": "release", "object": target, "pose": _pose(rng)})
        if rng.random() < 0.5:
            t += rng.uniform(10, 100)
            payload = base64.b64encode(bytes(rng.randrange(256) for _ in range(rng.randrange(4, 40)))).decode()
            script.append({"t": t, "op": "speak", "data_b64": payload})
        if rng.random() < 0.4:
            t += rng.uniform(10, 100)
            script.append({"t": t, "op": "teleport", "controller": {
                "position": {"x": rng.uniform(-5, 5), "y": rng.uniform(1.2, 2.2), "z": rng.uniform(-5, 5)},
                "orientation": {"x": 0.3826834, "y": 0, "z": 0, "w": 0.9238795},
            }})
        bots.append({
            "name": f"bot{b}",
            "presence_hz": rng.choice([0, 0, 5, 10]),
            "script": script,
        })
    scenario = parse_scenario({"name": f"random-{seed}", "bots": bots})
    net = NetConfig(base_latency_ms=latency, jitter_ms=jitter, movement_loss_prob=loss, seed=seed)
    return scenario, net
