"""File formats: instance JSON and the CSV series written by the harness.

Floats are written in their shortest round-trip form, so every value reads back exactly.
All writes go through a temporary file and an atomic rename.
"""

from __future__ import annotations

import csv
import io
import json
import os
import tempfile
from pathlib import Path

import numpy as np

from .averaging import AveragedArmMdp
from .model import ArmSpec, LatentChain, MarbleInstance

INDICES_HEADER = ("k", "arm", "state", "lambda")
ORACLE_HEADER = ("arm", "state", "whittle_index")
QNORM_HEADER = ("k", "qnorm")
REWARDS_HEADER = ("seed", "step", "mean_reward")
RUN_REWARDS_HEADER = ("policy", "seed", "step", "mean_reward")


def atomic_write_text(path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _arm_to_dict(arm: ArmSpec) -> dict:
    return {"kernels": arm.kernels.tolist(), "rewards": arm.rewards.tolist()}


def _arm_from_dict(d: dict) -> ArmSpec:
    return ArmSpec(np.array(d["kernels"], dtype=float), np.array(d["rewards"], dtype=float))


def instance_to_dict(instance: MarbleInstance) -> dict:
    out = {
        "discount": instance.discount,
        "budget": instance.budget,
        "chain": {"transition": instance.chain.transition.tolist()},
    }
    if instance.is_homogeneous:
        out["homogeneous"] = {"count": instance.num_arms, "arm": _arm_to_dict(instance.arms[0])}
    else:
        out["arms"] = [_arm_to_dict(arm) for arm in instance.arms]
    return out


def instance_from_dict(d: dict) -> MarbleInstance:
    if "homogeneous" in d:
        arm = _arm_from_dict(d["homogeneous"]["arm"])
        arms = [arm] * int(d["homogeneous"]["count"])
    else:
        arms = [_arm_from_dict(a) for a in d["arms"]]
    return MarbleInstance(
        arms=arms,
        budget=int(d["budget"]),
        chain=LatentChain(np.array(d["chain"]["transition"], dtype=float)),
        discount=float(d["discount"]),
    )


def dumps_instance(instance: MarbleInstance) -> str:
    return json.dumps(instance_to_dict(instance), indent=1) + "\n"


def save_instance(instance: MarbleInstance, path) -> None:
    atomic_write_text(path, dumps_instance(instance))


def load_instance(path) -> MarbleInstance:
    with open(path) as fh:
        return instance_from_dict(json.load(fh))


def averaged_to_dict(mdp: AveragedArmMdp) -> dict:
    """An averaged arm in the single-mode ``ArmSpec`` layout."""
    return {"kernels": [mdp.kernel.tolist()], "rewards": [mdp.reward.tolist()]}


def _csv_text(header, rows) -> str:
    # str() of a Python float is its shortest round-trip form
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def write_csv(path, header, rows) -> None:
    atomic_write_text(path, _csv_text(header, rows))


def read_csv(path) -> tuple[tuple[str, ...], list[list[str]]]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = tuple(next(reader))
        return header, list(reader)


def index_rows(snapshot_k, indices, num_states):
    """Rows ``(k, arm, state, lambda)`` over real states only."""
    for k, table in zip(snapshot_k, indices):
        for i, s_count in enumerate(num_states):
            for z in range(int(s_count)):
                yield int(k), i, z, float(table[i, z])


def table_rows(table, num_states):
    for i, s_count in enumerate(num_states):
        for z in range(int(s_count)):
            yield i, z, float(table[i, z])


def read_index_table(path, num_arms: int | None = None, num_states: int | None = None):
    """Index table ``(N, S)`` from an oracle or learned-index CSV.

    For learned-index files the rows of the largest ``k`` are used.
    """
    header, rows = read_csv(path)
    if header == INDICES_HEADER:
        last = max(int(r[0]) for r in rows)
        rows = [r[1:] for r in rows if int(r[0]) == last]
    elif header != ORACLE_HEADER:
        raise ValueError(f"{path}: unrecognized index header {header}")
    arms = [int(r[0]) for r in rows]
    states = [int(r[1]) for r in rows]
    n = num_arms if num_arms is not None else max(arms) + 1
    s = num_states if num_states is not None else max(states) + 1
    table = np.zeros((n, s))
    for i, z, r in zip(arms, states, rows):
        table[i, z] = float(r[2])
    return table
