"""Line-delimited JSON training logs and checkpoints."""

from __future__ import annotations

import json
import time
from pathlib import Path

import torch

from indoorfas.rl.config import TrainConfig


class TrainingLog:
    """Collects per-iteration records and optionally appends them to a file.

    With ``timing=False`` the ``wall_clock`` field is written as null so that
    two runs with the same seed produce byte-identical logs.
    """

    def __init__(self, path: str | Path | None = None, timing: bool = True):
        self.path = Path(path) if path is not None else None
        self.timing = timing
        self.records: list[dict] = []
        self._t0 = time.perf_counter()
        if self.path is not None:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            self.path.write_text("")

    def append(self, record: dict) -> None:
        record = dict(record)
        record["wall_clock"] = round(time.perf_counter() - self._t0, 6) if self.timing else None
        self.records.append(record)
        if self.path is not None:
            with self.path.open("a") as fh:
                fh.write(json.dumps(record, sort_keys=True) + "\n")


def read_log(path: str | Path) -> list[dict]:
    return [json.loads(line) for line in Path(path).read_text().splitlines() if line.strip()]


def save_checkpoint(path: str | Path, policy, cfg: TrainConfig, critic=None, extra: dict | None = None) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {
        "policy": policy.state_dict(),
        "critic": critic.state_dict() if critic is not None else None,
        "config": cfg.to_dict(),
        "seed": cfg.seed,
        "extra": extra or {},
    }
    torch.save(payload, path)


def load_checkpoint(path: str | Path) -> dict:
    return torch.load(Path(path), weights_only=False)
