from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass


@dataclass(frozen=True)
class Tolerances:
    """All numerical thresholds in one record; reports embed it verbatim."""

    h_fd: float = 1e-5
    eps_pd: float = 1e-10
    eps_frame: float = 1e-12
    tol_speed: float = 1e-6
    tol_curv: float = 1e-4
    tol_orth: float = 1e-6
    tol_fp: float = 1e-4
    eps_ridge: float = 1e-12
    tol_trivial: float = 1e-8
    tol_split: float = 1e-6
    tol_rank: float = 1e-4
    cluster_gap: float = 1e-8
    eps_v: float = 1e-6
    tol_cone: float = 1e-4
    step: float = 1e-3

    def replace(self, **changes) -> "Tolerances":
        unknown = set(changes) - {f.name for f in dataclasses.fields(self)}
        if unknown:
            raise KeyError(f"unknown tolerance(s): {sorted(unknown)}")
        return dataclasses.replace(self, **{k: float(v) for k, v in changes.items()})

    def as_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_file(cls, path) -> "Tolerances":
        with open(path) as fh:
            return cls().replace(**json.load(fh))


DEFAULT = Tolerances()
