"""A trained barrier/controller pair and its JSON file format."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .controller import Controller
from .dynamics import ControlSystem, make_system
from .neural import Mlp

SCHEMA_VERSION = 1


@dataclass(frozen=True)
class CbfModel:
    system: str
    dt: float
    h_net: Mlp
    controller: Controller
    meta: dict = field(default_factory=dict)

    def make_system(self) -> ControlSystem:
        return make_system(self.system, dt=self.dt)

    def h(self, X: np.ndarray) -> np.ndarray:
        return self.h_net.forward(np.atleast_2d(X))[:, 0]

    def params(self) -> np.ndarray:
        return np.concatenate([self.h_net.to_vec(), self.controller.net.to_vec()])

    def with_params(self, theta: np.ndarray) -> "CbfModel":
        nh = self.h_net.n_params
        return CbfModel(
            self.system,
            self.dt,
            self.h_net.from_vec(theta[:nh]),
            self.controller.with_net(self.controller.net.from_vec(theta[nh:])),
            dict(self.meta),
        )

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "system": self.system,
            "dt": self.dt,
            "h_net": self.h_net.to_dict(),
            "controller": self.controller.to_dict(),
            "meta": self.meta,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CbfModel":
        if d.get("schema_version") != SCHEMA_VERSION:
            raise ValueError(f"unsupported model schema_version {d.get('schema_version')!r}")
        return cls(
            d["system"],
            float(d["dt"]),
            Mlp.from_dict(d["h_net"]),
            Controller.from_dict(d["controller"]),
            d.get("meta", {}),
        )


def dump_json(obj, path) -> None:
    # json emits float repr, which round-trips all 17 significant digits
    Path(path).write_text(json.dumps(obj, indent=1, sort_keys=True) + "\n")


def save_model(model: CbfModel, path) -> None:
    dump_json(model.to_dict(), path)


def load_model(path) -> CbfModel:
    return CbfModel.from_dict(json.loads(Path(path).read_text()))
