"""Flat experiment configuration with validation and JSON round-trip."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass

GAMMA_GRID = (0.001, 0.01, 0.1, 1.0)
EPSILON_GRID = (0.1, 1.0, 10.0, 100.0)
K_GRID = (1, 5, 10, 20, 30, 40, 50)


@dataclass
class ExperimentConfig:
    # data: either a dataset file or a synthetic generation spec
    dataset_path: str | None = None
    n_graphs: int = 200
    p_min: int = 6
    p_max: int = 10
    feature_dim: int = 8
    noise_sd: float = 0.5
    test_fraction: float = 0.2
    # federation
    clients: int = 8
    sampled: int = 4
    rounds: int = 100
    local_epochs: int = 1
    parallel_clients: bool = True
    # encoder
    encoder: str = "gcn"
    layers: int = 2
    hidden: int = 64
    tag_hops: int = 3
    # optimization
    lr: float = 0.01
    # privacy
    eps0: float = 1.0
    eps1: float = 1.0
    # contrastive objective
    gamma: float = 0.1
    tau: float = 1.0
    k: int = 10
    cap_n: int = 100
    # evaluation / bookkeeping
    eval_mode: str = "perturbed"
    seed: int = 0
    out_dir: str = "out"

    def validate(self) -> tuple[list[str], list[str]]:
        """Return (errors, warnings); an experiment may run only with no errors."""
        errors: list[str] = []
        warnings: list[str] = []
        if self.dataset_path is None:
            if self.n_graphs < 2:
                errors.append(f"n_graphs: must be >= 2, got {self.n_graphs}")
            if self.p_max < self.p_min:
                errors.append(f"p_max: empty node-count range ({self.p_min}, {self.p_max})")
            if self.p_min < 3:
                errors.append(f"p_min: must be >= 3, got {self.p_min}")
            if self.feature_dim < 1:
                errors.append(f"feature_dim: must be >= 1, got {self.feature_dim}")
            if self.noise_sd < 0:
                errors.append(f"noise_sd: must be >= 0, got {self.noise_sd}")
        if not (0.0 <= self.test_fraction < 1.0):
            errors.append(f"test_fraction: must be in [0, 1), got {self.test_fraction}")
        if self.clients < 1:
            errors.append(f"clients: must be >= 1, got {self.clients}")
        if not (1 <= self.sampled <= self.clients):
            errors.append(f"sampled: must satisfy 1 <= sampled <= clients, got {self.sampled}")
        if self.rounds < 0:
            errors.append(f"rounds: must be >= 0, got {self.rounds}")
        if self.local_epochs < 1:
            errors.append(f"local_epochs: must be >= 1, got {self.local_epochs}")
        if self.encoder not in ("gcn", "tag"):
            errors.append(f"encoder: must be 'gcn' or 'tag', got {self.encoder!r}")
        if self.layers < 1:
            errors.append(f"layers: must be >= 1, got {self.layers}")
        if self.hidden < 1:
            errors.append(f"hidden: must be >= 1, got {self.hidden}")
        if self.encoder == "tag" and self.tag_hops < 1:
            errors.append(f"tag_hops: must be >= 1, got {self.tag_hops}")
        if self.lr < 0:
            errors.append(f"lr: must be >= 0, got {self.lr}")
        if self.eps0 <= 0:
            errors.append(f"eps0: must be > 0, got {self.eps0}")
        if self.eps1 <= 0:
            errors.append(f"eps1: must be > 0, got {self.eps1}")
        if self.gamma < 0:
            errors.append(f"gamma: must be >= 0, got {self.gamma}")
        if self.tau <= 0:
            errors.append(f"tau: must be > 0, got {self.tau}")
        if self.k < 0:
            errors.append(f"k: must be >= 0, got {self.k}")
        if self.cap_n < 1:
            errors.append(f"cap_n: must be >= 1, got {self.cap_n}")
        if self.k >= self.cap_n:
            errors.append(f"k: must be smaller than cap_n, got k={self.k}, cap_n={self.cap_n}")
        if self.gamma > 0 and self.k < 1:
            errors.append("k: must be >= 1 when gamma > 0 (contrastive loss needs negatives)")
        if self.eval_mode not in ("clean", "perturbed"):
            errors.append(f"eval_mode: must be 'clean' or 'perturbed', got {self.eval_mode!r}")
        if self.seed < 0:
            errors.append(f"seed: must be >= 0, got {self.seed}")
        # grids are guidance, not constraints
        if self.gamma > 0 and self.gamma not in GAMMA_GRID:
            warnings.append(f"gamma={self.gamma} is outside the usual grid {list(GAMMA_GRID)}")
        for name, value in (("eps0", self.eps0), ("eps1", self.eps1)):
            if value > 0 and value not in EPSILON_GRID:
                warnings.append(f"{name}={value} is outside the usual grid {list(EPSILON_GRID)}")
        return errors, warnings

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config fields: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def from_file(cls, path) -> "ExperimentConfig":
        with open(path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
        if not isinstance(data, dict):
            raise ValueError("config file must hold a JSON object")
        # accept a previous run's summary.json, which embeds its resolved config
        if "config" in data and isinstance(data["config"], dict):
            data = data["config"]
        return cls.from_dict(data)

    def with_overrides(self, **overrides) -> "ExperimentConfig":
        data = self.to_dict()
        for key, value in overrides.items():
            if value is None:
                continue
            if key not in data:
                raise ValueError(f"unknown config field {key!r}")
            data[key] = value
        return ExperimentConfig.from_dict(data)
