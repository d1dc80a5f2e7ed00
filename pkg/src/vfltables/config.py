"""Run configuration: JSON file plus command-line overrides."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from .ring import FixedPointConfig
from .secmath import ApproxConfig
from .tables import BoostHyperparams
from .transport import ConfigurationError

KEYS = {
    "parties", "roles", "seeds", "task", "T", "D", "B", "lambda", "shrinkage", "precision_bits",
    "newton_iters", "newton_init_log2", "exp_log_rounds", "sigmoid_clamp", "reveal_predictions_to",
    "adaptive_newton_init", "truncation", "scheduler", "latency_s", "bandwidth_bps",
}


@dataclass
class RunConfig:
    parties: int = 4
    roles: dict[str, str] = field(default_factory=dict)
    seeds: dict = field(default_factory=lambda: {"dealer": 0, "split": 0})
    task: str = "classification"
    T: int = 10
    D: int = 3
    B: int = 32
    lam: float = 1.0
    shrinkage: float = 1.0
    precision_bits: int = 20
    newton_iters: int = 20
    newton_init_log2: int = 10
    exp_log_rounds: int = 2
    sigmoid_clamp: float = 4.0
    reveal_predictions_to: str = "ap"
    adaptive_newton_init: bool = True
    truncation: str = "exact"
    scheduler: str = "async"
    latency_s: float = 0.005
    bandwidth_bps: float = 100e6

    def __post_init__(self):
        self.validate()

    # -- derived objects ----------------------------------------------------
    @property
    def active_party(self) -> int:
        if not self.roles:
            return 1
        aps = [int(p) for p, r in self.roles.items() if str(r).upper() == "AP"]
        return aps[0]

    @property
    def dealer_seed(self) -> int:
        return int(self.seeds.get("dealer", 0))

    @property
    def party_seeds(self) -> list[int] | None:
        ps = self.seeds.get("parties")
        return None if ps is None else [int(s) for s in ps]

    def hyper(self) -> BoostHyperparams:
        return BoostHyperparams(lam=self.lam, trees=self.T, depth=self.D, buckets=self.B, task=self.task,
                                shrinkage=self.shrinkage)

    def approx(self) -> ApproxConfig:
        return ApproxConfig(self.newton_iters, self.newton_init_log2, self.exp_log_rounds, self.sigmoid_clamp)

    def fxp(self) -> FixedPointConfig:
        return FixedPointConfig(precision_bits=self.precision_bits)

    def paper_faithful(self) -> None:
        self.newton_init_log2 = 20
        self.sigmoid_clamp = 0.0
        self.adaptive_newton_init = False

    # -- validation and I/O ---------------------------------------------------
    def validate(self) -> None:
        def bad(msg):
            raise ConfigurationError(f"config: {msg}")

        if self.parties < 2:
            bad(f"'parties' must be at least 2 (got {self.parties})")
        if self.roles:
            ids = sorted(int(p) for p in self.roles)
            if ids != list(range(1, self.parties + 1)):
                bad(f"'roles' must name every party 1..{self.parties} exactly once (got {ids})")
            aps = [p for p, r in self.roles.items() if str(r).upper() == "AP"]
            others = {str(r).upper() for r in self.roles.values()} - {"AP", "PP"}
            if others:
                bad(f"'roles' values must be 'AP' or 'PP' (got {sorted(others)})")
            if len(aps) != 1:
                bad(f"exactly one party must have role 'AP' (got {len(aps)})")
        if self.reveal_predictions_to not in ("ap", "all"):
            bad("'reveal_predictions_to' must be 'ap' or 'all'")
        if self.truncation not in ("exact", "wrap"):
            bad("'truncation' must be 'exact' or 'wrap'")
        if self.scheduler not in ("async", "threads"):
            bad("'scheduler' must be 'async' or 'threads'")
        ps = self.seeds.get("parties") if isinstance(self.seeds, dict) else None
        if not isinstance(self.seeds, dict):
            bad("'seeds' must be an object like {\"dealer\": 0, \"split\": 0, \"parties\": [..]}")
        if ps is not None and len(ps) != self.parties:
            bad(f"'seeds.parties' needs {self.parties} entries (got {len(ps)})")
        try:
            self.hyper()
            self.approx()
            self.fxp()
        except (ValueError, ConfigurationError) as exc:
            bad(str(exc))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["lambda"] = d.pop("lam")
        return d

    @classmethod
    def from_dict(cls, raw: dict) -> "RunConfig":
        unknown = set(raw) - KEYS
        if unknown:
            raise ConfigurationError(f"config: unknown keys {sorted(unknown)}; allowed: {sorted(KEYS)}")
        kw = dict(raw)
        if "lambda" in kw:
            kw["lam"] = kw.pop("lambda")
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in kw.items() if k in names})

    @classmethod
    def load(cls, path) -> "RunConfig":
        try:
            raw = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"config {path}: invalid JSON ({exc})") from None
        if not isinstance(raw, dict):
            raise ConfigurationError(f"config {path}: top level must be an object")
        return cls.from_dict(raw)

    def dump(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")
