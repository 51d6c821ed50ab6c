"""Experiment configuration: schema, validation, TOML/JSON round-trip and object builders.

Schema (TOML shown; JSON uses the same nesting)::

    experiment = "rate-euler"      # simulate | rate-euler | rate-chaos | verify-lemmas | predict-rate
    seed = 42                      # mandatory, 0 <= seed < 2**64
    workers = 1                    # integer or "auto"
    replications = 64
    out = "out"

    [model]   kind = "intensity" | "lipschitz", plus the model parameters
    [levy]    family = "stable" | "tempered" | "cpoisson", plus parameters and z_cut
    [init]    dist = "point" | "uniform" | "exponential" | "lognormal", params = [...], beta
    [grid]    T, n, n_list, n_ref
    [population]  N, N_list, N_ref
    [simulate]    mode = "system" | "copies", record = false
    [rate]        gamma, eta, rho, alpha_nu, beta_nu, delta_slack, stable
    [lemmas]      deltas, epsilons, n_random, eta, alpha_prime
"""

from __future__ import annotations

import copy
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path

import tomli_w

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .grid import is_power_of_two
from .levy import CompoundPoisson, JumpLaw, StablePositive, TemperedStable
from .model import InitialLaw, builtin_intensity_model, check_admissible, builtin_lipschitz_model, positivity_extension

EXPERIMENTS = ("simulate", "rate-euler", "rate-chaos", "verify-lemmas", "predict-rate")

MODEL_KEYS = {
    "intensity": {"kappa": 1.0, "k": 0.5, "sigma1": 0.5, "sigma2": 0.3, "r": 2.0, "q": 1.5,
                  "positive_part": False, "interaction": "mean"},
    "lipschitz": {"a": 0.0, "k": 0.5, "s1": 1.0, "s2": 1.0, "mean_weight": 0.5, "interaction": "mean"},
}
LEVY_KEYS = {
    "stable": {"alpha": 1.5, "scale": 1.0, "z_cut": 1.0},
    "tempered": {"alpha": 1.5, "scale": 1.0, "theta": 1.0, "z_cut": 1.0},
    "cpoisson": {"rate": 1.0, "jump_law": "exponential", "jump_params": [1.0], "z_cut": 1.0},
}
INIT_KEYS = {"dist": "exponential", "params": [1.0], "beta": 2.0}
GRID_KEYS = {"T", "n", "n_list", "n_ref"}
POP_KEYS = {"N", "N_list", "N_ref"}
SIM_KEYS = {"mode": "system", "record": False}
RATE_KEYS = {"gamma", "eta", "rho", "alpha_nu", "beta_nu", "delta_slack", "stable"}
LEMMA_KEYS = {"deltas": [1.5, 2.0, 10.0], "epsilons": [0.5, 0.1, 0.01], "n_random": 200,
              "eta": 0.5, "alpha_prime": None}
TOP_KEYS = {"experiment", "seed", "workers", "replications", "out", "model", "levy", "init", "grid",
            "population", "simulate", "rate", "lemmas"}


class ConfigError(ValueError):
    """Invalid configuration; the message starts with the offending key."""

    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


def _section(raw: dict, name: str, defaults: dict | None = None, allowed: set | None = None) -> dict:
    sec = raw.get(name, {})
    if not isinstance(sec, dict):
        raise ConfigError(name, "must be a table")
    keys = set(defaults or ()) | set(allowed or ())
    for k in sec:
        if k not in keys:
            raise ConfigError(f"{name}.{k}", "unknown key")
    out = {k: v for k, v in (defaults or {}).items() if v is not None}
    out.update(copy.deepcopy(sec))
    return out


def _kinded(raw: dict, name: str, tag: str, table: dict, default_kind: str) -> dict:
    sec = raw.get(name, {})
    if not isinstance(sec, dict):
        raise ConfigError(name, "must be a table")
    kind = sec.get(tag, default_kind)
    if kind not in table:
        raise ConfigError(f"{name}.{tag}", f"must be one of {sorted(table)}, got {kind!r}")
    out = _section({name: {k: v for k, v in sec.items() if k != tag}}, name, table[kind])
    return {tag: kind, **out}


def _sorted_list(value, key: str, dyadic: bool) -> list[int]:
    if not isinstance(value, list) or not value:
        raise ConfigError(key, "must be a non-empty list")
    vals = [int(v) for v in value]
    if vals != sorted(vals) or len(set(vals)) != len(vals):
        raise ConfigError(key, f"must be strictly increasing, got {vals}")
    if any(v < 1 for v in vals):
        raise ConfigError(key, "entries must be positive")
    if dyadic and not all(is_power_of_two(v) for v in vals):
        raise ConfigError(key, f"entries must be powers of two, got {vals}")
    return vals


@dataclass
class ExperimentConfig:
    experiment: str
    seed: int
    workers: int | str = 1
    replications: int = 1
    out: str = "out"
    model: dict = field(default_factory=dict)
    levy: dict = field(default_factory=dict)
    init: dict = field(default_factory=dict)
    grid: dict = field(default_factory=dict)
    population: dict = field(default_factory=dict)
    simulate: dict = field(default_factory=dict)
    rate: dict = field(default_factory=dict)
    lemmas: dict = field(default_factory=dict)

    # construction

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        for k in raw:
            if k not in TOP_KEYS:
                raise ConfigError(k, "unknown key")
        exp = raw.get("experiment")
        if exp not in EXPERIMENTS:
            raise ConfigError("experiment", f"must be one of {list(EXPERIMENTS)}, got {exp!r}")
        if "seed" not in raw:
            raise ConfigError("seed", "is mandatory")
        seed = raw["seed"]
        if isinstance(seed, bool) or not isinstance(seed, int) or not 0 <= seed < 2**64:
            raise ConfigError("seed", f"must be an integer in [0, 2^64), got {seed!r}")
        workers = raw.get("workers", 1)
        if workers != "auto" and (isinstance(workers, bool) or not isinstance(workers, int) or workers < 1):
            raise ConfigError("workers", f"must be a positive integer or 'auto', got {workers!r}")
        cfg = cls(
            experiment=exp,
            seed=seed,
            workers=workers,
            replications=raw.get("replications", 1),
            out=str(raw.get("out", "out")),
            model=_kinded(raw, "model", "kind", MODEL_KEYS, "intensity"),
            levy=_kinded(raw, "levy", "family", LEVY_KEYS, "stable"),
            init=_section(raw, "init", INIT_KEYS),
            grid=_section(raw, "grid", allowed=GRID_KEYS),
            population=_section(raw, "population", allowed=POP_KEYS),
            simulate=_section(raw, "simulate", SIM_KEYS) if exp == "simulate" else {},
            rate=_section(raw, "rate", allowed=RATE_KEYS),
            lemmas=_section(raw, "lemmas", LEMMA_KEYS) if exp == "verify-lemmas" else {},
        )
        cfg.validate()
        return cfg

    def validate(self) -> None:
        r = self.replications
        if isinstance(r, bool) or not isinstance(r, int) or r < 1:
            raise ConfigError("replications", f"must be an integer >= 1, got {r!r}")
        g, p = self.grid, self.population
        if self.experiment in ("simulate", "rate-euler", "rate-chaos"):
            if not float(g.get("T", 1.0)) > 0:
                raise ConfigError("grid.T", "must be positive")
            for name, builder in (("model", self.build_model), ("levy", self.build_levy), ("init", self.build_init)):
                try:
                    builder()
                except ConfigError:
                    raise
                except (TypeError, ValueError) as exc:
                    raise ConfigError(name, str(exc)) from None
            try:
                check_admissible(self.build_model(), self.build_levy())
            except ValueError as exc:
                raise ConfigError("model", str(exc)) from None
        if self.experiment in ("simulate", "rate-chaos"):
            if "n" not in g or not is_power_of_two(int(g["n"])):
                raise ConfigError("grid.n", f"must be a power of two, got {g.get('n')!r}")
        if self.experiment == "simulate":
            if int(p.get("N", 0)) < 1:
                raise ConfigError("population.N", "must be >= 1")
            if self.simulate["mode"] not in ("system", "copies"):
                raise ConfigError("simulate.mode", "must be 'system' or 'copies'")
        if self.experiment == "rate-euler":
            n_list = _sorted_list(g.get("n_list"), "grid.n_list", dyadic=True)
            n_ref = int(g.get("n_ref", 0))
            if not is_power_of_two(n_ref) or n_ref < 8 * n_list[-1]:
                raise ConfigError("grid.n_ref", f"must be a power of two >= 8 * max(n_list) = {8 * n_list[-1]}")
            if int(p.get("N", 0)) < 1:
                raise ConfigError("population.N", "must be >= 1")
        if self.experiment == "rate-chaos":
            N_list = _sorted_list(p.get("N_list"), "population.N_list", dyadic=False)
            if int(p.get("N_ref", 0)) < N_list[-1]:
                raise ConfigError("population.N_ref", f"must be >= max(N_list) = {N_list[-1]}")
        if self.experiment == "predict-rate" and self.rate:
            missing = {"gamma", "eta", "rho", "alpha_nu", "beta_nu"} - set(self.rate)
            if missing:
                raise ConfigError("rate", f"missing keys {sorted(missing)}")

    # serialization

    def to_dict(self) -> dict:
        d = {"experiment": self.experiment, "seed": self.seed, "workers": self.workers,
             "replications": self.replications, "out": self.out}
        for name in ("model", "levy", "init", "grid", "population", "simulate", "rate", "lemmas"):
            sec = getattr(self, name)
            if sec:
                d[name] = copy.deepcopy(sec)
        return d

    def dumps(self, fmt: str = "toml") -> str:
        if fmt == "json":
            return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"
        return tomli_w.dumps(self.to_dict())

    @classmethod
    def loads(cls, text: str, fmt: str = "toml") -> "ExperimentConfig":
        try:
            raw = json.loads(text) if fmt == "json" else tomllib.loads(text)
        except (json.JSONDecodeError, tomllib.TOMLDecodeError) as exc:
            raise ConfigError("<file>", f"cannot parse {fmt}: {exc}") from None
        return cls.from_dict(raw)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        path = Path(path)
        fmt = "json" if path.suffix.lower() == ".json" else "toml"
        return cls.loads(path.read_text(), fmt)

    # builders

    def build_model(self):
        m = dict(self.model)
        kind = m.pop("kind")
        if kind == "intensity":
            positive = m.pop("positive_part")
            model = builtin_intensity_model(**m)
            return positivity_extension(model) if positive else model
        return builtin_lipschitz_model(**m)

    def build_levy(self):
        lv = dict(self.levy)
        fam = lv.pop("family")
        lv.pop("z_cut")
        if fam == "stable":
            return StablePositive(float(lv["alpha"]), float(lv["scale"]))
        if fam == "tempered":
            return TemperedStable(float(lv["alpha"]), float(lv["scale"]), float(lv["theta"]))
        return CompoundPoisson(float(lv["rate"]), JumpLaw(lv["jump_law"], tuple(lv["jump_params"])))

    def build_init(self) -> InitialLaw:
        i = self.init
        return InitialLaw(i["dist"], tuple(i["params"]), float(i["beta"]))

    @property
    def z_cut(self) -> float:
        return float(self.levy["z_cut"])
