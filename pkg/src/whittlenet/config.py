"""Experiment configuration: a YAML document mapped onto frozen dataclasses.

Every section is optional; an empty document yields the default setup
(20 users, threshold 0.6, buffers of 100, Lyapunov theta = 200).  Unknown
keys are errors, reported with the dotted path to the offending field.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import yaml

from .policies import AlohaPolicy, IdlePolicy, LyapunovPolicy, MWSPolicy, WhittlePolicy
from .sim import ARRIVAL_REGIMES, PSI_REGIMES
from .whittle import SolveConfig


class ConfigError(ValueError):
    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path


@dataclass(frozen=True)
class TopologyConfig:
    n_users: int = 20
    d_threshold: float = 0.6
    seed: int | None = None
    positions: tuple | None = None


@dataclass(frozen=True)
class UsersConfig:
    buffer_cap: int = 100
    holding_cost: float = 20.0
    energy_linear: float = 1.0
    energy_quadratic: float = 0.0
    arrival_regime: str = "default"
    psi_regime: str = "restricted"
    integer_arrival_means: bool = False
    # baselines keep the restricted caps even in the unrestricted regime
    baselines_restricted: bool = True
    explicit: tuple | None = None


@dataclass(frozen=True)
class PolicySpec:
    kind: str
    model: str | None = None
    d_thresh_computation: float | None = None
    p: float | None = None
    theta: float | None = None
    name: str | None = None


@dataclass(frozen=True)
class SimSection:
    horizon: int = 11_000
    warmup: int = 1_000
    seeds: tuple = (0,)
    collision_energy: bool = True


@dataclass(frozen=True)
class OutputConfig:
    dir: str = "out"
    trace: bool = False


@dataclass(frozen=True)
class ExperimentConfig:
    experiment_id: str = "default"
    topology: TopologyConfig = field(default_factory=TopologyConfig)
    users: UsersConfig = field(default_factory=UsersConfig)
    policies: tuple = (
        PolicySpec("whittle", model="clique"),
        PolicySpec("whittle", model="graphical"),
        PolicySpec("aloha", p=0.5),
        PolicySpec("mws"),
        PolicySpec("lyapunov", theta=200.0),
    )
    solve: SolveConfig = field(default_factory=lambda: SolveConfig(degenerate="limit"))
    sim: SimSection = field(default_factory=SimSection)
    output: OutputConfig = field(default_factory=OutputConfig)

    def build_policies(self) -> list:
        return [build_policy(entry, self.solve) for entry in self.policies]


POLICY_KINDS = ("whittle", "aloha", "mws", "lyapunov", "idle")
_USER_FIELDS = ("holding_cost", "buffer_cap", "tx_cap", "arrival_mean",
                "energy_linear", "energy_quadratic")


def build_policy(entry: PolicySpec, solve: SolveConfig):
    kw = {"name": entry.name} if entry.name else {}
    if entry.kind == "whittle":
        return WhittlePolicy(entry.model or "clique", entry.d_thresh_computation, solve, **kw)
    if entry.kind == "aloha":
        return AlohaPolicy(0.5 if entry.p is None else entry.p, **kw)
    if entry.kind == "mws":
        return MWSPolicy(**kw)
    if entry.kind == "lyapunov":
        return LyapunovPolicy(200.0 if entry.theta is None else entry.theta, **kw)
    if entry.kind == "idle":
        return IdlePolicy(**kw)
    raise ConfigError("policies", f"unknown policy kind {entry.kind!r}")


# ------------------------------------------------------------------ parsing


def _section(doc, path, cls, converters=None):
    if doc is None:
        doc = {}
    if not isinstance(doc, dict):
        raise ConfigError(path, "expected a mapping")
    names = {f.name for f in dataclasses.fields(cls)}
    for key in doc:
        if key not in names:
            raise ConfigError(f"{path}.{key}" if path else str(key), "unknown key")
    kwargs = {}
    for key, value in doc.items():
        conv = (converters or {}).get(key)
        kwargs[key] = conv(value, f"{path}.{key}" if path else key) if conv else value
    return kwargs


def _num(kind, *, lo=None, hi=None, lo_open=False, optional=False):
    def conv(value, path):
        if value is None and optional:
            return None
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(path, f"expected a number, got {value!r}")
        if kind is int:
            if float(value) != int(value):
                raise ConfigError(path, f"expected an integer, got {value!r}")
            value = int(value)
        else:
            value = float(value)
        if lo is not None and (value <= lo if lo_open else value < lo):
            raise ConfigError(path, f"must be {'>' if lo_open else '>='} {lo}, got {value!r}")
        if hi is not None and value > hi:
            raise ConfigError(path, f"must be <= {hi}, got {value!r}")
        return value
    return conv


def _choice(options):
    def conv(value, path):
        if value not in options:
            raise ConfigError(path, f"must be one of {sorted(options)}, got {value!r}")
        return value
    return conv


def _flag(value, path):
    if not isinstance(value, bool):
        raise ConfigError(path, f"expected true/false, got {value!r}")
    return value


def _string(value, path):
    if not isinstance(value, str) or not value:
        raise ConfigError(path, f"expected a nonempty string, got {value!r}")
    return value


def _positions(value, path):
    if value is None:
        return None
    if not isinstance(value, list) or not value:
        raise ConfigError(path, "expected a nonempty list of [x, y] pairs")
    out = []
    for k, pt in enumerate(value):
        if not (isinstance(pt, list) and len(pt) == 2):
            raise ConfigError(f"{path}[{k}]", "expected [x, y]")
        x = _num(float, lo=0.0, hi=1.0)(pt[0], f"{path}[{k}][0]")
        y = _num(float, lo=0.0, hi=1.0)(pt[1], f"{path}[{k}][1]")
        out.append((x, y))
    return tuple(out)


def _explicit_users(value, path):
    if value is None:
        return None
    if not isinstance(value, list) or not value:
        raise ConfigError(path, "expected a nonempty list of user mappings")
    out = []
    for k, u in enumerate(value):
        p = f"{path}[{k}]"
        if not isinstance(u, dict):
            raise ConfigError(p, "expected a mapping")
        for key in u:
            if key not in _USER_FIELDS:
                raise ConfigError(f"{p}.{key}", "unknown key")
        checked = {
            "holding_cost": _num(float, lo=0.0),
            "buffer_cap": _num(int, lo=1),
            "tx_cap": _num(int, lo=1, optional=True),
            "arrival_mean": _num(float, lo=0.0),
            "energy_linear": _num(float, lo=0.0),
            "energy_quadratic": _num(float, lo=0.0),
        }
        out.append(tuple(sorted((key, checked[key](v, f"{p}.{key}")) for key, v in u.items())))
    return tuple(out)


def _seeds(value, path):
    if not isinstance(value, list) or not value:
        raise ConfigError(path, "expected a nonempty list of integer seeds")
    return tuple(_num(int, lo=0)(s, f"{path}[{k}]") for k, s in enumerate(value))


def _policy(doc, path):
    if not isinstance(doc, dict):
        raise ConfigError(path, "expected a mapping")
    kw = _section(doc, path, PolicySpec, {
        "kind": _choice(POLICY_KINDS),
        "model": _choice(("clique", "graphical")),
        "d_thresh_computation": _num(float, lo=0.0, lo_open=True, optional=True),
        "p": _num(float, lo=0.0, hi=1.0),
        "theta": _num(float, lo=0.0),
        "name": _string,
    })
    if "kind" not in kw:
        raise ConfigError(f"{path}.kind", "missing")
    entry = PolicySpec(**kw)
    allowed = {
        "whittle": {"model", "d_thresh_computation"},
        "aloha": {"p"},
        "lyapunov": {"theta"},
        "mws": set(),
        "idle": set(),
    }[entry.kind]
    for key in ("model", "d_thresh_computation", "p", "theta"):
        if getattr(entry, key) is not None and key not in allowed:
            raise ConfigError(f"{path}.{key}", f"not valid for policy kind {entry.kind!r}")
    if entry.kind == "whittle" and entry.model is None:
        entry = dataclasses.replace(entry, model="clique")
    return entry


def parse_config(document) -> ExperimentConfig:
    """Validate a YAML string (or an already-loaded mapping)."""
    if isinstance(document, str):
        try:
            doc = yaml.safe_load(document)
        except yaml.YAMLError as exc:
            raise ConfigError("", f"malformed YAML: {exc}") from None
    else:
        doc = document
    doc = doc or {}
    top = _section(doc, "", ExperimentConfig, {"experiment_id": _string})

    topo = TopologyConfig(**_section(top.get("topology"), "topology", TopologyConfig, {
        "n_users": _num(int, lo=1),
        "d_threshold": _num(float, lo=0.0, lo_open=True),
        "seed": _num(int, lo=0, optional=True),
        "positions": _positions,
    }))
    if topo.positions is not None and len(topo.positions) != topo.n_users:
        raise ConfigError("topology.positions", f"expected {topo.n_users} points")

    users = UsersConfig(**_section(top.get("users"), "users", UsersConfig, {
        "buffer_cap": _num(int, lo=1),
        "holding_cost": _num(float, lo=0.0),
        "energy_linear": _num(float, lo=0.0),
        "energy_quadratic": _num(float, lo=0.0),
        "arrival_regime": _choice(tuple(ARRIVAL_REGIMES)),
        "psi_regime": _choice(PSI_REGIMES),
        "integer_arrival_means": _flag,
        "baselines_restricted": _flag,
        "explicit": _explicit_users,
    }))
    if users.energy_linear + users.energy_quadratic <= 0:
        raise ConfigError("users.energy_linear", "energy cost must be strictly increasing")
    if users.explicit is not None and len(users.explicit) != topo.n_users:
        raise ConfigError("users.explicit", f"expected {topo.n_users} users")

    if "policies" in top:
        pol = top["policies"]
        if not isinstance(pol, list) or not pol:
            raise ConfigError("policies", "expected a nonempty list")
        policies = tuple(_policy(p, f"policies[{k}]") for k, p in enumerate(pol))
    else:
        policies = ExperimentConfig.policies

    solve_kw = _section(top.get("solve"), "solve", SolveConfig, {
        "gamma": _num(float, lo=0.0, lo_open=True),
        "tol": _num(float, lo=0.0, lo_open=True),
        "max_iters": _num(int, lo=1),
        "grid_stride": _num(int, lo=1),
        "degenerate": _choice(("raise", "limit")),
    })
    solve = SolveConfig(**{"degenerate": "limit", **solve_kw})

    sim = SimSection(**_section(top.get("sim"), "sim", SimSection, {
        "horizon": _num(int, lo=0),
        "warmup": _num(int, lo=0),
        "seeds": _seeds,
        "collision_energy": _flag,
    }))
    if sim.warmup > sim.horizon:
        raise ConfigError("sim.warmup", "must not exceed sim.horizon")

    output = OutputConfig(**_section(top.get("output"), "output", OutputConfig, {
        "dir": _string,
        "trace": _flag,
    }))
    return ExperimentConfig(
        experiment_id=top.get("experiment_id", "default"),
        topology=topo, users=users, policies=policies, solve=solve, sim=sim, output=output,
    )


def config_to_dict(cfg: ExperimentConfig) -> dict:
    def plain(obj):
        if isinstance(obj, tuple):
            return [plain(v) for v in obj]
        return obj

    users = dataclasses.asdict(cfg.users)
    if cfg.users.explicit is not None:
        users["explicit"] = [dict(u) for u in cfg.users.explicit]
    topo = dataclasses.asdict(cfg.topology)
    topo["positions"] = plain(cfg.topology.positions)
    return {
        "experiment_id": cfg.experiment_id,
        "topology": topo,
        "users": users,
        "policies": [
            {k: v for k, v in dataclasses.asdict(p).items() if v is not None}
            for p in cfg.policies
        ],
        "solve": dataclasses.asdict(cfg.solve),
        "sim": {**dataclasses.asdict(cfg.sim), "seeds": list(cfg.sim.seeds)},
        "output": dataclasses.asdict(cfg.output),
    }


def emit_config(cfg: ExperimentConfig) -> str:
    return yaml.safe_dump(config_to_dict(cfg), sort_keys=False)
