"""Experiment configuration: strict TOML in, canonical TOML back out.

Unknown sections or keys are hard errors (no silent defaults for typos);
parse errors carry the line/column from the TOML decoder.  The canonical
serialization is what gets hashed into every output artifact.
"""

import hashlib
import json
import math
from dataclasses import dataclass, field as dc_field

try:
    import tomllib as _toml
except ImportError:  # Python 3.10
    import tomli as _toml

from .errors import ConfigError
from .multiscale import SimConfig

KINDS = ("validate", "fast", "invariant", "coupled", "average", "converge", "remainder")

_PI = math.pi


@dataclass(frozen=True)
class OperatorConfig:
    bc: str = "dirichlet"
    length: float = _PI
    mass_shift: float = 0.0


@dataclass(frozen=True)
class ExperimentOptions:
    """Kind-specific knobs; unused ones are ignored by the runner."""

    eps_grid: tuple = (1.0, 0.1, 0.01)
    h: tuple = (1.0,)
    k: tuple = (1.0,)
    dt: float = 0.02
    t_burn: float | None = None
    t_sample: float = 200.0
    thin: int = 5
    n_samples: int = 20000
    beta: float = 0.5
    burn_in: int = 2000
    p: int = 2
    t_cut: float = 20.0
    c_eps: float = 0.1
    phi: str = "inner"
    t_max: float = 4.0
    n_points: int = 20


@dataclass(frozen=True)
class ExperimentSpec:
    kind: str
    reaction_f: str
    reaction_g: str
    name: str = "experiment"
    operator_a: OperatorConfig = dc_field(default_factory=OperatorConfig)
    operator_b: OperatorConfig = dc_field(default_factory=OperatorConfig)
    sim: SimConfig = dc_field(
        default_factory=lambda: SimConfig(
            eps=0.1, t_final=1.0, dt_slow=0.01, dt_fast=0.01,
            n_modes=8, replicas=200, seed=0, eta=0.1,
        )
    )
    x0: tuple = (1.0,)
    y0: tuple = (0.0,)
    experiment: ExperimentOptions = dc_field(default_factory=ExperimentOptions)

    def with_overrides(self, seed=None, replicas=None) -> "ExperimentSpec":
        sim = self.sim
        if seed is not None or replicas is not None:
            sim = SimConfig(
                eps=sim.eps, t_final=sim.t_final, dt_slow=sim.dt_slow,
                dt_fast=sim.dt_fast, n_modes=sim.n_modes,
                replicas=sim.replicas if replicas is None else int(replicas),
                seed=sim.seed if seed is None else int(seed),
                eta=sim.eta,
            )
        return ExperimentSpec(
            kind=self.kind, reaction_f=self.reaction_f, reaction_g=self.reaction_g,
            name=self.name, operator_a=self.operator_a, operator_b=self.operator_b,
            sim=sim, x0=self.x0, y0=self.y0, experiment=self.experiment,
        )


_TOP_KEYS = {"name": str, "kind": str}
_OPERATOR_KEYS = {"bc": str, "length": float, "mass_shift": float}
_REACTION_KEYS = {"f": str, "g": str}
_SIM_KEYS = {
    "eps": float, "t_final": float, "dt_slow": float, "dt_fast": float,
    "n_modes": int, "replicas": int, "seed": int, "eta": float,
}
_INITIAL_KEYS = {"x0": list, "y0": list}
_EXPERIMENT_KEYS = {
    "eps_grid": list, "h": list, "k": list, "dt": float, "t_burn": float,
    "t_sample": float, "thin": int, "n_samples": int, "beta": float,
    "burn_in": int, "p": int, "t_cut": float, "c_eps": float, "phi": str,
    "t_max": float, "n_points": int,
}
_SECTIONS = {
    "operator_a": _OPERATOR_KEYS,
    "operator_b": _OPERATOR_KEYS,
    "reaction": _REACTION_KEYS,
    "sim": _SIM_KEYS,
    "initial": _INITIAL_KEYS,
    "experiment": _EXPERIMENT_KEYS,
}


def _coerce(section: str, key: str, value, want):
    if want is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"key '{section}.{key}' must be a number, got {value!r}")
        return float(value)
    if want is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"key '{section}.{key}' must be an integer, got {value!r}")
        return int(value)
    if want is str:
        if not isinstance(value, str):
            raise ConfigError(f"key '{section}.{key}' must be a string, got {value!r}")
        return value
    if want is list:
        if not isinstance(value, list) or not all(
            isinstance(v, (int, float)) and not isinstance(v, bool) for v in value
        ):
            raise ConfigError(f"key '{section}.{key}' must be a list of numbers")
        return tuple(float(v) for v in value)
    raise AssertionError(want)


def _take(section: str, table: dict, allowed: dict) -> dict:
    out = {}
    for key, value in table.items():
        if key not in allowed:
            raise ConfigError(f"unknown key '{section + '.' if section else ''}{key}'")
        out[key] = _coerce(section or "top level", key, value, allowed[key])
    return out


def parse_config(text: str) -> ExperimentSpec:
    try:
        raw = _toml.loads(text)
    except _toml.TOMLDecodeError as exc:
        raise ConfigError(f"config does not parse: {exc}") from None
    top = {}
    sections = {}
    for key, value in raw.items():
        if isinstance(value, dict):
            if key not in _SECTIONS:
                raise ConfigError(f"unknown section '[{key}]'")
            sections[key] = _take(key, value, _SECTIONS[key])
        else:
            top.update(_take("", {key: value}, _TOP_KEYS))
    if "kind" not in top:
        raise ConfigError("missing required key 'kind'")
    if top["kind"] not in KINDS:
        raise ConfigError(f"kind must be one of {KINDS}, got {top['kind']!r}")
    reaction = sections.get("reaction")
    if reaction is None or "f" not in reaction or "g" not in reaction:
        raise ConfigError("section [reaction] with keys f and g is required")

    def operator(section: str) -> OperatorConfig:
        data = sections.get(section, {})
        op = OperatorConfig(**data)
        if op.bc not in ("dirichlet", "neumann_shifted"):
            raise ConfigError(
                f"'{section}.bc' must be 'dirichlet' or 'neumann_shifted', got {op.bc!r}"
            )
        return op

    sim_defaults = {
        "eps": 0.1, "t_final": 1.0, "dt_slow": 0.01, "dt_fast": 0.01,
        "n_modes": 8, "replicas": 200, "seed": 0, "eta": 0.1,
    }
    sim_defaults.update(sections.get("sim", {}))
    try:
        sim = SimConfig(**sim_defaults)
    except ValueError as exc:
        raise ConfigError(f"invalid [sim] block: {exc}") from None
    initial = sections.get("initial", {})
    exp = sections.get("experiment", {})
    return ExperimentSpec(
        kind=top["kind"],
        name=top.get("name", "experiment"),
        reaction_f=reaction["f"],
        reaction_g=reaction["g"],
        operator_a=operator("operator_a"),
        operator_b=operator("operator_b"),
        sim=sim,
        x0=initial.get("x0", (1.0,)),
        y0=initial.get("y0", (0.0,)),
        experiment=ExperimentOptions(**exp),
    )


def load_config(path) -> ExperimentSpec:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config(fh.read())


# ---------------------------------------------------------------------------
# canonical serialization


def _toml_value(value) -> str:
    if isinstance(value, str):
        escaped = value.replace("\\", "\\\\").replace('"', '\\"')
        return f'"{escaped}"'
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (list, tuple)):
        return "[" + ", ".join(_toml_value(v) for v in value) + "]"
    raise TypeError(f"cannot serialize {value!r}")


def canonical_dict(spec: ExperimentSpec) -> dict:
    exp = spec.experiment
    out = {
        "name": spec.name,
        "kind": spec.kind,
        "operator_a": {
            "bc": spec.operator_a.bc,
            "length": spec.operator_a.length,
            "mass_shift": spec.operator_a.mass_shift,
        },
        "operator_b": {
            "bc": spec.operator_b.bc,
            "length": spec.operator_b.length,
            "mass_shift": spec.operator_b.mass_shift,
        },
        "reaction": {"f": spec.reaction_f, "g": spec.reaction_g},
        "sim": {
            "eps": spec.sim.eps, "t_final": spec.sim.t_final,
            "dt_slow": spec.sim.dt_slow, "dt_fast": spec.sim.dt_fast,
            "n_modes": spec.sim.n_modes, "replicas": spec.sim.replicas,
            "seed": spec.sim.seed, "eta": spec.sim.eta,
        },
        "initial": {"x0": list(spec.x0), "y0": list(spec.y0)},
        "experiment": {
            "eps_grid": list(exp.eps_grid), "h": list(exp.h), "k": list(exp.k),
            "dt": exp.dt, "t_sample": exp.t_sample, "thin": exp.thin,
            "n_samples": exp.n_samples, "beta": exp.beta, "burn_in": exp.burn_in,
            "p": exp.p, "t_cut": exp.t_cut, "c_eps": exp.c_eps, "phi": exp.phi,
            "t_max": exp.t_max, "n_points": exp.n_points,
        },
    }
    if exp.t_burn is not None:
        out["experiment"]["t_burn"] = exp.t_burn
    return out


def serialize_spec(spec: ExperimentSpec) -> str:
    data = canonical_dict(spec)
    lines = [f"name = {_toml_value(data['name'])}", f"kind = {_toml_value(data['kind'])}"]
    for section in ("operator_a", "operator_b", "reaction", "sim", "initial", "experiment"):
        lines.append("")
        lines.append(f"[{section}]")
        for key in sorted(data[section]):
            lines.append(f"{key} = {_toml_value(data[section][key])}")
    return "\n".join(lines) + "\n"


def spec_hash(spec: ExperimentSpec) -> str:
    payload = json.dumps(canonical_dict(spec), sort_keys=True)
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()
