"""Run configuration: dataclasses, TOML loading and schema validation.

The schema is the set of dataclasses below; every table and key is
checked, and errors carry the dotted path of the offending field.
"""

import dataclasses
import sys
from dataclasses import dataclass, field

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import ConfigParse, SchemaViolation
from .robustness import KINDS, PerturbationSpec

MODEL_KINDS = ("kitaev", "ssh")
INITIAL_PRESETS = ("uniform_both", "uniform_creation", "uniform_annihilation",
                   "single_site", "explicit")
LAW_KINDS = ("none", "p_matrix", "overlap", "dual_target", "implicit")


@dataclass
class ModelConfig:
    kind: str
    N: int
    J: float
    mu: float
    Delta: float = 0.0
    delta: float = 0.0


@dataclass
class InitialConfig:
    preset: str = "uniform_both"
    site: int = 1
    C: list = field(default_factory=lambda: [1.0, 0.0])
    D: list = field(default_factory=lambda: [0.0, 0.0])
    C_list: list = None
    D_list: list = None


@dataclass
class LawConfig:
    kind: str = "none"
    gains: list = field(default_factory=lambda: [1.0])
    controls: list = None
    target: object = "right"
    target2: object = "left"
    theta_slope: float = 0.5
    square_wave: float = None
    min_dwell: float = 0.0


@dataclass
class IntegratorConfig:
    t_end: float
    dt: float = 0.01
    stop_fidelity: float = None
    record_every: int = 1
    fidelity_targets: list = None


@dataclass
class SweepConfig:
    kind: str
    values: list
    runs_per_point: int = 1
    site: int = None
    which: str = None
    low: float = -0.02
    high: float = 0.02
    horizon: object = "clean_stop"
    label: str = ""


@dataclass
class OutputConfig:
    csv: bool = True
    json: bool = True
    svg: bool = False


@dataclass
class RunConfig:
    model: ModelConfig
    integrator: IntegratorConfig = None
    initial: InitialConfig = field(default_factory=InitialConfig)
    law: LawConfig = field(default_factory=LawConfig)
    perturbations: list = field(default_factory=list)
    sweeps: list = field(default_factory=list)
    seed: int = 0
    name: str = "run"
    description: str = ""
    outputs: OutputConfig = field(default_factory=OutputConfig)

    def to_dict(self):
        return dataclasses.asdict(self)

    def replace(self, **kw):
        return dataclasses.replace(self, **kw)


# ---------------------------------------------------------------- validation

def _num(v, path, integer=False, positive=False, nonneg=False):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise SchemaViolation(path, f"expected a number, got {v!r}")
    if integer and int(v) != v:
        raise SchemaViolation(path, f"expected an integer, got {v!r}")
    if v != v or v in (float("inf"), float("-inf")):
        raise SchemaViolation(path, "must be finite")
    if positive and not v > 0:
        raise SchemaViolation(path, "must be positive")
    if nonneg and v < 0:
        raise SchemaViolation(path, "must be non-negative")
    return int(v) if integer else float(v)


def _choice(v, options, path):
    if v not in options:
        raise SchemaViolation(path, f"expected one of {', '.join(options)}, got {v!r}")
    return v


def _complex(v, path):
    if isinstance(v, (list, tuple)):
        if len(v) != 2:
            raise SchemaViolation(path, "complex values are [re, im] pairs")
        return [_num(v[0], path), _num(v[1], path)]
    return [_num(v, path), 0.0]


def _present(d):
    # None marks an unset optional key (as produced by RunConfig.to_dict)
    return {k: v for k, v in d.items() if v is not None}


def _table(d, cls, path, convert):
    if not isinstance(d, dict):
        raise SchemaViolation(path, "expected a table")
    d = _present(d)
    names = {f.name for f in dataclasses.fields(cls)}
    for k in d:
        if k not in names:
            raise SchemaViolation(f"{path}.{k}", "unknown key")
    required = [f.name for f in dataclasses.fields(cls)
                if f.default is dataclasses.MISSING and f.default_factory is dataclasses.MISSING]
    for k in required:
        if k not in d:
            raise SchemaViolation(f"{path}.{k}", "missing required key")
    out = {}
    for k, v in d.items():
        out[k] = convert(k, v, f"{path}.{k}")
    return cls(**out)


def _target(v, path):
    if isinstance(v, str):
        return _choice(v, ("left", "right"), path)
    return _num(v, path, integer=True, positive=True)


def _model(d):
    def conv(k, v, p):
        if k == "kind":
            return _choice(v, MODEL_KINDS, p)
        if k == "N":
            n = _num(v, p, integer=True)
            if n < 2:
                raise SchemaViolation(p, "need N >= 2")
            return n
        return _num(v, p)
    m = _table(d, ModelConfig, "model", conv)
    if m.kind == "ssh" and not 0 <= m.delta <= 1:
        raise SchemaViolation("model.delta", "dimerization must lie in [0, 1]")
    return m


def _initial(d):
    def conv(k, v, p):
        if k == "preset":
            return _choice(v, INITIAL_PRESETS, p)
        if k == "site":
            return _num(v, p, integer=True, positive=True)
        if k in ("C", "D"):
            return _complex(v, p)
        if not isinstance(v, list):
            raise SchemaViolation(p, "expected a list")
        return [_complex(x, f"{p}[{i}]") for i, x in enumerate(v)]
    ini = _table(d, InitialConfig, "initial", conv)
    if ini.preset == "explicit" and (ini.C_list is None or ini.D_list is None):
        raise SchemaViolation("initial", "explicit preset needs C_list and D_list")
    return ini


def _law(d):
    def conv(k, v, p):
        if k == "kind":
            return _choice(v, LAW_KINDS, p)
        if k == "gains":
            vals = v if isinstance(v, list) else [v]
            return [_num(x, f"{p}[{i}]", positive=True) for i, x in enumerate(vals)]
        if k == "controls":
            if not isinstance(v, list) or not v:
                raise SchemaViolation(p, "expected a non-empty list of sites")
            return [_num(x, f"{p}[{i}]", integer=True, positive=True) for i, x in enumerate(v)]
        if k in ("target", "target2"):
            return _target(v, p)
        if k in ("theta_slope", "square_wave"):
            return _num(v, p, positive=True)
        return _num(v, p, nonneg=True)
    return _table(d, LawConfig, "law", conv)


def _integrator(d):
    def conv(k, v, p):
        if k == "record_every":
            return _num(v, p, integer=True, positive=True)
        if k == "fidelity_targets":
            if not isinstance(v, list) or not v:
                raise SchemaViolation(p, "expected a non-empty list")
            return [_target(x, f"{p}[{i}]") for i, x in enumerate(v)]
        if k == "dt":
            return _num(v, p, positive=True)
        if k == "stop_fidelity":
            x = _num(v, p, positive=True)
            if x > 2:
                raise SchemaViolation(p, "fidelity threshold out of range")
            return x
        return _num(v, p, nonneg=True)
    return _table(d, IntegratorConfig, "integrator", conv)


def _perturbation(d, path):
    if not isinstance(d, dict):
        raise SchemaViolation(path, "expected a table")
    d = _present(d)
    names = {f.name for f in dataclasses.fields(PerturbationSpec)}
    for k in d:
        if k not in names:
            raise SchemaViolation(f"{path}.{k}", "unknown key")
    if "kind" not in d:
        raise SchemaViolation(f"{path}.kind", "missing required key")
    _choice(d["kind"], KINDS, f"{path}.kind")
    kw = dict(d)
    for k in ("value", "low", "high"):
        if k in kw:
            kw[k] = _num(kw[k], f"{path}.{k}")
    for k in ("site", "n"):
        if k in kw:
            kw[k] = _num(kw[k], f"{path}.{k}", integer=True, positive=True)
    try:
        return PerturbationSpec(**kw)
    except ValueError as exc:
        raise SchemaViolation(path, str(exc)) from exc


def _sweep(d, path):
    def conv(k, v, p):
        if k == "kind":
            return _choice(v, KINDS, p)
        if k == "values":
            if not isinstance(v, list) or not v:
                raise SchemaViolation(p, "axis must be a non-empty list")
            return [_num(x, f"{p}[{i}]") for i, x in enumerate(v)]
        if k in ("runs_per_point", "site"):
            return _num(v, p, integer=True, positive=True)
        if k == "which":
            return _choice(v, ("J", "Delta", "mu"), p)
        if k == "horizon":
            if v in ("clean_stop", "t_end"):
                return v
            return _num(v, p, positive=True)
        if k == "label":
            return str(v)
        return _num(v, p)
    return _table(d, SweepConfig, path, conv)


def _outputs(d):
    def conv(k, v, p):
        if not isinstance(v, bool):
            raise SchemaViolation(p, "expected true or false")
        return v
    return _table(d, OutputConfig, "outputs", conv)


def config_from_dict(d):
    """Validate a parsed document and build a :class:`RunConfig`."""
    if not isinstance(d, dict):
        raise SchemaViolation("<root>", "expected a table")
    d = _present(d)
    allowed = {f.name for f in dataclasses.fields(RunConfig)}
    for k in d:
        if k not in allowed:
            raise SchemaViolation(k, "unknown key")
    if "model" not in d:
        raise SchemaViolation("model", "missing required table")
    kw = dict(model=_model(d["model"]))
    if "integrator" in d:
        kw["integrator"] = _integrator(d["integrator"])
    if "initial" in d:
        kw["initial"] = _initial(d["initial"])
    if "law" in d:
        kw["law"] = _law(d["law"])
    if "perturbations" in d:
        if not isinstance(d["perturbations"], list):
            raise SchemaViolation("perturbations", "expected an array of tables")
        kw["perturbations"] = [_perturbation(p, f"perturbations[{i}]")
                               for i, p in enumerate(d["perturbations"])]
    if "sweeps" in d:
        if not isinstance(d["sweeps"], list):
            raise SchemaViolation("sweeps", "expected an array of tables")
        kw["sweeps"] = [_sweep(s, f"sweeps[{i}]") for i, s in enumerate(d["sweeps"])]
    if "seed" in d:
        s = _num(d["seed"], "seed", integer=True, nonneg=True)
        if s >= 2 ** 64:
            raise SchemaViolation("seed", "must fit in 64 bits")
        kw["seed"] = s
    for k in ("name", "description"):
        if k in d:
            kw[k] = str(d[k])
    if "outputs" in d:
        kw["outputs"] = _outputs(d["outputs"])
    cfg = RunConfig(**kw)
    _cross_checks(cfg)
    return cfg


def _cross_checks(cfg):
    m, law = cfg.model, cfg.law
    if law.controls is not None:
        for i, s in enumerate(law.controls):
            if s > m.N:
                raise SchemaViolation(f"law.controls[{i}]", f"site {s} exceeds N={m.N}")
    if law.kind == "implicit" and m.kind != "ssh":
        raise SchemaViolation("law.kind", "implicit law requires the bosonic ssh model")
    if cfg.initial.site > m.N:
        raise SchemaViolation("initial.site", f"site exceeds N={m.N}")
    for key in ("C_list", "D_list"):
        v = getattr(cfg.initial, key)
        if v is not None and len(v) != m.N:
            raise SchemaViolation(f"initial.{key}", f"expected {m.N} entries")


def loads(text):
    """Parse TOML text into a validated :class:`RunConfig`."""
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigParse(str(exc)) from exc
    return config_from_dict(doc)


def load(path):
    """Read and validate a TOML configuration file."""
    try:
        with open(path, "rb") as fh:
            doc = tomllib.load(fh)
    except OSError as exc:
        raise ConfigParse(f"cannot read {path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigParse(f"{path}: {exc}") from exc
    return config_from_dict(doc)
