"""Experiment configuration: YAML loading, validation and table presets.

A config is a mapping with the sections ``topology``, ``traffic``,
``algorithm``, ``model`` and ``output``, plus an optional ``mode``
(``route`` or ``all_to_all``) and ``seed``. A flat shorthand is accepted as
well::

    topology: clex
    base: 8
    levels: 3
    S: 7
    seed: 42

Validation errors carry the line of the offending key.
"""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field

import yaml

from clexsim.clique_router import BalancerConfig
from clexsim.hierarchical_router import RouterConfig, RoutingError, parse_valiant_mode
from clexsim.metrics import DelayModel
from clexsim.topology import ClexTopology, TorusTopology


class ConfigError(ValueError):
    def __init__(self, message: str, line: int | None = None, source: str | None = None):
        self.line = line
        self.source = source
        where = ""
        if source:
            where = f"{source}:{line}: " if line else f"{source}: "
        elif line:
            where = f"line {line}: "
        super().__init__(where + message)


SECTIONS = {
    "topology": {"kind": str, "base": int, "levels": int, "max_levels": int, "k": int, "k1": int, "k2": int, "k3": int},
    "traffic": {"pattern": str, "per_node": int, "seed": int},
    "algorithm": {
        "valiant_mode": str,
        "direct_first": bool,
        "request_ack": bool,
        "copy_cap_log_base": (int, float, str),
        "link_variant": str,
        "same_copy_bypass": bool,
    },
    "model": {"c_h": (int, float), "c_p": (int, float), "B": (int, float)},
    "output": {"dir": str, "formats": list, "sample_limit": int},
}
TOP_LEVEL = {"mode": str, "seed": int}
FLAT = {"base": "topology", "levels": "topology", "k": "topology", "k1": "topology", "k2": "topology", "k3": "topology", "S": "traffic", "per_node": "traffic", "pattern": "traffic"}
MODES = ("route", "all_to_all")
FORMATS = ("txt", "csv", "json", "svg")

DEFAULTS = {
    "topology": {"kind": "clex", "base": 8, "levels": 3},
    "traffic": {"pattern": "uniform_permutation", "per_node": 7, "seed": 0},
    "algorithm": {
        "valiant_mode": "off",
        "direct_first": True,
        "request_ack": False,
        "copy_cap_log_base": "e",
        "link_variant": "aggregated",
        "same_copy_bypass": False,
    },
    "model": {"c_h": 3.0, "c_p": 1.0, "B": 1.0},
    "output": {"dir": "out", "formats": ["txt", "csv", "json"], "sample_limit": 10**6},
    "mode": "route",
    "seed": 0,
}


def _preset(base, levels, per_node, dense):
    cfg = copy.deepcopy(DEFAULTS)
    cfg["topology"].update(base=base, levels=levels)
    cfg["traffic"]["per_node"] = per_node
    # the reference experiments spread messages over the parallel level links
    cfg["algorithm"].update(request_ack=dense, direct_first=True, link_variant="uniform")
    return cfg


PRESETS = {
    1: _preset(32, 4, 28, dense=True),
    2: _preset(64, 3, 57, dense=True),
    3: _preset(32, 4, 4, dense=False),
    4: _preset(64, 3, 5, dense=False),
}


@dataclass
class Config:
    raw: dict
    source: str | None = None
    _lines: dict = field(default_factory=dict, repr=False)

    def __getitem__(self, key):
        return self.raw[key]

    @property
    def mode(self) -> str:
        return self.raw["mode"]

    @property
    def seed(self) -> int:
        return self.raw["seed"]

    def topology(self):
        top = self.raw["topology"]
        if top["kind"] == "torus":
            return TorusTopology(top["k1"], top["k2"], top["k3"])
        aggregated = self.raw["algorithm"]["link_variant"] == "aggregated"
        return ClexTopology(top["base"], top["levels"], max_levels=top.get("max_levels"), aggregated=aggregated)

    def router_config(self, threads: int | None = None) -> RouterConfig:
        alg = self.raw["algorithm"]
        log_base = alg["copy_cap_log_base"]
        log_base = math.e if log_base == "e" else float(log_base)
        balancer = BalancerConfig(
            direct_first=alg["direct_first"],
            request_ack=alg["request_ack"],
            log_base=log_base,
            rng_seed=self.seed,
        )
        return RouterConfig(balancer=balancer, same_copy_bypass=alg["same_copy_bypass"], seed=self.seed, threads=threads)

    def delay_model(self) -> DelayModel:
        return DelayModel(self.raw["model"]["c_h"], self.raw["model"]["c_p"])

    def line_of(self, *path) -> int | None:
        return self._lines.get(path)

    def to_dict(self) -> dict:
        return copy.deepcopy(self.raw)


def _line_map(node, path=(), out=None) -> dict:
    """Map key paths to 1-based source lines using the composed YAML tree."""
    if out is None:
        out = {}
    if isinstance(node, yaml.MappingNode):
        for key, value in node.value:
            p = path + (key.value,)
            out[p] = key.start_mark.line + 1
            _line_map(value, p, out)
    return out


def _type_ok(value, expected) -> bool:
    if expected in (int, float) or (isinstance(expected, tuple) and int in expected):
        if isinstance(value, bool):
            return False
    if expected is float:
        return isinstance(value, (int, float))
    return isinstance(value, expected)


def _type_name(expected) -> str:
    if isinstance(expected, tuple):
        return " or ".join(t.__name__ for t in expected)
    return expected.__name__


def parse_config(text: str, source: str | None = None, overrides: dict | None = None) -> Config:
    try:
        node = yaml.compose(text)
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ConfigError(f"invalid YAML: {getattr(exc, 'problem', exc)}", mark.line + 1 if mark else None, source) from None
    lines = _line_map(node) if node is not None else {}
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError("config must be a mapping", 1, source)
    return build_config(data, lines, source, overrides)


def build_config(data: dict, lines: dict | None = None, source: str | None = None, overrides: dict | None = None) -> Config:
    lines = lines or {}

    def fail(msg, *path):
        # nested key, then its flat shorthand, then the enclosing section
        line = lines.get(path)
        if line is None and len(path) > 1:
            flat = "S" if path[-1] == "per_node" else path[-1]
            line = lines.get((flat,)) or lines.get(path[:1])
        raise ConfigError(msg, line, source)

    cfg = copy.deepcopy(DEFAULTS)
    for key, value in data.items():
        if key in SECTIONS and isinstance(value, dict):
            allowed = SECTIONS[key]
            for sub, v in value.items():
                if sub not in allowed:
                    fail(f"unknown key {key}.{sub}; expected one of {sorted(allowed)}", key, sub)
                if key == "algorithm" and sub == "valiant_mode" and v is False:
                    v = "off"  # YAML 1.1 reads a bare off as false
                if not _type_ok(v, allowed[sub]):
                    fail(f"{key}.{sub} must be {_type_name(allowed[sub])}, got {type(v).__name__}", key, sub)
                cfg[key][sub] = v
        elif key == "topology" and isinstance(value, str):
            cfg["topology"]["kind"] = value
        elif key in TOP_LEVEL:
            if not _type_ok(value, TOP_LEVEL[key]):
                fail(f"{key} must be {_type_name(TOP_LEVEL[key])}, got {type(value).__name__}", key)
            cfg[key] = value
        elif key in FLAT:
            section = FLAT[key]
            name = "per_node" if key == "S" else key
            expected = SECTIONS[section][name]
            if not _type_ok(value, expected):
                fail(f"{key} must be {_type_name(expected)}, got {type(value).__name__}", key)
            cfg[section][name] = value
        elif key in SECTIONS:
            fail(f"section {key} must be a mapping", key)
        else:
            fail(f"unknown key {key!r}", key)
    if "seed" not in data and "seed" in data.get("traffic", {}):
        cfg["seed"] = cfg["traffic"]["seed"]
    elif "seed" in data and "seed" not in data.get("traffic", {}):
        cfg["traffic"]["seed"] = cfg["seed"]
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if key == "seed":
            cfg["seed"] = cfg["traffic"]["seed"] = value
        else:
            cfg[key] = value
    _validate(cfg, fail)
    return Config(cfg, source, lines)


def _validate(cfg: dict, fail):
    top = cfg["topology"]
    kind = top["kind"]
    if kind not in ("clex", "torus"):
        fail(f"topology kind must be clex or torus, got {kind!r}", "topology")
    if kind == "torus":
        if "k" in top:
            for d in ("k1", "k2", "k3"):
                top.setdefault(d, top["k"])
        for d in ("k1", "k2", "k3"):
            if d not in top:
                fail("torus needs k or k1, k2, k3", "topology")
            if top[d] < 1:
                fail(f"torus dimension {d} must be >= 1", "topology", d)
        if cfg["mode"] != "all_to_all":
            fail("torus topologies only support mode all_to_all", "mode")
    else:
        if top["base"] < 2:
            fail(f"base must be >= 2, got {top['base']}", "topology", "base")
        if top["levels"] < 1:
            fail(f"levels must be >= 1, got {top['levels']}", "topology", "levels")
        if "max_levels" in top and top["max_levels"] < top["levels"]:
            fail("max_levels must be >= levels", "topology", "max_levels")
    if cfg["mode"] not in MODES:
        fail(f"mode must be one of {MODES}, got {cfg['mode']!r}", "mode")
    traffic = cfg["traffic"]
    if traffic["pattern"] not in ("uniform_permutation", "uir"):
        fail(f"traffic pattern must be uniform_permutation or uir, got {traffic['pattern']!r}", "traffic", "pattern")
    if traffic["per_node"] < 0:
        fail("per_node must be >= 0", "traffic", "per_node")
    alg = cfg["algorithm"]
    try:
        parse_valiant_mode(alg["valiant_mode"])
    except RoutingError as exc:
        fail(str(exc), "algorithm", "valiant_mode")
    if alg["link_variant"] not in ("uniform", "aggregated"):
        fail(f"link_variant must be uniform or aggregated, got {alg['link_variant']!r}", "algorithm", "link_variant")
    lb = alg["copy_cap_log_base"]
    if lb != "e" and (isinstance(lb, str) or lb <= 1):
        fail(f"copy_cap_log_base must be 'e' or a number > 1, got {lb!r}", "algorithm", "copy_cap_log_base")
    for key in ("c_h", "c_p", "B"):
        if cfg["model"][key] <= 0:
            fail(f"model.{key} must be positive", "model", key)
    bad = [f for f in cfg["output"]["formats"] if f not in FORMATS]
    if bad:
        fail(f"unknown output formats {bad}; expected a subset of {FORMATS}", "output", "formats")
    if cfg["output"]["sample_limit"] < 1:
        fail("sample_limit must be >= 1", "output", "sample_limit")


def load_config(path: str, overrides: dict | None = None) -> Config:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}", None, path) from None
    return parse_config(text, path, overrides)


def scale_preset(raw: dict, factor: float) -> dict:
    """Shrink a CLEX config for desk runs: base -> base**factor, S kept proportional to base."""
    if not 0 < factor <= 1:
        raise ConfigError(f"scale must be in (0, 1], got {factor}")
    out = copy.deepcopy(raw)
    top = out["topology"]
    if top["kind"] != "clex" or factor == 1:
        return out
    base = top["base"]
    small = max(2, round(base**factor))
    top["base"] = small
    out["traffic"]["per_node"] = max(1, round(out["traffic"]["per_node"] * small / base))
    return out


def preset_config(table: int, overrides: dict | None = None, scale: float = 1.0) -> Config:
    if table not in PRESETS:
        raise ConfigError(f"no preset for table {table}; expected 1-4")
    raw = scale_preset(PRESETS[table], scale)
    return build_config(raw, overrides=overrides, source=f"preset table {table}")
