"""Run configuration files (YAML) and their validation.

Every validation failure raises ``ConfigError`` carrying the 1-based line of the
offending key, so the CLI can point at it.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields
from os import PathLike
from pathlib import Path

from qprop import _yaml
from qprop.detector import OracleParams
from qprop.errors import BadScript, ConfigError
from qprop.propagation import Method, PropagationConfig
from qprop.scenario import FAMILIES, ScenarioSpec, load_scenario, make_scenario, scenario_from_dict

AXES = ("update_flags", "method", "top_k", "initial_queries")
_TOP_KEYS = {"scenario", "suite", "seeds", "window", "out", "save_masks", "oracle", "propagation", "ablation"}
_ORACLE_KEYS = {f.name for f in fields(OracleParams)} - {"seed"}
_PROP_KEYS = {f.name for f in fields(PropagationConfig)}


@dataclass
class CustomAxis:
    name: str
    variants: list[tuple[str, PropagationConfig]]


@dataclass
class AblationConfig:
    axes: list = field(default_factory=lambda: list(AXES))
    suites: list[str] = field(default_factory=lambda: ["occlusion", "distractors"])


@dataclass
class RunConfig:
    oracle: OracleParams = field(default_factory=OracleParams)
    propagation: PropagationConfig = field(default_factory=PropagationConfig)
    suite: str | None = None
    scenario: ScenarioSpec | None = None
    scenario_source: str | None = None
    window: int = 0
    seeds: list[int] = field(default_factory=lambda: [0, 1, 2, 3, 4])
    out: Path = Path("results")
    save_masks: bool = False
    ablation: AblationConfig = field(default_factory=AblationConfig)

    def scenarios(self) -> list[tuple[ScenarioSpec, int]]:
        """``(spec, oracle seed)`` pairs, one per configured seed."""
        if self.scenario is not None:
            return [(self.scenario, s) for s in self.seeds]
        return [(make_scenario(self.suite, s), s) for s in self.seeds]

    def snapshot(self) -> dict:
        return {
            "scenario": self.scenario_source if self.scenario is not None else None,
            "suite": self.suite,
            "window": effective_window(self.window),
            "seeds": list(self.seeds),
            "oracle": {k: v for k, v in self.oracle.to_dict().items() if k != "seed"},
            "propagation": self.propagation.to_dict(),
        }


def effective_window(window: int) -> int:
    """Clip length 1 is the online pipeline; both are recorded as 0."""
    return 0 if window <= 1 else window


def _err(msg: str, container=None, key=None, source=None):
    raise ConfigError(msg, _yaml.line_of(container, key) if container is not None else None, source)


def _check_keys(mapping, allowed, where, source):
    for key in mapping:
        if key not in allowed:
            _err(f"unknown key {key!r} in {where}; allowed: {sorted(allowed)}", mapping, key, source)


def _build(cls, mapping, base, where, source, allowed):
    if mapping is None:
        return base
    if not isinstance(mapping, dict):
        _err(f"{where} must be a mapping", source=source)
    _check_keys(mapping, allowed, where, source)
    values = {f.name: getattr(base, f.name) for f in fields(cls)}
    for key, value in mapping.items():
        if isinstance(getattr(base, key), bool) and not isinstance(value, bool):
            _err(f"{where}.{key} must be true or false", mapping, key, source)
        values[key] = value
    try:
        return cls(**values)
    except (ValueError, TypeError) as exc:
        bad = next((k for k in mapping if k in str(exc)), None)
        _err(f"{where}: {exc}", mapping, bad, source)


def parse_propagation(mapping, base: PropagationConfig | None = None, where="propagation", source=None):
    base = base or PropagationConfig()
    if isinstance(mapping, dict) and "method" in mapping:
        try:
            Method(mapping["method"])
        except ValueError:
            _err(
                f"{where}.method must be one of {[m.value for m in Method]}", mapping, "method", source
            )
    return _build(PropagationConfig, mapping, base, where, source, _PROP_KEYS)


def load_config(path: str | PathLike) -> RunConfig:
    source = str(path)
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}", source=source) from None
    try:
        data = _yaml.load(text)
    except Exception as exc:  # yaml.YAMLError and friends
        mark = getattr(exc, "problem_mark", None)
        problem = getattr(exc, "problem", None) or str(exc)
        raise ConfigError(f"invalid YAML: {problem}", mark.line + 1 if mark else None, source) from None
    return config_from_dict(data if data is not None else {}, source, base_dir=Path(path).parent)


def config_from_dict(data, source: str | None = None, base_dir: Path | None = None) -> RunConfig:
    if not isinstance(data, dict):
        _err("config must be a mapping", source=source)
    _check_keys(data, _TOP_KEYS, "config", source)
    cfg = RunConfig()

    cfg.oracle = _build(OracleParams, data.get("oracle"), OracleParams(), "oracle", source, _ORACLE_KEYS)
    cfg.propagation = parse_propagation(data.get("propagation"), source=source)

    if "window" in data:
        if not isinstance(data["window"], int) or isinstance(data["window"], bool) or data["window"] < 0:
            _err("window must be an integer >= 0", data, "window", source)
        cfg.window = data["window"]
    if "seeds" in data:
        seeds = data["seeds"]
        if not isinstance(seeds, list) or not seeds or not all(
            isinstance(s, int) and not isinstance(s, bool) for s in seeds
        ):
            _err("seeds must be a non-empty list of integers", data, "seeds", source)
        cfg.seeds = list(seeds)
    if "out" in data:
        cfg.out = Path(str(data["out"]))
    if "save_masks" in data:
        if not isinstance(data["save_masks"], bool):
            _err("save_masks must be true or false", data, "save_masks", source)
        cfg.save_masks = data["save_masks"]

    if "suite" in data and "scenario" in data:
        _err("give either 'suite' or 'scenario', not both", data, "scenario", source)
    if "suite" in data:
        if data["suite"] not in FAMILIES:
            _err(f"unknown suite {data['suite']!r}; have {list(FAMILIES)}", data, "suite", source)
        cfg.suite = data["suite"]
    elif "scenario" in data:
        cfg.scenario, cfg.scenario_source = _load_scenario_field(data, source, base_dir)
    else:
        cfg.suite = "distractors"

    if cfg.scenario is not None and cfg.scenario.dim != cfg.propagation.dim:
        _err(
            f"scenario identity dim {cfg.scenario.dim} != propagation.dim {cfg.propagation.dim}",
            data, "scenario", source,
        )
    cfg.ablation = _parse_ablation(data.get("ablation"), cfg.propagation, source)
    return cfg


def _load_scenario_field(data, source, base_dir):
    raw = data["scenario"]
    try:
        if isinstance(raw, dict):
            return scenario_from_dict(raw, source), "inline"
        if isinstance(raw, str):
            p = Path(raw)
            if not p.is_absolute() and base_dir is not None:
                p = base_dir / p
            if not p.exists():
                _err(f"scenario file not found: {raw}", data, "scenario", source)
            return load_scenario(p), raw
    except BadScript as exc:
        line = _yaml.line_of(data, "scenario")
        msg = str(exc)
        # scenario_from_dict already prefixes a line for inline scripts
        raise ConfigError(msg, None if msg.startswith(str(source)) else line, None if msg.startswith(str(source)) else source) from None
    _err("scenario must be a file path or an inline mapping", data, "scenario", source)


def _parse_ablation(raw, base: PropagationConfig, source) -> AblationConfig:
    out = AblationConfig()
    if raw is None:
        return out
    if not isinstance(raw, dict):
        _err("ablation must be a mapping", source=source)
    _check_keys(raw, {"axes", "suites"}, "ablation", source)
    if "suites" in raw:
        suites = raw["suites"]
        if not isinstance(suites, list) or not suites or any(s not in FAMILIES for s in suites):
            _err(f"ablation.suites must be a non-empty list drawn from {list(FAMILIES)}", raw, "suites", source)
        out.suites = list(suites)
    if "axes" in raw:
        axes = raw["axes"]
        if not isinstance(axes, list) or not axes:
            _err("ablation.axes must be a non-empty list", raw, "axes", source)
        parsed = []
        for i, entry in enumerate(axes):
            if isinstance(entry, str):
                if entry not in AXES:
                    _err(f"unknown ablation axis {entry!r}; have {list(AXES)}", axes, i, source)
                parsed.append(entry)
            elif isinstance(entry, dict) and "name" in entry and isinstance(entry.get("variants"), list):
                variants = []
                for j, v in enumerate(entry["variants"]):
                    if not isinstance(v, dict) or "label" not in v:
                        _err("each variant needs a 'label'", entry["variants"], j, source)
                    overrides = {k: val for k, val in v.items() if k != "label"}
                    if isinstance(v, _yaml.LineDict):
                        overrides = _yaml.LineDict(overrides)
                        overrides.line, overrides.key_lines = v.line, v.key_lines
                    variants.append((str(v["label"]), parse_propagation(overrides, base, f"variant {v['label']}", source)))
                if not variants:
                    _err("custom axis needs at least one variant", entry, "variants", source)
                parsed.append(CustomAxis(str(entry["name"]), variants))
            else:
                _err("axis must be a builtin name or {name, variants}", axes, i, source)
        out.axes = parsed
    return out
