"""JSON run configurations.

Errors point at the offending line: syntax errors through the JSON
decoder's position, schema errors by locating the failing path in a YAML
composition of the same text (JSON is valid YAML flow syntax).
"""
from dataclasses import dataclass
import hashlib
import json

import jsonschema
import numpy as np
import yaml

from .codetree import AffineMap, Catalog, GeneratorSpec, IFSFamily
from .errors import ConfigError

NUMBER_LIST = {"type": "array", "items": {"type": "number"}}

SCHEMA = {
    "type": "object",
    "required": ["dimension", "families", "generator"],
    "properties": {
        "dimension": {"type": "integer", "minimum": 1},
        "families": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "required": ["label", "maps"],
                "properties": {
                    "label": {"type": ["string", "integer"]},
                    "maps": {
                        "type": "array",
                        "minItems": 1,
                        "items": {
                            "type": "object",
                            "required": ["matrix", "slot"],
                            "properties": {"matrix": NUMBER_LIST, "slot": {"type": "string"}},
                            "additionalProperties": False,
                        },
                    },
                },
                "additionalProperties": False,
            },
        },
        "slots": {"type": "array", "items": {"type": "string"}, "uniqueItems": True},
        "generator": {
            "type": "object",
            "required": ["kind"],
            "properties": {
                "kind": {"enum": list(GeneratorSpec.KINDS)},
                "seed": {"type": ["integer", "null"], "minimum": 0},
            },
        },
        "sigma_bounds": {
            "type": "object",
            "required": ["lower", "upper"],
            "properties": {"lower": {"type": "number"}, "upper": {"type": "number"}},
            "additionalProperties": False,
        },
        "translations": {"type": "object", "additionalProperties": NUMBER_LIST},
    },
    "additionalProperties": False,
}


@dataclass(frozen=True)
class RunConfig:
    source: str
    raw: dict
    catalog: Catalog
    generator: GeneratorSpec
    translations: dict | None
    digest: str

    @property
    def seed(self):
        return self.generator.seed

    def assignment(self):
        if self.translations is None:
            return None
        return self.catalog.scheme.assignment(self.translations)


def _locate(text: str, path) -> str:
    """'line L, column C' of a JSON path, or '' when it cannot be found."""
    try:
        node = yaml.compose(text)
    except yaml.YAMLError:
        return ""
    for key in path:
        if isinstance(node, yaml.MappingNode):
            nxt = next((v for k, v in node.value if k.value == str(key)), None)
        elif isinstance(node, yaml.SequenceNode) and isinstance(key, int) and key < len(node.value):
            nxt = node.value[key]
        else:
            nxt = None
        if nxt is None:
            break
        node = nxt
    if node is None:
        return ""
    return f"line {node.start_mark.line + 1}, column {node.start_mark.column + 1}"


def _where(source, text, path):
    loc = _locate(text, path) if text is not None else ""
    dotted = "/".join(str(p) for p in path) or "<root>"
    return f"{source}: {loc + ': ' if loc else ''}at {dotted}"


def canonical_digest(raw: dict) -> str:
    blob = json.dumps(raw, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


def parse_config(text: str, source: str = "<config>") -> RunConfig:
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        offset = len(text[: exc.pos].encode())
        raise ConfigError(f"{source}: line {exc.lineno}, column {exc.colno} "
                          f"(byte offset {offset}): {exc.msg}") from None
    return config_from_dict(raw, source, text)


def config_from_dict(raw: dict, source: str = "<config>", text: str | None = None) -> RunConfig:
    validator = jsonschema.Draft7Validator(SCHEMA)
    errors = sorted(validator.iter_errors(raw), key=lambda e: list(e.absolute_path))
    if errors:
        e = errors[0]
        raise ConfigError(f"{_where(source, text, list(e.absolute_path))}: {e.message}")
    D = raw["dimension"]
    families = []
    for fi, fam in enumerate(raw["families"]):
        maps = []
        for mi, m in enumerate(fam["maps"]):
            if len(m["matrix"]) != D * D:
                path = ["families", fi, "maps", mi, "matrix"]
                raise ConfigError(f"{_where(source, text, path)}: expected {D * D} entries, "
                                  f"got {len(m['matrix'])}")
            maps.append(AffineMap(np.array(m["matrix"], dtype=float).reshape(D, D), m["slot"]))
        families.append(IFSFamily(str(fam["label"]), tuple(maps)))
    sb = raw.get("sigma_bounds")
    try:
        catalog = Catalog(families, D, (sb["lower"], sb["upper"]) if sb else None, raw.get("slots"))
        gen = dict(raw["generator"])
        kind = gen.pop("kind")
        seed = gen.pop("seed", None)
        spec = GeneratorSpec(catalog, kind, gen, seed)
        spec.build()
        tr = raw.get("translations")
        if tr is not None:
            catalog.scheme.assignment(tr)
    except ConfigError as exc:
        raise type(exc)(f"{source}: {exc}") from None
    except KeyError as exc:
        raise ConfigError(f"{_where(source, text, ['generator'])}: "
                          f"missing generator parameter {exc.args[0]!r}") from None
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{_where(source, text, ['generator'])}: {exc}") from None
    return RunConfig(source, raw, catalog, spec, tr, canonical_digest(raw))


def load_config(source: str) -> RunConfig:
    """Read a config file, or a built-in fixture via ``example:NAME``."""
    if source.startswith("example:"):
        from .examples import example_catalog, to_config

        ex = example_catalog(source.split(":", 1)[1])
        return config_from_dict(to_config(ex), source)
    try:
        with open(source, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {source}: {exc.strerror}") from None
    return parse_config(text, source)
