import json
import logging
from typing import Any, Dict, List

from utils.chain_model import END_KINDS, JUNCTION_KINDS
from utils.errors import ConfigError, ParseError, SchemaError

logger = logging.getLogger(__name__)


class ConfigLoader:
    """Read a chain document from JSON and check it against the known fields."""

    def __init__(self, strict: bool = True):
        self.strict = strict
        self.allowed_fields = {
            "document": {"name", "description", "segments", "junctions", "left_end", "right_end", "analysis"},
            "segment": {"length", "rho", "ei"},
            "junction": {"kind", "K", "controller"},
            "end": {"kind", "K", "W_B", "W_C", "controller"},
            "controller": {"A_c", "B_c", "C_c", "D_c"},
            "analysis": {"cells", "T", "dt", "beta_min", "beta_max", "samples"},
        }
        self.required_fields = {
            "document": ["segments", "left_end", "right_end"],
            "segment": ["length", "rho", "ei"],
            "junction": ["kind"],
            "end": ["kind"],
            "controller": ["D_c"],
        }
        self.warnings: List[str] = []

    def load(self, path: str) -> Dict[str, Any]:
        try:
            with open(path, "r", encoding="utf-8") as handle:
                text = handle.read()
        except OSError as exc:
            raise ConfigError(f"cannot read {path}: {exc.strerror or exc}") from exc
        return self.parse(text)

    def parse(self, text: str) -> Dict[str, Any]:
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ParseError(exc.msg, exc.lineno, exc.colno) from exc
        if not isinstance(doc, dict):
            raise SchemaError("document", "top level must be a JSON object")
        self.validate(doc)
        return doc

    def validate(self, doc: Dict[str, Any]) -> None:
        self._check_fields(doc, "document", "document")

        segments = doc["segments"]
        if not isinstance(segments, list):
            raise SchemaError("segments", "must be a list")
        for i, seg in enumerate(segments):
            self._check_fields(seg, "segment", f"segments[{i}]")

        junctions = doc.get("junctions", [])
        if not isinstance(junctions, list):
            raise SchemaError("junctions", "must be a list")
        for i, junction in enumerate(junctions):
            where = f"junctions[{i}]"
            self._check_fields(junction, "junction", where)
            if junction["kind"] not in JUNCTION_KINDS or isinstance(junction["kind"], bool):
                raise SchemaError(f"{where}.kind", f"must be one of {list(JUNCTION_KINDS)}, got {junction['kind']!r}")
            if "controller" in junction:
                self._check_fields(junction["controller"], "controller", f"{where}.controller")

        for side in ("left_end", "right_end"):
            end = doc[side]
            self._check_fields(end, "end", side)
            if end["kind"] not in END_KINDS:
                raise SchemaError(f"{side}.kind", f"must be one of {list(END_KINDS)}, got {end['kind']!r}")
            if "controller" in end:
                self._check_fields(end["controller"], "controller", f"{side}.controller")

        if "analysis" in doc:
            self._check_fields(doc["analysis"], "analysis", "analysis")

    def _check_fields(self, node: Any, section: str, where: str) -> None:
        if not isinstance(node, dict):
            raise SchemaError(where, "must be a JSON object")

        missing = [key for key in self.required_fields.get(section, []) if key not in node]
        if missing:
            raise SchemaError(f"{where}.{missing[0]}", "missing required field")

        unknown = sorted(set(node) - self.allowed_fields[section])
        for key in unknown:
            if self.strict:
                raise SchemaError(f"{where}.{key}", "unknown field")
            message = f"{where}.{key}: unknown field ignored"
            self.warnings.append(message)
            logger.warning(message)
            del node[key]


def load_config(path: str, strict: bool = True) -> Dict[str, Any]:
    """Parsed chain document; unknown fields raise (strict) or are dropped with a warning."""
    return ConfigLoader(strict=strict).load(path)


def analysis_defaults(doc: Dict[str, Any]) -> Dict[str, Any]:
    return dict(doc.get("analysis", {}))
