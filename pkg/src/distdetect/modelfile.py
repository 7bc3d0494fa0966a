"""Reader for the plain-text model file.

Sections ``[net]``, ``[game]`` and one ``[sensor]`` per sensor, each holding
``key = value`` lines.  Matrix rows are separated by ``;``.  ``#`` starts a
comment.  See README.md for the full schema.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

from .model import ModelError, NetModel, SensorModel, GeometricPrior, validate_kernel
from .simple_game import (GameError, SimpleGame, dictator, from_minimal, majority, unanimity,
                          weighted_threshold)

SENSOR_KEYS = {"name", "states", "x0", "pi0", "p", "c", "pre", "post"}
NET_KEYS = {"horizon"}
GAME_KEYS = {"preset", "weights", "quota", "minimal"}


class ModelFileError(ValueError):
    def __init__(self, path, line: int, message: str):
        super().__init__(f"{path}:{line}: {message}")
        self.path = path
        self.line = line


@dataclass
class ModelSpec:
    net: NetModel
    game: SimpleGame | None
    names: list


def _sections(text: str, path):
    sections = []
    for no, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            sections.append((line[1:-1].strip().lower(), no, {}))
            continue
        if "=" not in line:
            raise ModelFileError(path, no, f"expected 'key = value', got {line!r}")
        if not sections:
            raise ModelFileError(path, no, "key outside of any section")
        key, value = (s.strip() for s in line.split("=", 1))
        body = sections[-1][2]
        if key in body:
            raise ModelFileError(path, no, f"duplicate key {key!r}")
        body[key] = (value, no)
    return sections


def _number(entry, path, kind=float):
    value, no = entry
    try:
        return kind(value)
    except ValueError:
        raise ModelFileError(path, no, f"not a valid {kind.__name__}: {value!r}") from None


def _matrix(entry, path):
    value, no = entry
    try:
        return [[float(t) for t in row.split()] for row in value.split(";")]
    except ValueError:
        raise ModelFileError(path, no, f"bad matrix {value!r}") from None


def _require(body, key, sec_line, path, section):
    if key not in body:
        raise ModelFileError(path, sec_line, f"[{section}] block is missing {key!r}")
    return body[key]


def _sensor(body, sec_line, path) -> SensorModel:
    for key, (_, no) in body.items():
        if key not in SENSOR_KEYS:
            raise ModelFileError(path, no, f"unknown sensor key {key!r}")
    states = _number(_require(body, "states", sec_line, path, "sensor"), path, int)
    kernels = []
    for key in ("pre", "post"):
        entry = _require(body, key, sec_line, path, "sensor")
        rows = _matrix(entry, path)
        if len(rows) != states or any(len(r) != states for r in rows):
            raise ModelFileError(path, entry[1], f"{key} must be {states}x{states}")
        try:
            kernels.append(validate_kernel(rows))
        except ModelError as exc:
            raise ModelFileError(path, entry[1], f"{key}: {exc}") from None
    values = {}
    for key, kind in (("pi0", float), ("p", float), ("c", float), ("x0", int)):
        entry = body.get(key, ("0", sec_line)) if key == "x0" else _require(body, key, sec_line, path, "sensor")
        values[key] = (_number(entry, path, kind), entry[1])
    try:
        prior = GeometricPrior(values["pi0"][0], values["p"][0])
    except ModelError as exc:
        line = values["pi0"][1] if "pi0" in str(exc) else values["p"][1]
        raise ModelFileError(path, line, str(exc)) from None
    try:
        return SensorModel(kernels[0], kernels[1], prior, values["c"][0], values["x0"][0])
    except ModelError as exc:
        line = values["c"][1] if "delay" in str(exc) else values["x0"][1]
        raise ModelFileError(path, line, str(exc)) from None


def _game(body, sec_line, path, p) -> SimpleGame:
    for key, (_, no) in body.items():
        if key not in GAME_KEYS:
            raise ModelFileError(path, no, f"unknown game key {key!r}")
    try:
        if "minimal" in body:
            value, no = body["minimal"]
            try:
                coalitions = [[int(t) for t in c.replace(",", " ").split()] for c in value.split(";")]
            except ValueError:
                raise ModelFileError(path, no, f"bad coalition list {value!r}") from None
            return from_minimal(p, coalitions)
        value, no = _require(body, "preset", sec_line, path, "game")
        name, _, arg = value.partition(":")
        if name == "majority":
            return majority(p)
        if name == "unanimity":
            return unanimity(p)
        if name == "dictator":
            return dictator(p, int(arg or 0))
        if name == "threshold":
            weights = [float(t) for t in _require(body, "weights", sec_line, path, "game")[0].split()]
            if len(weights) != p:
                raise ModelFileError(path, body["weights"][1], f"need {p} weights")
            return weighted_threshold(weights, _number(_require(body, "quota", sec_line, path, "game"), path))
        raise ModelFileError(path, no, f"unknown preset {value!r}")
    except (GameError, ValueError) as exc:
        if isinstance(exc, ModelFileError):
            raise
        line = next(iter(body.values()))[1] if body else sec_line
        raise ModelFileError(path, line, str(exc)) from None


def parse_model(text: str, path="<model>") -> ModelSpec:
    sensors, names = [], []
    horizon = None
    game_block = None
    for section, no, body in _sections(text, path):
        if section == "sensor":
            sensors.append(_sensor(body, no, path))
            names.append(body.get("name", (f"s{len(names)}", no))[0])
        elif section == "net":
            for key, (_, kno) in body.items():
                if key not in NET_KEYS:
                    raise ModelFileError(path, kno, f"unknown net key {key!r}")
            horizon = _number(_require(body, "horizon", no, path, "net"), path, int)
            if horizon < 0:
                raise ModelFileError(path, body["horizon"][1], "horizon must be >= 0")
        elif section == "game":
            game_block = (body, no)
        else:
            raise ModelFileError(path, no, f"unknown section [{section}]")
    if not sensors:
        raise ModelFileError(path, 1, "no [sensor] blocks")
    if horizon is None:
        raise ModelFileError(path, 1, "no [net] block with a horizon")
    game = _game(*game_block, path, len(sensors)) if game_block else None
    return ModelSpec(NetModel(sensors, horizon), game, names)


def load_model(path) -> ModelSpec:
    path = Path(path)
    return parse_model(path.read_text(), str(path))
