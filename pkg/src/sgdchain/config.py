"""Run specifications and their flat ``key = value`` file format.

A file looks like::

    # comments start with '#'
    objective.name = simplified-bz
    objective.dim = 10
    noise.kind = student_t
    sgd.eta = 0.3
    sgd.theta0 = 1.0, 1.0
    test.functions = norm, sigmoid_f
    output.dir = out

Floats are written with ``repr`` and lists as comma-separated items, so
``parse_config(format_config(spec)) == spec``. Unset optional values are
simply omitted.
"""

from __future__ import annotations

import typing
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional


@dataclass
class ObjectiveSpec:
    name: str = "quadratic"
    dim: int = 1
    lam: float = 0.1
    nu: float = 1.0
    R: Optional[float] = None
    center: Optional[List[float]] = None
    dataset: Optional[str] = None


@dataclass
class NoiseSpec:
    kind: str = "gaussian"
    sigma: float = 1.0
    df: float = 5.0
    scale: float = 1.0
    replace: bool = True


@dataclass
class SgdSpec:
    eta: float = 0.1
    n_iters: int = 10_000
    burn_in: int = 0
    theta0: List[float] = field(default_factory=lambda: [0.0])
    seed: int = 0
    batch_size: int = 2


@dataclass
class TestSpec:
    __test__ = False

    functions: List[str] = field(default_factory=lambda: ["norm"])


@dataclass
class ExperimentSpec:
    N: int = 100
    etas: Optional[List[float]] = None
    theta0_alt: Optional[List[float]] = None
    skew_tol: float = 0.15
    kurt_tol: float = 0.3
    level: float = 0.95
    strategy: str = "batch-means"
    batch_len: Optional[int] = None


@dataclass
class OutputSpec:
    dir: str = "out"


@dataclass
class RunSpec:
    objective: ObjectiveSpec = field(default_factory=ObjectiveSpec)
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    sgd: SgdSpec = field(default_factory=SgdSpec)
    test: TestSpec = field(default_factory=TestSpec)
    experiment: ExperimentSpec = field(default_factory=ExperimentSpec)
    output: OutputSpec = field(default_factory=OutputSpec)


SECTIONS = typing.get_type_hints(RunSpec)


class ConfigError(ValueError):
    """Malformed config file or value."""


def _hints(cls):
    return typing.get_type_hints(cls)


def _unwrap(tp):
    """(base type, is_list) for a field annotation, dropping Optional."""
    args = typing.get_args(tp)
    if typing.get_origin(tp) is typing.Union:
        tp = next(a for a in args if a is not type(None))
    if typing.get_origin(tp) in (list, List):
        return typing.get_args(tp)[0], True
    return tp, False


def _format_scalar(v, base) -> str:
    if base is bool:
        return "true" if v else "false"
    if base is float:
        return repr(float(v))
    return str(v)


def _parse_scalar(text: str, base, key: str):
    text = text.strip()
    try:
        if base is bool:
            low = text.lower()
            if low in ("true", "yes", "1"):
                return True
            if low in ("false", "no", "0"):
                return False
            raise ValueError(text)
        if base is int:
            return int(text)
        if base is float:
            return float(text)
        return text
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {text!r} as {base.__name__}") from None


def format_config(spec: RunSpec) -> str:
    lines = []
    for section, cls in SECTIONS.items():
        obj = getattr(spec, section)
        for name, tp in _hints(cls).items():
            value = getattr(obj, name)
            if value is None:
                continue
            base, is_list = _unwrap(tp)
            if is_list:
                text = ", ".join(_format_scalar(v, base) for v in value)
            else:
                text = _format_scalar(value, base)
            lines.append(f"{section}.{name} = {text}")
    return "\n".join(lines) + "\n"


def set_value(spec: RunSpec, key: str, text: str) -> None:
    """Parse ``text`` for the dotted ``key`` and store it in ``spec``."""
    section, _, name = key.partition(".")
    if section not in SECTIONS:
        raise ConfigError(f"unknown section in key {key!r}")
    hints = _hints(SECTIONS[section])
    if name not in hints:
        raise ConfigError(f"unknown key {key!r}")
    base, is_list = _unwrap(hints[name])
    if is_list:
        items = [t for t in text.split(",")] if text.strip() else []
        value = [_parse_scalar(t, base, key) for t in items]
    else:
        value = _parse_scalar(text, base, key)
    setattr(getattr(spec, section), name, value)


def parse_config(text: str) -> RunSpec:
    spec = RunSpec()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        set_value(spec, key.strip(), value.strip())
    return spec


def load_config(path) -> RunSpec:
    return parse_config(Path(path).read_text())


def save_config(spec: RunSpec, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(format_config(spec))
    return path
