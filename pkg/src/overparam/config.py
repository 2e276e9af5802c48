"""Flat key=value run configuration: UTF-8, `#` comments, unknown keys rejected."""

from __future__ import annotations

from dataclasses import dataclass, fields, replace
from typing import Any

MODEL_FAMILIES = ("linear", "glm", "lowrank", "net")
OPTIMIZER_KINDS = ("gd", "sgd", "pl")
REGIMES = ("bounded", "smooth")


class ConfigError(ValueError):
    """Malformed configuration file or value."""


@dataclass(frozen=True)
class RunConfig:
    """One experiment: model family and sizes, optimizer, diagnostics, output.

    String-typed numeric fields accept the literal "auto"; seeds for data
    generation and for the optimizer are independent knobs.
    """

    family: str = "linear"
    n: int = 10
    p: int = 20
    d: int = 0
    r: int = 0
    k: int = 0
    activation: str = "tanh_linear"
    activation_scale: float = 0.3
    identity_X: bool = False  # X = eye(n, p), zero labels, theta0 = ones
    data_seed: int = 0

    optimizer: str = "gd"
    eta: str = "auto"
    iters: int = 200
    tol: str = "auto"
    opt_seed: int = 0
    record_every: int = 1

    probe_samples: int = 64
    probe_radius: str = "auto"
    nu: float = 8.0
    lam: float = 0.5
    regime: str = "bounded"
    anchor_count: str = "auto"
    anchors: bool = False

    out_dir: str = ""

    def __post_init__(self):
        # normalize auto-or-number fields to their canonical string form
        for name in ("eta", "tol", "probe_radius", "anchor_count"):
            value = getattr(self, name)
            if isinstance(value, float):
                object.__setattr__(self, name, f"{value:.17g}")
            elif isinstance(value, int) and not isinstance(value, bool):
                object.__setattr__(self, name, str(value))
        if self.family not in MODEL_FAMILIES:
            raise ConfigError(f"model.family must be one of {MODEL_FAMILIES}, got {self.family!r}")
        if self.optimizer not in OPTIMIZER_KINDS:
            raise ConfigError(
                f"optimizer.kind must be one of {OPTIMIZER_KINDS}, got {self.optimizer!r}"
            )
        if self.regime not in REGIMES:
            raise ConfigError(f"diag.regime must be one of {REGIMES}, got {self.regime!r}")
        for name in ("eta", "tol", "probe_radius"):
            _parse_auto_float(getattr(self, name), name)
        _parse_auto_int(self.anchor_count, "anchor_count")
        if self.iters < 1:
            raise ConfigError(f"optimizer.iters must be >= 1, got {self.iters}")
        if not 0.0 < self.lam <= 1.0:
            raise ConfigError(f"diag.lambda must lie in (0, 1], got {self.lam}")


# file key -> (dataclass field, python type)
_KEYS: dict[str, tuple[str, type]] = {
    "model.family": ("family", str),
    "model.n": ("n", int),
    "model.p": ("p", int),
    "model.d": ("d", int),
    "model.r": ("r", int),
    "model.k": ("k", int),
    "model.activation": ("activation", str),
    "model.activation_scale": ("activation_scale", float),
    "model.identity": ("identity_X", bool),
    "model.data_seed": ("data_seed", int),
    "optimizer.kind": ("optimizer", str),
    "optimizer.eta": ("eta", str),
    "optimizer.iters": ("iters", int),
    "optimizer.tol": ("tol", str),
    "optimizer.seed": ("opt_seed", int),
    "optimizer.record_every": ("record_every", int),
    "diag.probe_samples": ("probe_samples", int),
    "diag.probe_radius": ("probe_radius", str),
    "diag.nu": ("nu", float),
    "diag.lambda": ("lam", float),
    "diag.regime": ("regime", str),
    "diag.anchor_count": ("anchor_count", str),
    "diag.anchors": ("anchors", bool),
    "output.dir": ("out_dir", str),
}
_FIELD_TO_KEY = {field: key for key, (field, _) in _KEYS.items()}


def _parse_auto_float(text: str, name: str) -> float | None:
    if text == "auto":
        return None
    try:
        return float(text)
    except ValueError as exc:
        raise ConfigError(f"{name} must be a number or 'auto', got {text!r}") from exc


def _parse_auto_int(text: str, name: str) -> int | None:
    if text == "auto":
        return None
    try:
        return int(text)
    except ValueError as exc:
        raise ConfigError(f"{name} must be an integer or 'auto', got {text!r}") from exc


def _coerce(key: str, raw: str) -> Any:
    field_name, typ = _KEYS[key]
    if typ is bool:
        if raw in ("on", "true", "1", "yes"):
            return True
        if raw in ("off", "false", "0", "no"):
            return False
        raise ConfigError(f"{key} must be on/off, got {raw!r}")
    if typ is int:
        try:
            return int(raw)
        except ValueError as exc:
            raise ConfigError(f"{key} must be an integer, got {raw!r}") from exc
    if typ is float:
        try:
            return float(raw)
        except ValueError as exc:
            raise ConfigError(f"{key} must be a number, got {raw!r}") from exc
    return raw


def parse_config_text(text: str) -> RunConfig:
    values: dict[str, Any] = {}
    for lineno, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw_line!r}")
        key, raw = (part.strip() for part in line.split("=", 1))
        if key not in _KEYS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        field_name, _ = _KEYS[key]
        if field_name in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        values[field_name] = _coerce(key, raw)
    try:
        return RunConfig(**values)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path) -> RunConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config_text(fh.read())


def config_to_text(cfg: RunConfig) -> str:
    """Serialize with every key present, in canonical order; round-trips losslessly."""
    lines = []
    for f in fields(cfg):
        key = _FIELD_TO_KEY[f.name]
        value = getattr(cfg, f.name)
        if isinstance(value, bool):
            text = "on" if value else "off"
        elif isinstance(value, float):
            text = f"{value:.17g}"
        else:
            text = str(value)
        lines.append(f"{key} = {text}")
    return "\n".join(lines) + "\n"


def save_config(cfg: RunConfig, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(config_to_text(cfg))


def apply_overrides(cfg: RunConfig, overrides: dict[str, str]) -> RunConfig:
    """Apply `file-key -> raw string` overrides (same validation as parsing)."""
    updates: dict[str, Any] = {}
    for key, raw in overrides.items():
        if key not in _KEYS:
            raise ConfigError(f"unknown config key {key!r}")
        field_name, _ = _KEYS[key]
        updates[field_name] = _coerce(key, raw)
    return replace(cfg, **updates)


def eta_value(cfg: RunConfig) -> float | None:
    return _parse_auto_float(cfg.eta, "optimizer.eta")


def tol_value(cfg: RunConfig) -> float | None:
    return _parse_auto_float(cfg.tol, "optimizer.tol")


def probe_radius_value(cfg: RunConfig) -> float | None:
    return _parse_auto_float(cfg.probe_radius, "diag.probe_radius")


def anchor_count_value(cfg: RunConfig) -> int | None:
    return _parse_auto_int(cfg.anchor_count, "diag.anchor_count")
