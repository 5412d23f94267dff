"""Experiment configuration: one strict INI file plus dotted-key overrides.

Every run resolves to a full (section, key) -> value map; unknown sections
or keys are rejected, values are parsed against the declared type, and the
resolved map is echoed back to disk so any run can be reproduced from its
echo file alone.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass
from pathlib import Path
from typing import Any

from .training import TrainConfig


class ConfigError(Exception):
    """Invalid configuration; CLI maps this to exit code 2."""


def _bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("true", "yes", "1", "on"):
        return True
    if lowered in ("false", "no", "0", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _int_list(text: str) -> list[int]:
    return [int(part) for part in text.split(",") if part.strip()]


def _float_list(text: str) -> list[float]:
    return [float(part) for part in text.split(",") if part.strip()]


def _str_list(text: str) -> list[str]:
    return [part.strip() for part in text.split(",") if part.strip()]


# (parser, default) per key; parsers also serve as type documentation.
SCHEMA: dict[str, dict[str, tuple[Any, Any]]] = {
    "experiment": {
        "task": (str, "node-class"),
        "models": (_str_list, ["qgat"]),
        "seeds": (_int_list, [0]),
    },
    "data": {
        "source": (str, "synth"),  # synth | csv | json
        "path": (str, ""),
        "n_per_class": (int, 30),
        "n_classes": (int, 2),
        "p_in": (float, 0.3),
        "p_out": (float, 0.02),
        "feature_dim": (int, 8),
        "class_sep": (float, 1.0),
        "seed": (int, 0),
    },
    "model": {
        "hidden_dims": (_int_list, [8, 8]),
        "heads": (_int_list, [4, 4, 4]),
        "n_qubits": (int, 4),
        "entangling_layers": (int, 2),
        "dropout": (float, 0.5),
        "merge": (str, "concat"),
        "activation": (str, "elu"),
        "separate_value_weights": (_bool, False),
    },
    "training": {
        "lr": (float, 2e-3),
        "lr_min": (float, 0.0),
        "weight_decay": (float, 5e-4),
        "epochs": (int, 200),
        "patience": (int, 30),
    },
    "noise": {
        "kind": (str, "feature"),  # feature | structural
        "levels": (_float_list, []),  # empty -> protocol grid for the kind
    },
    "linkpred": {
        "frac_val": (float, 0.1),
        "frac_test": (float, 0.2),
        "neg_ratio": (int, 1),
        "hits_k": (int, 50),
    },
    "gradcheck": {
        "qubits": (_int_list, [2, 3, 4]),
        "layers": (_int_list, [1, 2, 3]),
        "trials": (int, 10),
        "threshold": (float, 1e-4),
    },
}


def _format_value(value: Any) -> str:
    if isinstance(value, list):
        return ",".join(str(v) for v in value)
    return str(value)


@dataclass
class Config:
    values: dict[str, dict[str, Any]]

    def get(self, section: str, key: str) -> Any:
        return self.values[section][key]

    def set(self, section: str, key: str, raw: str) -> None:
        if section not in SCHEMA or key not in SCHEMA[section]:
            raise ConfigError(f"unknown configuration key {section}.{key}")
        parser, _ = SCHEMA[section][key]
        try:
            self.values[section][key] = parser(raw)
        except ValueError as exc:
            raise ConfigError(f"bad value for {section}.{key}: {exc}") from None

    def echo(self, path: str | Path) -> None:
        lines = ["# effective configuration (machine-written; reusable via --config)"]
        for section, entries in self.values.items():
            lines.append(f"[{section}]")
            for key, value in entries.items():
                lines.append(f"{key} = {_format_value(value)}")
            lines.append("")
        Path(path).write_text("\n".join(lines))


def default_config() -> Config:
    return Config({s: {k: d for k, (_, d) in entries.items()} for s, entries in SCHEMA.items()})


def parse_config(path: str | Path | None) -> Config:
    cfg = default_config()
    if path is None:
        return cfg
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        with open(path) as fh:
            parser.read_file(fh)
    except (configparser.Error, UnicodeDecodeError) as exc:
        raise ConfigError(f"{path}: {exc}") from None
    for section in parser.sections():
        if section not in SCHEMA:
            raise ConfigError(f"{path}: unknown section [{section}]")
        for key, raw in parser.items(section):
            cfg.set(section, key, raw)
    return cfg


def apply_overrides(cfg: Config, overrides: list[str]) -> None:
    """Apply ``section.key=value`` strings on top of the parsed file."""
    for item in overrides:
        if "=" not in item or "." not in item.split("=", 1)[0]:
            raise ConfigError(f"override must look like section.key=value, got {item!r}")
        dotted, raw = item.split("=", 1)
        section, key = dotted.split(".", 1)
        cfg.set(section.strip(), key.strip(), raw.strip())


def make_train_config(cfg: Config, model: str, seed: int, task: str | None = None) -> TrainConfig:
    tc = TrainConfig(
        learning_rate=cfg.get("training", "lr"),
        lr_min=cfg.get("training", "lr_min"),
        weight_decay=cfg.get("training", "weight_decay"),
        epochs=cfg.get("training", "epochs"),
        patience=cfg.get("training", "patience"),
        hidden_dims=list(cfg.get("model", "hidden_dims")),
        heads_per_layer=list(cfg.get("model", "heads")),
        n_qubits=cfg.get("model", "n_qubits"),
        entangling_layers=cfg.get("model", "entangling_layers"),
        dropout=cfg.get("model", "dropout"),
        merge=cfg.get("model", "merge"),
        task=task or cfg.get("experiment", "task"),
        seed=seed,
        model=model,
        activation=cfg.get("model", "activation"),
        separate_value_weights=cfg.get("model", "separate_value_weights"),
    )
    try:
        tc.validate()
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return tc
