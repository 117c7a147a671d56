"""Flat key=value configuration files mirrored by CLI flags.

Every key in a config file corresponds to a command-line flag of the
same name (underscores become dashes); a value given on the command
line wins over the file, which wins over the built-in default.
"""

from __future__ import annotations

from pathlib import Path


def parse_bool(value: str) -> bool:
    v = value.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {value!r}")


# key -> (type, default). ``None`` defaults mean "required if the command
# needs it" (paths) or "derived elsewhere" (channels falls back to the
# architecture default for the chosen variant).
OPTIONS = {
    "data": (str, None),
    "task": (str, "rv"),
    "subset": (str, "3m"),
    "arch": (str, "dual"),
    "channels": (int, None),
    "depth": (int, 4),
    "kernel": (int, 9),
    "seed": (int, 0),
    "out": (str, "runs"),
    "window": (int, 8),
    "epochs": (int, 100),
    "batch_size": (int, 2),
    "eval_every": (int, 10),
    "lr_start": (float, 1e-4),
    "lr_peak": (float, 1e-2),
    "warmup_epochs": (int, 10),
    "weight_decay": (float, 1e-2),
    "skeleton_iters": (int, 10),
    "augment": (parse_bool, True),
}


def parse_config_file(path) -> dict:
    """Read ``key=value`` lines; '#' starts a comment, blanks are skipped."""
    values = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected key=value, got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in OPTIONS:
            raise ValueError(f"{path}:{lineno}: unknown key {key!r}")
        caster, _ = OPTIONS[key]
        values[key] = caster(value)
    return values


def resolve_settings(cli_values: dict, config_path=None) -> dict:
    """Layer defaults, config file, then explicit CLI values."""
    settings = {key: default for key, (_, default) in OPTIONS.items()}
    if config_path is not None:
        settings.update(parse_config_file(config_path))
    for key, value in cli_values.items():
        if key in OPTIONS and value is not None:
            settings[key] = value
    return settings
