"""Flat key=value configuration shared by all CLI commands.

One file drives generation, mining, training, kernel, and benchmark knobs;
unknown keys are rejected so typos fail loudly. Values keep their defaults
unless overridden, and `seed` may additionally be overridden on the command
line.
"""

from __future__ import annotations

from .synth import GenConfig
from .training import TrainConfig


class ConfigError(ValueError):
    pass


def _bool(raw: str) -> bool:
    low = raw.lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"expected a boolean, got {raw!r}")


def _floats(raw: str) -> tuple[float, ...]:
    return tuple(float(x) for x in raw.split(",") if x.strip())


def _ints(raw: str) -> tuple[int, ...]:
    return tuple(int(x) for x in raw.split(",") if x.strip())


def _strs(raw: str) -> tuple[str, ...]:
    return tuple(x.strip() for x in raw.split(",") if x.strip())


def _opt_int(raw: str) -> int | None:
    return None if raw.strip() == "" else int(raw)


def _opt_float(raw: str) -> float | None:
    return None if raw.strip() == "" else float(raw)


# key -> (parser, default)
SCHEMA: dict[str, tuple] = {
    # generator
    "count": (int, 100),
    "seed": (int, 0),
    "rooms_min": (int, 3),
    "rooms_max": (int, 9),
    "extra_door_prob": (float, 0.2),
    "wall_edge_prob": (float, 0.5),
    "category_weights": (_floats, (1.0,) * 8),
    "train_fraction": (float, 0.8),
    "folds": (int, 4),
    # mining
    "per_anchor": (int, 4),
    "mine_top": (int, 50),
    "mine_resolution": (int, 64),
    "anchor_limit": (_opt_int, None),
    # model / training
    "mode": (str, "GKN"),
    "d": (int, 64),
    "L": (int, 5),
    "d_g": (_opt_int, None),
    "lr": (float, 1e-4),
    "batch_size": (int, 64),
    "max_epochs": (int, 200),
    "patience": (int, 10),
    "margin": (float, 0.1),
    "weight_decay": (float, 1e-2),
    "beta1": (float, 0.9),
    "beta2": (float, 0.999),
    "eps": (float, 1e-8),
    "use_norm": (_bool, True),
    "val_fraction": (float, 0.1),
    # kernel
    "mu": (_opt_float, None),
    "delta": (int, 4),
    # evaluation
    "raster_resolution": (int, 128),
    "eval_top": (int, 50),
    "gt": (str, "sged"),
    # benchmark
    "bench_pairs": (int, 10000),
    "bench_runs": (int, 5),
    "bench_warmup": (int, 1),
    # sweep
    "sweep_modes": (_strs, ("GKN", "GEN")),
    "sweep_d": (_ints, (8, 16, 32, 64)),
    "sweep_L": (_ints, (5,)),
}


def load_config(path: str | None) -> dict:
    values = {key: default for key, (_, default) in SCHEMA.items()}
    if path is None:
        return values
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.strip()
            if not text or text.startswith("#"):
                continue
            if "=" not in text:
                raise ConfigError(f"{path}:{lineno}: expected key=value, got {text!r}")
            key, _, raw = text.partition("=")
            key = key.strip()
            raw = raw.strip()
            if key not in SCHEMA:
                raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
            parser, _ = SCHEMA[key]
            try:
                values[key] = parser(raw)
            except (ValueError, TypeError) as exc:
                raise ConfigError(f"{path}:{lineno}: bad value for {key}: {exc}") from exc
    return values


def gen_config(values: dict) -> GenConfig:
    return GenConfig(
        count=values["count"],
        seed=values["seed"],
        rooms_min=values["rooms_min"],
        rooms_max=values["rooms_max"],
        extra_door_prob=values["extra_door_prob"],
        wall_edge_prob=values["wall_edge_prob"],
        category_weights=values["category_weights"],
    )


def train_config(values: dict) -> TrainConfig:
    return TrainConfig(
        mode=values["mode"],
        d=values["d"],
        L=values["L"],
        d_g=values["d_g"],
        lr=values["lr"],
        batch_size=values["batch_size"],
        max_epochs=values["max_epochs"],
        patience=values["patience"],
        margin=values["margin"],
        weight_decay=values["weight_decay"],
        beta1=values["beta1"],
        beta2=values["beta2"],
        eps=values["eps"],
        seed=values["seed"],
        use_norm=values["use_norm"],
        val_fraction=values["val_fraction"],
        delta=values["delta"],
    )
