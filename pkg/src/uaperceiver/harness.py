"""Run orchestration: configs, checkpoints, training runs, reports.

A run is fully described by a plain-text ``key = value`` config file.
Training writes one checkpoint per predictor member, a JSON manifest,
and a step log into the output directory; evaluation rebuilds the
predictor from disk and emits a metrics report. Everything downstream
of (config, seeds) is bit-reproducible.
"""

from __future__ import annotations

import dataclasses
import json
import struct
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import metrics as M
from .data import (
    ChannelStats,
    Dataset,
    channel_stats,
    load_cifar,
    standardize,
    synth_dataset,
)
from .errors import CompatibilityError, ConfigError, FormatError
from .model import PerceiverConfig
from .optim import AdamWSettings
from .params import ParamStore
from .rng import derive_seed
from .schedules import LRSchedule
from .strategies import (
    Predictor,
    TrainRunLog,
    TrainSettings,
    deep_ensemble_train,
    fast_train,
    snapshot_train,
    swa_train,
    train_member,
)
from .tensor import Tensor

STRATEGIES = ("single", "deep", "swa", "snapshot", "fast", "mc")

CHECKPOINT_MAGIC = b"UAPC"
CHECKPOINT_VERSION = 1


# ---- configuration ---------------------------------------------------


@dataclass(frozen=True)
class RunConfig:
    # model
    height: int = 16
    width: int = 16
    channels: int = 3
    num_classes: int = 3
    latent_count: int = 32
    latent_dim: int = 64
    byte_dim: int = 64
    num_bands: int = 8
    max_frequency: float = 0.0
    depth_repeats: int = 2
    tower_layers: int = 2
    heads: int = 4
    pos_encoding: str = "fourier"
    share_tower_weights: bool = True
    share_cross_weights: bool = True
    # strategy
    strategy: str = "single"
    ensemble_size: int = 4
    train_steps: int = 100
    pretrain_steps: int = 20
    snapshot_cycles: int = 5
    snapshot_last: int = 0  # 0 = average all snapshots
    swa_steps: int = 10
    swa_cycle: int = 5
    fast_cycles: int = 4
    fast_steps_per_cycle: int = 5
    mc_delta: float = 0.1
    mc_samples: int = 30
    # optimizer (defaults mirror the reference experiment setup)
    learning_rate: float = 5e-6
    lr_low: float = 2e-6
    fast_lr_low: float = 5e-7
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    weight_decay: float = 0.01
    batch_size: int = 4
    # dataset
    dataset: str = "synth"
    data_path: str = ""
    test_path: str = ""
    synth_train: int = 2000
    synth_test: int = 500
    synth_noise: float = 0.02
    synth_contrast: float = 1.0
    normalize: bool = True
    data_seed: int = 0
    # run
    seed: int = 0
    out_dir: str = "runs/out"

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ConfigError(
                f"strategy must be one of {STRATEGIES}, got {self.strategy!r}"
            )
        if self.dataset not in ("synth", "cifar10", "cifar100"):
            raise ConfigError(f"unknown dataset {self.dataset!r}")

    def model_config(self) -> PerceiverConfig:
        return PerceiverConfig(
            height=self.height,
            width=self.width,
            channels=self.channels,
            num_classes=self.num_classes,
            latent_count=self.latent_count,
            latent_dim=self.latent_dim,
            byte_dim=self.byte_dim,
            num_bands=self.num_bands,
            max_frequency=self.max_frequency,
            depth_repeats=self.depth_repeats,
            tower_layers=self.tower_layers,
            heads=self.heads,
            pos_encoding=self.pos_encoding,
            share_tower_weights=self.share_tower_weights,
            share_cross_weights=self.share_cross_weights,
        )

    def train_settings(self, mc_delta: float = 0.0) -> TrainSettings:
        return TrainSettings(
            batch_size=self.batch_size,
            adamw=AdamWSettings(
                beta1=self.beta1,
                beta2=self.beta2,
                eps=self.adam_eps,
                weight_decay=self.weight_decay,
            ),
            mc_delta=mc_delta,
        )


_FIELDS = {f.name: f for f in dataclasses.fields(RunConfig)}


def _parse_value(key: str, raw: str):
    kind = _FIELDS[key].type
    raw = raw.strip()
    try:
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        if kind == "bool":
            if raw.lower() in ("true", "1", "yes"):
                return True
            if raw.lower() in ("false", "0", "no"):
                return False
            raise ValueError(raw)
        return raw
    except ValueError:
        raise ConfigError(f"bad value {raw!r} for config key {key!r}")


def parse_config(text: str, overrides: dict | None = None) -> RunConfig:
    """Parse ``key = value`` lines; '#' starts a comment. Unknown keys
    are an error; overrides (e.g. CLI flags) win over file values."""
    values: dict = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, raw = (part.strip() for part in line.split("=", 1))
        if key not in _FIELDS:
            raise ConfigError(f"unknown config key {key!r} (line {lineno})")
        values[key] = _parse_value(key, raw)
    for key, value in (overrides or {}).items():
        if key not in _FIELDS:
            raise ConfigError(f"unknown config key {key!r}")
        values[key] = value if not isinstance(value, str) else _parse_value(key, value)
    return RunConfig(**values)


def load_config(path, overrides: dict | None = None) -> RunConfig:
    return parse_config(Path(path).read_text(), overrides)


def config_echo(config: RunConfig) -> str:
    lines = [
        f"{f.name} = {getattr(config, f.name)}"
        for f in dataclasses.fields(RunConfig)
    ]
    return "\n".join(lines) + "\n"


# ---- checkpoints -----------------------------------------------------


def save_checkpoint(path, store: ParamStore, echo: str) -> None:
    """Binary layout: magic, u32 version, u64-length config echo, u32
    tensor count, manifest of (name, shape, payload offset), then a flat
    little-endian float64 payload. Round-trips bit-exactly."""
    echo_bytes = echo.encode("utf-8")
    manifest = bytearray()
    payload = bytearray()
    offset = 0
    count = 0
    for name, t in store.items():
        name_bytes = name.encode("utf-8")
        manifest += struct.pack("<I", len(name_bytes)) + name_bytes
        manifest += struct.pack("<I", t.data.ndim)
        for extent in t.data.shape:
            manifest += struct.pack("<Q", extent)
        manifest += struct.pack("<Q", offset)
        payload += t.data.astype("<f8").tobytes()
        offset += t.data.size * 8
        count += 1
    blob = (
        CHECKPOINT_MAGIC
        + struct.pack("<I", CHECKPOINT_VERSION)
        + struct.pack("<Q", len(echo_bytes))
        + echo_bytes
        + struct.pack("<I", count)
        + bytes(manifest)
        + bytes(payload)
    )
    Path(path).write_bytes(blob)


def load_checkpoint(path) -> tuple[ParamStore, str]:
    raw = Path(path).read_bytes()
    view = memoryview(raw)
    pos = 0

    def take(n):
        nonlocal pos
        if pos + n > len(raw):
            raise FormatError(f"{path}: truncated checkpoint")
        chunk = view[pos : pos + n]
        pos += n
        return chunk

    if bytes(take(4)) != CHECKPOINT_MAGIC:
        raise FormatError(f"{path}: bad magic, not a checkpoint")
    (version,) = struct.unpack("<I", take(4))
    if version != CHECKPOINT_VERSION:
        raise FormatError(f"{path}: unsupported checkpoint version {version}")
    (echo_len,) = struct.unpack("<Q", take(8))
    echo = bytes(take(echo_len)).decode("utf-8")
    (count,) = struct.unpack("<I", take(4))
    entries = []
    for _ in range(count):
        (name_len,) = struct.unpack("<I", take(4))
        name = bytes(take(name_len)).decode("utf-8")
        (ndim,) = struct.unpack("<I", take(4))
        shape = tuple(struct.unpack("<Q", take(8))[0] for _ in range(ndim))
        (offset,) = struct.unpack("<Q", take(8))
        entries.append((name, shape, offset))
    payload = view[pos:]
    store = ParamStore()
    for name, shape, offset in entries:
        size = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(
            payload, dtype="<f8", count=size, offset=offset
        ).reshape(shape)
        store.add(name, Tensor(arr.astype(np.float64)))
    return store, echo


# ---- datasets --------------------------------------------------------


def build_datasets(config: RunConfig) -> tuple[Dataset, Dataset]:
    """(train, test) pair described by the config, pre-normalization."""
    if config.dataset == "synth":
        train = synth_dataset(
            derive_seed(config.data_seed, 0), config.synth_train,
            resolution=config.height, num_classes=config.num_classes,
            channels=config.channels, noise=config.synth_noise,
            contrast=config.synth_contrast, split="train",
        )
        test = synth_dataset(
            derive_seed(config.data_seed, 1), config.synth_test,
            resolution=config.height, num_classes=config.num_classes,
            channels=config.channels, noise=config.synth_noise,
            contrast=config.synth_contrast, split="test",
        )
        return train, test
    if not config.data_path or not config.test_path:
        raise ConfigError("data_path and test_path are required for CIFAR runs")
    train = load_cifar(config.data_path, config.dataset)
    test = dataclasses.replace(load_cifar(config.test_path, config.dataset),
                               split="test")
    model = config.model_config()
    if (train.images.shape[1:] != (model.height, model.width, model.channels)
            or train.num_classes != model.num_classes):
        raise ConfigError("model dimensions do not match the CIFAR data")
    return train, test


# ---- training --------------------------------------------------------


@dataclass
class RunResult:
    predictor: Predictor
    logs: list[TrainRunLog]
    stats: ChannelStats | None
    out_dir: Path
    member_files: list[str]


def _train_predictor(config: RunConfig, train: Dataset
                     ) -> tuple[Predictor, list[TrainRunLog]]:
    model = config.model_config()
    settings = config.train_settings()
    lr = config.learning_rate
    constant = lambda steps: LRSchedule("constant", lr, lr, steps, 1)

    if config.strategy == "single":
        # the plain baseline: one model, no temperature scaling
        store, _, log = train_member(
            model, train, constant(config.train_steps), derive_seed(config.seed, 0),
            settings, fit_temperature=False,
        )
        return Predictor("single", model, [store]), [log]
    if config.strategy == "deep":
        return deep_ensemble_train(
            model, config.ensemble_size, config.seed, train,
            constant(config.train_steps), settings,
        )
    if config.strategy == "mc":
        store, _, log = train_member(
            model, train, constant(config.train_steps), derive_seed(config.seed, 0),
            config.train_settings(mc_delta=config.mc_delta), fit_temperature=False,
        )
        predictor = Predictor(
            "mc_dropout", model, [store], mc_delta=config.mc_delta,
            mc_samples=config.mc_samples, mc_seed=derive_seed(config.seed, 0xAB),
        )
        return predictor, [log]
    if config.strategy == "snapshot":
        predictor, log = snapshot_train(
            model, config.seed, train, config.train_steps, config.snapshot_cycles,
            lr, settings, average_last=config.snapshot_last or None,
        )
        return predictor, [log]

    # swa and fast both start from a conventionally pretrained solution
    pretrained, _, pre_log = train_member(
        model, train, constant(config.pretrain_steps), derive_seed(config.seed, 0),
        settings, fit_temperature=False,
    )
    if config.strategy == "swa":
        schedule = LRSchedule("swa_linear", lr, config.lr_low,
                              config.swa_steps, config.swa_cycle)
        predictor, log = swa_train(
            model, pretrained, train, schedule, derive_seed(config.seed, 1), settings
        )
    else:
        predictor, log = fast_train(
            model, pretrained, train, derive_seed(config.seed, 1),
            cycles=config.fast_cycles, alpha1=lr, alpha2=config.fast_lr_low,
            steps_per_cycle=config.fast_steps_per_cycle, settings=settings,
        )
    return predictor, [pre_log, log]


def run_train(config: RunConfig) -> RunResult:
    """Train the configured strategy and persist checkpoints + run log."""
    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    train, _ = build_datasets(config)
    stats = None
    if config.normalize:
        stats = channel_stats(train)
        train = standardize(train, stats)
    predictor, logs = _train_predictor(config, train)

    echo = config_echo(config)
    member_files = []
    for i, store in enumerate(predictor.members):
        fname = f"member_{i:03d}.ckpt"
        save_checkpoint(out_dir / fname, store, echo)
        member_files.append(fname)
    manifest = {
        "kind": predictor.kind,
        "members": member_files,
        "temperatures": predictor.temperatures,
        "mc_delta": predictor.mc_delta,
        "mc_samples": predictor.mc_samples,
        "mc_seed": predictor.mc_seed,
        "snapshot_last": predictor.snapshot_last,
        "seed": config.seed,
        "stats_mean": None if stats is None else list(stats.mean),
        "stats_std": None if stats is None else list(stats.std),
    }
    (out_dir / "predictor.json").write_text(json.dumps(manifest, indent=2))
    (out_dir / "config.txt").write_text(echo)
    log_payload = [
        {"member": i, "steps": log.steps, "captures": log.captures}
        for i, log in enumerate(logs)
    ]
    (out_dir / "run_log.json").write_text(json.dumps(log_payload))
    return RunResult(predictor, logs, stats, out_dir, member_files)


# ---- evaluation ------------------------------------------------------


@dataclass
class MetricsReport:
    variant: str
    ensemble_size: int
    seed: int
    accuracy: float  # fraction
    nll: float  # nats
    ece: float  # fraction
    brier: float
    temperatures: list[float] | None
    wall_clock_seconds: float
    config: dict

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def load_predictor(run_dir) -> tuple[Predictor, RunConfig, ChannelStats | None]:
    run_dir = Path(run_dir)
    manifest = json.loads((run_dir / "predictor.json").read_text())
    members = []
    echo = None
    for fname in manifest["members"]:
        store, member_echo = load_checkpoint(run_dir / fname)
        if echo is None:
            echo = member_echo
        elif member_echo != echo:
            raise CompatibilityError(f"{fname}: config echo differs between members")
        members.append(store)
    config = parse_config(echo)
    predictor = Predictor(
        manifest["kind"], config.model_config(), members,
        temperatures=manifest["temperatures"], mc_delta=manifest["mc_delta"],
        mc_samples=manifest["mc_samples"], mc_seed=manifest["mc_seed"],
        snapshot_last=manifest["snapshot_last"],
    )
    stats = None
    if manifest["stats_mean"] is not None:
        stats = ChannelStats(np.array(manifest["stats_mean"]),
                             np.array(manifest["stats_std"]))
    return predictor, config, stats


def evaluate_predictor(predictor: Predictor, config: RunConfig,
                       stats: ChannelStats | None, test: Dataset) -> MetricsReport:
    start = time.perf_counter()
    if stats is not None:
        test = standardize(test, stats)
    probs = predictor.probabilities(test.images)
    batch = M.EvalBatch(probs, test.labels)
    elapsed = time.perf_counter() - start
    return MetricsReport(
        variant=predictor.kind,
        ensemble_size=predictor.ensemble_size,
        seed=config.seed,
        accuracy=M.accuracy(batch),
        nll=M.nll(batch),
        ece=M.ece(batch),
        brier=M.brier(batch),
        temperatures=predictor.temperatures,
        wall_clock_seconds=elapsed,
        config={f.name: getattr(config, f.name)
                for f in dataclasses.fields(RunConfig)},
    )


def run_evaluate(run_dir) -> MetricsReport:
    """Rebuild the persisted predictor and score it on the test split."""
    predictor, config, stats = load_predictor(run_dir)
    _, test = build_datasets(config)
    return evaluate_predictor(predictor, config, stats, test)


def sweep_ensemble(config: RunConfig, max_size: int | None = None
                   ) -> list[MetricsReport]:
    """Deep-ensemble size sweep 1..M from a single trained member pool."""
    config = dataclasses.replace(
        config, strategy="deep",
        ensemble_size=max_size or config.ensemble_size,
    )
    result = run_train(config)
    _, test = build_datasets(config)
    reports = []
    for size in range(1, len(result.predictor.members) + 1):
        sub = result.predictor.restricted(size)
        reports.append(evaluate_predictor(sub, config, result.stats, test))
    return reports


# ---- report emission -------------------------------------------------

_CSV_COLUMNS = ("variant", "ensemble_size", "seed", "accuracy", "nll", "ece",
                "brier", "temperatures", "wall_clock_seconds")


def _fmt(value) -> str:
    if isinstance(value, float):
        return f"{value:.17g}"
    return str(value)


def emit_report(reports: list[MetricsReport], fmt: str, path) -> None:
    """Serialize reports as JSON (lossless round-trip) or CSV (17
    significant digits per number)."""
    if not reports:
        raise ConfigError("emit_report needs at least one report")
    path = Path(path)
    if fmt == "json":
        path.write_text(json.dumps([r.to_dict() for r in reports], indent=2))
        return
    if fmt != "csv":
        raise ConfigError(f"unknown report format {fmt!r}")
    lines = [",".join(_CSV_COLUMNS)]
    for r in reports:
        row = []
        for col in _CSV_COLUMNS:
            value = getattr(r, col)
            if col == "temperatures":
                row.append("" if value is None else ";".join(_fmt(t) for t in value))
            else:
                row.append(_fmt(value))
        lines.append(",".join(row))
    path.write_text("\n".join(lines) + "\n")
