"""Uncertainty-aware training and prediction strategies.

Each procedure returns a ``Predictor`` that maps a batch of images to
per-class probability rows summing to 1:

* deep ensemble -- independently seeded trainings, temperature-scaled
  per member, uniformly averaged;
* SWA -- running mean of weight iterates captured along one trajectory;
* snapshot -- members captured at the minima of cosine restart cycles
  within a single run;
* fast -- members collected along a cyclic-LR trajectory started from
  an already-trained solution;
* MC dropout -- stochastic input-pixel zeroing at train and test time,
  averaged over repeated forwards.

Member seeds derive from (base_seed, index) so every member is
bit-reproducible in isolation.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field

import numpy as np

from .data import Dataset, make_batches, split_calibration
from .errors import NumericError, RangeError, UsageError
from .metrics import softmax_rows, temperature_scale
from .model import PerceiverConfig, batch_loss, forward_logits, init_params
from .optim import AdamWSettings, AdamWState, adamw_step, collect_grads
from .params import ParamStore, swa_update
from .rng import derive_seed, generator
from .schedules import LRSchedule, capture_steps, lr_at


@dataclass
class TrainRunLog:
    """Per-step (step, lr, loss) triples plus capture events."""

    steps: list[tuple[int, float, float]] = field(default_factory=list)
    captures: list[tuple[int, int]] = field(default_factory=list)  # (step, member)

    def lr_trace(self) -> list[float]:
        return [lr for _, lr, _ in self.steps]


@dataclass
class Predictor:
    """Anything that turns images into probability rows."""

    kind: str  # single | deep_ensemble | swa | snapshot | fast | mc_dropout
    config: PerceiverConfig
    members: list[ParamStore]
    temperatures: list[float] | None = None
    mc_delta: float = 0.0
    mc_samples: int = 0
    mc_seed: int = 0
    snapshot_last: int | None = None  # average only the last m members

    def __post_init__(self):
        if not self.members:
            raise UsageError("a predictor needs at least one member")
        if self.temperatures is not None and len(self.temperatures) != len(
            self.members
        ):
            raise UsageError("one temperature per member required")

    @property
    def ensemble_size(self) -> int:
        return len(self.active_members())

    def active_members(self) -> list[ParamStore]:
        if self.kind == "snapshot" and self.snapshot_last:
            return self.members[-self.snapshot_last :]
        return self.members

    def probabilities(self, images) -> np.ndarray:
        """n x K probability rows, averaged over active members."""
        images = np.asarray(images, dtype=np.float64)
        if images.ndim == 3:
            images = images[None]
        if self.kind == "mc_dropout":
            return np.stack(
                [
                    mc_predict(
                        self.config, self.members[0], img, self.mc_delta,
                        self.mc_samples, derive_seed(self.mc_seed, i),
                    )
                    for i, img in enumerate(images)
                ]
            )
        members = self.active_members()
        temps = self.temperatures
        if self.kind == "snapshot" and self.snapshot_last and temps:
            temps = temps[-self.snapshot_last :]
        member_probs = []
        for j, store in enumerate(members):
            logits = forward_logits(self.config, store, images)
            if temps is not None:
                logits = logits / temps[j]
            member_probs.append(softmax_rows(logits))
        return ensemble_average(member_probs)

    def restricted(self, size: int) -> "Predictor":
        """First ``size`` members only (ensemble-size sweeps)."""
        if not (1 <= size <= len(self.members)):
            raise UsageError(f"ensemble size {size} outside [1, {len(self.members)}]")
        out = copy.copy(self)
        out.members = self.members[:size]
        if self.temperatures is not None:
            out.temperatures = self.temperatures[:size]
        return out


def ensemble_average(member_probs) -> np.ndarray:
    """Uniform mixture of member probability rows (arithmetic mean)."""
    stacked = np.stack([np.asarray(p, dtype=np.float64) for p in member_probs])
    if stacked.ndim != 3:
        raise UsageError("ensemble_average expects M lists of n x K rows")
    return stacked.mean(axis=0)


# ---- shared training loop -------------------------------------------


@dataclass(frozen=True)
class TrainSettings:
    batch_size: int = 4
    adamw: AdamWSettings = AdamWSettings()
    normalize: bool = False  # harness standardizes datasets up front
    mc_delta: float = 0.0  # input-pixel dropout during training


def train_model(
    config: PerceiverConfig,
    params: ParamStore,
    dataset: Dataset,
    schedule: LRSchedule,
    seed: int,
    settings: TrainSettings = TrainSettings(),
    on_step=None,
) -> TrainRunLog:
    """Run AdamW for schedule.total_steps, mutating ``params`` in place.

    Data order reshuffles every epoch from seeds derived off ``seed``;
    gradients are reset after each optimizer step.
    """
    log = TrainRunLog()
    state = AdamWState(params, settings.adamw)
    mask_rng = generator(seed, 0xD0) if settings.mc_delta > 0 else None
    batches: list = []
    epoch = 0
    for t in range(1, schedule.total_steps + 1):
        if not batches:
            batches = make_batches(
                dataset, settings.batch_size, derive_seed(seed, epoch),
                normalize=settings.normalize,
            )
            epoch += 1
        images, labels = batches.pop(0)
        if mask_rng is not None:
            images = np.stack(
                [mc_dropout_mask(img, settings.mc_delta, mask_rng) for img in images]
            )
        loss = batch_loss(config, params, images, labels)
        loss_value = float(loss.data)
        if not np.isfinite(loss_value):
            raise NumericError(f"non-finite loss at step {t}")
        params.zero_grads()
        loss.backward()
        lr = lr_at(schedule, t)
        adamw_step(params, collect_grads(params), state, lr)
        log.steps.append((t, lr, loss_value))
        if on_step is not None:
            on_step(t, params, log)
    return log


def train_member(
    config: PerceiverConfig,
    dataset: Dataset,
    schedule: LRSchedule,
    member_seed: int,
    settings: TrainSettings = TrainSettings(),
    fit_temperature: bool = True,
) -> tuple[ParamStore, float, TrainRunLog]:
    """One independent training: seeded init, seeded shuffling, then an
    optional temperature fit on a 10% held-out calibration split."""
    if len(dataset) == 0:
        raise UsageError("empty dataset")
    params = init_params(config, derive_seed(member_seed, 1))
    temperature = 1.0
    if fit_temperature:
        train_ds, calib_ds = split_calibration(dataset, member_seed)
    else:
        train_ds, calib_ds = dataset, None
    log = train_model(config, params, train_ds, schedule,
                      derive_seed(member_seed, 2), settings)
    frozen = params.detached()
    if calib_ds is not None:
        logits = forward_logits(config, frozen, calib_ds.images)
        temperature, _ = temperature_scale(logits, calib_ds.labels)
    return frozen, temperature, log


# ---- strategies -----------------------------------------------------


def deep_ensemble_train(
    config: PerceiverConfig,
    ensemble_size: int,
    base_seed: int,
    dataset: Dataset,
    schedule: LRSchedule,
    settings: TrainSettings = TrainSettings(),
) -> tuple[Predictor, list[TrainRunLog]]:
    """Independently seeded members, each temperature-scaled before the
    uniform probability average."""
    if ensemble_size < 1:
        raise UsageError(f"ensemble_size must be >= 1, got {ensemble_size}")
    members, temps, logs = [], [], []
    for m in range(ensemble_size):
        store, temperature, log = train_member(
            config, dataset, schedule, derive_seed(base_seed, m), settings
        )
        members.append(store)
        temps.append(temperature)
        logs.append(log)
    kind = "deep_ensemble" if ensemble_size > 1 else "single"
    return Predictor(kind, config, members, temperatures=temps), logs


def swa_train(
    config: PerceiverConfig,
    pretrained: ParamStore,
    dataset: Dataset,
    schedule: LRSchedule,
    seed: int,
    settings: TrainSettings = TrainSettings(),
) -> tuple[Predictor, TrainRunLog]:
    """Continue from a trained solution, folding the weights into a
    running average at the end of every LR cycle."""
    if schedule.kind != "swa_linear":
        raise UsageError(f"swa_train needs a swa_linear schedule, got {schedule.kind}")
    c = schedule.cycles_or_c
    n = schedule.total_steps
    if c > n:
        raise UsageError(f"cycle length {c} exceeds step budget {n}: zero captures")
    params = pretrained.copy(requires_grad=True)
    averaged: dict = {"store": None, "count": 0}

    def on_step(t, current, log):
        if t % c == 0:
            snapshot = current.detached()
            if averaged["store"] is None:
                averaged["store"] = snapshot
            else:
                averaged["store"] = swa_update(
                    averaged["store"], averaged["count"], snapshot
                )
            averaged["count"] += 1
            log.captures.append((t, averaged["count"] - 1))

    log = train_model(config, params, dataset, schedule, seed, settings, on_step)
    return Predictor("swa", config, [averaged["store"]]), log


def snapshot_train(
    config: PerceiverConfig,
    seed: int,
    dataset: Dataset,
    total_steps: int,
    num_snapshots: int,
    initial_lr: float,
    settings: TrainSettings = TrainSettings(),
    average_last: int | None = None,
) -> tuple[Predictor, TrainRunLog]:
    """Single run under cosine restarts; weights are captured at the last
    step of each cycle (the per-cycle LR minimum). Prediction averages
    the softmax outputs of the last ``average_last`` members (all, by
    default)."""
    schedule = LRSchedule("snapshot_cosine", initial_lr, 0.0, total_steps,
                          num_snapshots)
    params = init_params(config, derive_seed(seed, 1))
    members: list[ParamStore] = []
    targets = set(capture_steps(schedule))

    def on_step(t, current, log):
        if t in targets:
            members.append(current.detached())
            log.captures.append((t, len(members) - 1))

    log = train_model(config, params, dataset, schedule, derive_seed(seed, 2),
                      settings, on_step)
    return (
        Predictor("snapshot", config, members, snapshot_last=average_last),
        log,
    )


def fast_train(
    config: PerceiverConfig,
    pretrained: ParamStore,
    dataset: Dataset,
    seed: int,
    cycles: int = 4,
    alpha1: float = 5e-6,
    alpha2: float = 5e-7,
    steps_per_cycle: int = 5,
    settings: TrainSettings = TrainSettings(),
) -> tuple[Predictor, TrainRunLog]:
    """Cyclic-LR collection started from a trained solution; the starting
    weights participate as member 0."""
    if cycles < 1:
        raise UsageError(f"cycles must be >= 1, got {cycles}")
    schedule = LRSchedule("fast_cyclic", alpha1, alpha2,
                          cycles * steps_per_cycle, cycles)
    params = pretrained.copy(requires_grad=True)
    members: list[ParamStore] = [pretrained.detached()]
    targets = set(capture_steps(schedule))

    def on_step(t, current, log):
        if t in targets:
            members.append(current.detached())
            log.captures.append((t, len(members) - 1))

    log = train_model(config, params, dataset, schedule, seed, settings, on_step)
    return Predictor("fast", config, members), log


# ---- MC dropout -----------------------------------------------------


def mc_dropout_mask(image: np.ndarray, delta: float,
                    rng: np.random.Generator) -> np.ndarray:
    """Zero each pixel (all channels) independently with probability
    delta; survivors are not rescaled."""
    if not (0.0 <= delta <= 1.0):
        raise RangeError(f"delta must lie in [0, 1], got {delta}")
    image = np.asarray(image, dtype=np.float64)
    if delta == 0.0:
        return image.copy()
    keep = rng.random(size=image.shape[:2]) >= delta
    return image * keep[..., None]


def mc_predict(config: PerceiverConfig, params: ParamStore, image,
               delta: float, num_samples: int, seed: int) -> np.ndarray:
    """Mean softmax over ``num_samples`` freshly masked forwards."""
    if num_samples < 1:
        raise UsageError(f"num_samples must be >= 1, got {num_samples}")
    if delta == 0.0:
        # every sample is the unmasked forward; return it bit-exactly
        # rather than averaging identical values
        return softmax_rows(forward_logits(config, params, image))[0]
    acc = np.zeros(config.num_classes)
    for i in range(num_samples):
        masked = mc_dropout_mask(image, delta, generator(seed, i))
        logits = forward_logits(config, params, masked)
        acc += softmax_rows(logits)[0]
    return acc / num_samples


def bezier_point(w0: ParamStore, w1: ParamStore, control: ParamStore,
                 t: float) -> ParamStore:
    """Quadratic Bezier evaluation between two weight-space points; a
    diagnostic for inspecting low-loss connecting curves."""
    if not (0.0 <= t <= 1.0):
        raise RangeError(f"t must lie in [0, 1], got {t}")
    w0.check_compatible(w1)
    w0.check_compatible(control)
    a, b, c = (1.0 - t) ** 2, 2.0 * t * (1.0 - t), t ** 2
    mid = w0.map2(control, lambda x, y: a * x + b * y)
    return mid.map2(w1, lambda x, y: x + c * y)
