"""Random kernel generation, normalisation and dilation selection."""

from __future__ import annotations

import warnings
from dataclasses import asdict, dataclass, field

import numpy as np

from . import container
from .exceptions import BankMismatch, ConfigError, DegenerateKernel, ParseError, SeriesTooShort

__all__ = [
    "COUNT_MODES",
    "KERNEL_LENGTH",
    "HydraConfig",
    "KernelBank",
    "compute_dilations",
    "generate_bank",
    "normalize_weights",
    "save_bank",
    "load_bank",
]

KERNEL_LENGTH = 9
COUNT_MODES = ("hard", "soft", "both", "off")


@dataclass(frozen=True)
class HydraConfig:
    """Hyperparameters of the transform.

    Parameters
    ----------
    k : int, default=8
        Kernels per group.
    g : int, default=64
        Groups per dilation. Must be even when ``use_diff`` is set, since
        the upper half of the groups reads the first-order difference.
    seed : int, default=0
    count_max, count_min : {"hard", "soft", "both", "off"}
        Counting applied to the maximum and minimum response of each group.
    clip : bool, default=False
        Count the maximum only when positive and the minimum only when
        negative.
    use_diff : bool, default=True
    batch_size : int, default=256
        Series per transform batch. Has no effect on the output.
    """

    k: int = 8
    g: int = 64
    seed: int = 0
    count_max: str = "soft"
    count_min: str = "hard"
    clip: bool = False
    use_diff: bool = True
    batch_size: int = 256
    kernel_len: int = field(default=KERNEL_LENGTH)

    def __post_init__(self):
        for name in ("k", "g", "batch_size"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, (int, np.integer)) or value < 1:
                raise ConfigError(f"{name} must be a positive integer, got {value!r}")
        if isinstance(self.seed, bool) or not isinstance(self.seed, (int, np.integer)) or self.seed < 0:
            raise ConfigError(f"seed must be a non-negative integer, got {self.seed!r}")
        if self.kernel_len != KERNEL_LENGTH:
            raise ConfigError(f"kernel length is fixed at {KERNEL_LENGTH}")
        for name in ("count_max", "count_min"):
            if getattr(self, name) not in COUNT_MODES:
                raise ConfigError(f"{name} must be one of {COUNT_MODES}, got {getattr(self, name)!r}")
        if self.count_max == "off" and self.count_min == "off":
            raise ConfigError("count_max and count_min cannot both be 'off'")
        if self.use_diff and self.g % 2:
            raise ConfigError(f"use_diff requires an even number of groups, got g={self.g}")
        if self.k == 1 and self.count_max != "off" and self.count_min != "off":
            warnings.warn(
                "with k=1 the maximum and minimum responses come from the same kernel; "
                "counting both is redundant",
                stacklevel=3,
            )

    @property
    def diff_group_cutoff(self) -> int:
        return self.g // 2 if self.use_diff else self.g

    @property
    def channels(self) -> tuple:
        """Counting channels in canonical order."""
        out = []
        for side, mode in (("max", self.count_max), ("min", self.count_min)):
            if mode in ("soft", "both"):
                out.append(f"{side}_soft")
            if mode in ("hard", "both"):
                out.append(f"{side}_hard")
        return tuple(out)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data) -> "HydraConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    def replace(self, **changes) -> "HydraConfig":
        data = self.to_dict()
        data.update(changes)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            return HydraConfig(**data)


def compute_dilations(input_len: int) -> list:
    """Powers of two whose dilated kernel span fits within ``input_len``."""
    if input_len < KERNEL_LENGTH:
        raise SeriesTooShort(
            f"series length {input_len} is shorter than the kernel length {KERNEL_LENGTH}"
        )
    dilations = []
    dilation = 1
    while (KERNEL_LENGTH - 1) * dilation + 1 <= input_len:
        dilations.append(dilation)
        dilation *= 2
    return dilations


def normalize_weights(w):
    """Centre the weights and scale their absolute values to sum to one."""
    w = np.asarray(w, dtype=np.float64)
    if not np.all(np.isfinite(w)):
        raise DegenerateKernel("kernel weights must be finite")
    # all-equal weights leave only rounding noise after centring
    if np.ptp(w) == 0:
        raise DegenerateKernel("kernel weights are all equal")
    centred = w - w.mean()
    scale = np.abs(centred).sum()
    if scale == 0:
        raise DegenerateKernel("kernel weights are all equal")
    return centred / scale


@dataclass(frozen=True, eq=False)
class KernelBank:
    """Normalised weights of shape (d, g, k, 9), one block per dilation."""

    config: HydraConfig
    input_len: int
    dilations: tuple
    weights: np.ndarray

    def __post_init__(self):
        weights = np.array(self.weights, dtype=np.float64, copy=True)
        d = len(self.dilations)
        expected = (d, self.config.g, self.config.k, KERNEL_LENGTH)
        if weights.shape != expected:
            raise BankMismatch(f"weights have shape {weights.shape}, expected {expected}")
        weights.flags.writeable = False
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "dilations", tuple(int(x) for x in self.dilations))

    @property
    def paddings(self) -> tuple:
        return tuple((KERNEL_LENGTH // 2) * d for d in self.dilations)

    @property
    def diff_group_cutoff(self) -> int:
        return self.config.diff_group_cutoff

    @property
    def n_kernels(self) -> int:
        return self.weights.shape[0] * self.weights.shape[1] * self.weights.shape[2]

    def negated(self) -> "KernelBank":
        return KernelBank(self.config, self.input_len, self.dilations, -self.weights)

    def with_config(self, config: HydraConfig) -> "KernelBank":
        """Same weights under a config differing only in counting options."""
        if (config.k, config.g, config.seed, config.use_diff) != (
            self.config.k,
            self.config.g,
            self.config.seed,
            self.config.use_diff,
        ):
            raise BankMismatch("config changes the kernel bank itself")
        return KernelBank(config, self.input_len, self.dilations, self.weights)

    def equals(self, other) -> bool:
        return (
            self.config == other.config
            and self.input_len == other.input_len
            and self.dilations == other.dilations
            and np.array_equal(self.weights, other.weights)
        )

    def to_payload(self) -> dict:
        return {
            "config": self.config.to_dict(),
            "input_len": self.input_len,
            "dilations": list(self.dilations),
            "weights": self.weights,
        }

    @classmethod
    def from_payload(cls, payload) -> "KernelBank":
        try:
            config = HydraConfig.from_dict(payload["config"])
            return cls(
                config=config,
                input_len=int(payload["input_len"]),
                dilations=tuple(payload["dilations"]),
                weights=np.asarray(payload["weights"], dtype=np.float64),
            )
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, (ConfigError, BankMismatch)):
                raise
            raise ParseError(f"malformed bank document: {exc}") from None


def generate_bank(config: HydraConfig, input_len: int) -> KernelBank:
    """Draw a bank of normalised random kernels for series of ``input_len``.

    Weights come from a PCG64 generator seeded with ``config.seed``, one
    independent (g, k, 9) draw per dilation. The dilation set is computed
    from the original length and shared with the first-difference groups.
    """
    dilations = compute_dilations(input_len)
    rng = np.random.default_rng(config.seed)
    shape = (len(dilations), config.g, config.k, KERNEL_LENGTH)
    raw = rng.standard_normal(shape)
    flat = raw.reshape(-1, KERNEL_LENGTH)
    weights = np.empty_like(flat)
    for i in range(flat.shape[0]):
        while True:
            try:
                weights[i] = normalize_weights(flat[i])
                break
            except DegenerateKernel:
                flat[i] = rng.standard_normal(KERNEL_LENGTH)
    return KernelBank(config, int(input_len), tuple(dilations), weights.reshape(shape))


def save_bank(bank: KernelBank, path, manifest=None):
    container.save(path, "bank", bank.to_payload(), manifest)


def load_bank(path) -> KernelBank:
    payload, _ = container.load(path, "bank")
    return KernelBank.from_payload(payload)
