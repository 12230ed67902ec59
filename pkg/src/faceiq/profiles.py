"""Model profiles: backbone widths/strides plus fusion and decoder settings."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

from .errors import ConfigError

TASK_ORDER = ("noise", "sharpness", "colorfulness", "contrast", "fidelity", "overall")


@dataclass(frozen=True)
class ModelProfile:
    name: str
    input_size: int
    stage_channels: tuple[int, ...]
    stage_strides: tuple[int, ...]
    kernel: int
    d_o: int
    d_l: int
    view_heads: int
    decoder_heads: int
    task_count: int = 6

    def __post_init__(self):
        if len(self.stage_channels) != len(self.stage_strides):
            raise ConfigError("stage_channels and stage_strides must have equal length")
        if not self.stage_channels:
            raise ConfigError("at least one backbone stage is required")
        if self.kernel % 2 != 1 or self.kernel < 1:
            raise ConfigError("kernel must be an odd positive integer")
        total = 1
        for s in self.stage_strides:
            if s < 1:
                raise ConfigError("strides must be positive")
            total *= s
        if self.input_size % total != 0:
            raise ConfigError(
                f"cumulative stride {total} must divide input size {self.input_size}")
        if self.d_o % self.decoder_heads != 0 or self.d_l % self.view_heads != 0:
            raise ConfigError("head counts must divide their embedding widths")
        if self.task_count < 1:
            raise ConfigError("task_count must be positive")

    @property
    def n_stages(self) -> int:
        return len(self.stage_channels)

    @property
    def deep_size(self) -> int:
        total = 1
        for s in self.stage_strides:
            total *= s
        return self.input_size // total

    def stage_sizes(self) -> list[int]:
        sizes, cur = [], self.input_size
        for s in self.stage_strides:
            cur //= s
            sizes.append(cur)
        return sizes

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, indent=2)


def profile_from_dict(obj: dict) -> ModelProfile:
    return ModelProfile(
        name=obj["name"],
        input_size=int(obj["input_size"]),
        stage_channels=tuple(obj["stage_channels"]),
        stage_strides=tuple(obj["stage_strides"]),
        kernel=int(obj["kernel"]),
        d_o=int(obj["d_o"]),
        d_l=int(obj["d_l"]),
        view_heads=int(obj["view_heads"]),
        decoder_heads=int(obj["decoder_heads"]),
        task_count=int(obj.get("task_count", 6)),
    )


def load_profile(path) -> ModelProfile:
    return profile_from_dict(json.loads(Path(path).read_text()))


def _desknet(name, channels):
    return ModelProfile(name=name, input_size=224, stage_channels=channels,
                        stage_strides=(4, 2, 2, 2), kernel=3, d_o=128, d_l=64,
                        view_heads=4, decoder_heads=8)


# DeskNet variants; widths chosen for the S/XS/XXS size ordering, not to
# match any external parameter budget.
PROFILES = {
    "S": _desknet("S", (32, 64, 128, 256)),
    "XS": _desknet("XS", (24, 48, 96, 192)),
    "XXS": _desknet("XXS", (16, 32, 64, 128)),
}


def toy_profile(input_size=16, stage_channels=(4, 6), stage_strides=(4, 2),
                kernel=3, d_o=8, d_l=4, view_heads=1, decoder_heads=1,
                task_count=2, name="toy") -> ModelProfile:
    """Small profile for gradient checks and fast tests."""
    return ModelProfile(name=name, input_size=input_size,
                        stage_channels=tuple(stage_channels),
                        stage_strides=tuple(stage_strides), kernel=kernel,
                        d_o=d_o, d_l=d_l, view_heads=view_heads,
                        decoder_heads=decoder_heads, task_count=task_count)


def get_profile(name: str) -> ModelProfile:
    try:
        return PROFILES[name]
    except KeyError:
        raise ConfigError(f"unknown profile {name!r}; expected one of {sorted(PROFILES)}")
