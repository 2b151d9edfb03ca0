"""Model configuration and the parameter store.

``ModelConfig`` pins everything that determines tensor shapes and forward
semantics: embedding dimension, head count, which summary blocks are
enabled, whether the probe transform exists, and the pooling temperature.
``ModelParams`` couples a config with the named tensors; tensor insertion
order is fixed so serialization and optimizer iteration are deterministic.

Parameters fall into two optimizer groups: ``probe_transform`` for the
probe-side affine map and ``main`` for everything else. The groups carry
different learning rates during training.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .attention import init_attention_params
from .context import init_mlp_params, init_probe_transform
from .errors import ParameterError
from .summary import SUMMARY_BLOCKS, validate_blocks

MAIN_GROUP = "main"
PROBE_GROUP = "probe_transform"

# summary-block selections mirroring the component toggles studied in the
# ablation suite, from the bare mean up to the full model
ABLATION_PRESETS = {
    "mean": ("mean",),
    "mean-var": ("mean", "var"),
    "mean-var-extrema": ("max", "min", "mean", "var"),
    "stats": ("max", "min", "mean", "var", "mode", "median"),
    "full": SUMMARY_BLOCKS,
}


@dataclass(frozen=True)
class ModelConfig:
    d: int
    heads: int = 4
    blocks: tuple = SUMMARY_BLOCKS
    use_probe_transform: bool = True
    softmax_temperature: float = 0.1

    def __post_init__(self):
        if self.d < 1:
            raise ParameterError(f"embedding dimension must be >= 1, got {self.d}")
        object.__setattr__(self, "blocks", validate_blocks(self.blocks))
        if not self.softmax_temperature > 0:
            raise ParameterError(
                f"softmax temperature must be positive, got {self.softmax_temperature}"
            )
        if self.uses_attention:
            if self.heads < 1:
                raise ParameterError(f"head count must be >= 1, got {self.heads}")
            if self.d % self.heads:
                raise ParameterError(
                    f"d={self.d} not divisible by heads={self.heads}"
                )

    @property
    def uses_attention(self) -> bool:
        return "attn" in self.blocks

    @property
    def uses_tokens(self) -> bool:
        # the token doubles as the attention class token, so it exists
        # whenever either block is enabled
        return "attn" in self.blocks or "token" in self.blocks

    @property
    def summary_width(self) -> int:
        return len(self.blocks) * self.d

    def to_dict(self) -> dict:
        return {
            "d": self.d,
            "heads": self.heads,
            "blocks": list(self.blocks),
            "use_probe_transform": self.use_probe_transform,
            "softmax_temperature": self.softmax_temperature,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ModelConfig":
        known = {"d", "heads", "blocks", "use_probe_transform", "softmax_temperature"}
        unknown = set(data) - known
        if unknown:
            raise ParameterError(f"unknown model config keys: {sorted(unknown)}")
        if "d" not in data:
            raise ParameterError("model config must declare d")
        kwargs = dict(data)
        if "blocks" in kwargs:
            kwargs["blocks"] = tuple(kwargs["blocks"])
        return cls(**kwargs)


@dataclass
class ModelParams:
    """A config plus its named tensors, in fixed insertion order."""

    config: ModelConfig
    tensors: dict

    TOKEN_STD = 0.02

    @classmethod
    def initialize(cls, config: ModelConfig, seed: int) -> "ModelParams":
        """Seeded construction; same seed and config give identical tensors."""
        rng = np.random.default_rng(seed)
        d = config.d
        tensors: dict[str, np.ndarray] = {}
        if config.uses_attention:
            for name, arr in init_attention_params(rng, d, config.heads).items():
                tensors[f"attn.{name}"] = arr
        if config.uses_tokens:
            tensors["token.probe"] = rng.normal(0.0, cls.TOKEN_STD, size=d)
            tensors["token.gallery"] = rng.normal(0.0, cls.TOKEN_STD, size=d)
        for name, arr in init_mlp_params(rng, config.summary_width, d).items():
            tensors[f"mlp.{name}"] = arr
        if config.use_probe_transform:
            for name, arr in init_probe_transform(d).items():
                tensors[f"probe_transform.{name}"] = arr
        return cls(config=config, tensors=tensors)

    @staticmethod
    def group_of(name: str) -> str:
        return PROBE_GROUP if name.startswith("probe_transform.") else MAIN_GROUP

    def group_names(self, group: str) -> list:
        return [n for n in self.tensors if self.group_of(n) == group]

    @property
    def n_parameters(self) -> int:
        return int(sum(t.size for t in self.tensors.values()))

    def copy(self) -> "ModelParams":
        return ModelParams(
            config=self.config,
            tensors={k: v.copy() for k, v in self.tensors.items()},
        )

    def with_temperature(self, temperature: float) -> "ModelParams":
        return ModelParams(
            config=replace(self.config, softmax_temperature=temperature),
            tensors=self.tensors,
        )
