"""Full network: backbone, both matching branches, decoder and transition head."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from . import fileio
from .backbone import Backbone
from .config import ModelConfig, model_config_from_dict, model_config_to_dict
from .decoder import Decoder, TransitionHead
from .nn import Module
from .short_term import ShortFallback, ShortTerm
from .template_attention import LongFallback, TemplateAttention


class TTVOS(Module):
    def __init__(self, cfg: ModelConfig | None = None, seed: int = 0):
        self.cfg = cfg or ModelConfig()
        rng = np.random.default_rng(seed)
        self.backbone = Backbone(self.cfg, rng)
        self.short = ShortTerm(self.cfg, rng) if self.cfg.short_matching else ShortFallback(self.cfg, rng)
        self.tattn = TemplateAttention(self.cfg, rng) if self.cfg.long_matching else LongFallback(self.cfg, rng)
        self.decoder = Decoder(self.cfg, rng)
        self.pihead = TransitionHead(self.cfg, rng)
        self.assign_names()

    def save(self, directory) -> None:
        fileio.save_checkpoint(directory, self.state_dict(), model_config_to_dict(self.cfg))

    @classmethod
    def load(cls, directory) -> "TTVOS":
        cfg = model_config_from_dict(fileio.read_checkpoint_config(directory))
        model = cls(cfg)
        model.load_state_dict(fileio.load_checkpoint(directory))
        return model


def checkpoint_exists(directory) -> bool:
    return (Path(directory) / "manifest.txt").is_file()
