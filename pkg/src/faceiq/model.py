"""Full quality model: encoder, decoder, and prediction helpers."""

from __future__ import annotations

import numpy as np

from .decoder import Decoder, ScoreVector, mse_loss
from .encoder import Encoder
from .errors import ConfigError
from .profiles import ModelProfile
from .tensor import Parameter, Tensor
from .views import ViewTriplet


class QualityModel:
    """Three-view multi-dimension quality regressor."""

    def __init__(self, profile: ModelProfile, seed: int = 0):
        rng = np.random.default_rng(seed)
        self.profile = profile
        self.encoder = Encoder(profile, rng)
        self.decoder = Decoder(profile, rng)
        names = [p.name for p in self.parameters()]
        if len(names) != len(set(names)):
            raise ConfigError("duplicate parameter names in model")

    def parameters(self) -> list[Parameter]:
        return self.encoder.parameters() + self.decoder.parameters()

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.zero_grad()

    def forward(self, x_o: Tensor, x_f: Tensor, x_em: Tensor) -> Tensor:
        feature = self.encoder.forward(x_o, x_f, x_em)
        refined = self.decoder.decode(feature)
        return self.decoder.regress(refined)

    def forward_views(self, triplet: ViewTriplet) -> Tensor:
        return self.forward(*triplet.tensors())

    def predict(self, triplet: ViewTriplet) -> ScoreVector:
        return ScoreVector(self.forward_views(triplet).data)

    def loss(self, triplet: ViewTriplet, labels) -> Tensor:
        return mse_loss(self.forward_views(triplet), labels)

    def state_dict(self) -> dict[str, np.ndarray]:
        return {p.name: p.data.copy() for p in self.parameters()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        params = {p.name: p for p in self.parameters()}
        missing = sorted(set(params) - set(state))
        extra = sorted(set(state) - set(params))
        if missing or extra:
            raise ConfigError(f"state mismatch; missing={missing} unexpected={extra}")
        for name, p in params.items():
            arr = np.asarray(state[name], dtype=np.float64)
            if arr.shape != p.data.shape:
                raise ConfigError(f"{name}: shape {arr.shape} != {p.data.shape}")
            p.data = arr.copy()
