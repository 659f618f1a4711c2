"""
TRACE model facade
==================
Bundles encoder, layer stack and head with the ablation flags, and exposes the
forward pass, the training losses and inference helpers used by the trainer
and the CLI.
"""

import logging
from collections import OrderedDict
from typing import Dict, List, Optional, Tuple

import numpy as np

from autograd.tensor import Tensor, no_tape
from config import TrainConfig
from ehr.batching import Batch
from model.encoder import EncoderParams, encode_events, init_encoder
from model.head import HeadParams, ce_loss, final_loss, init_head, predict
from model.transformer import LayerParams, attention_weights, denoise_loss, encode_stack, init_layer

logger = logging.getLogger(__name__)


class TraceModel:
    """Parameters plus the flags that select an ablation variant"""

    def __init__(
        self,
        encoder: EncoderParams,
        layers: List[LayerParams],
        head: HeadParams,
        disable_decay: bool = False,
        disable_periodic: bool = False,
        disable_mask: bool = False,
    ):
        self.encoder = encoder
        self.layers = layers
        self.head = head
        self.disable_decay = disable_decay
        self.disable_periodic = disable_periodic
        self.disable_mask = disable_mask

    @property
    def num_labels(self) -> int:
        return self.head.W_out.shape[0]

    @property
    def max_len(self) -> int:
        return self.encoder.max_positions - 1

    def hidden(self, batch: Batch) -> Tensor:
        batch = batch.trimmed()
        H = encode_events(
            self.encoder,
            batch.token_ids,
            batch.times,
            disable_decay=self.disable_decay,
            disable_periodic=self.disable_periodic,
        )
        return encode_stack(H, self.layers, batch.pad_mask, use_gate=not self.disable_mask)

    def forward(self, batch: Batch) -> Tensor:
        """Label probabilities [B, |labels|]; recorded on the active tape if any"""
        return predict(self.hidden(batch), batch.mask_positions, self.head)

    def denoise(self) -> Tensor:
        """Z penalty; a constant 0 when the gate is disabled"""
        if self.disable_mask:
            return Tensor(0.0)
        return denoise_loss(self.layers)

    def losses(self, batch: Batch, lam: float) -> Tuple[Tensor, Tensor, Tensor]:
        """(final, ce, denoise) for one batch"""
        ce = ce_loss(self.forward(batch), batch.labels)
        denoise = self.denoise()
        return final_loss(ce, denoise, lam), ce, denoise

    def predict_proba(self, batch: Batch) -> np.ndarray:
        with no_tape():
            return self.forward(batch).data.copy()

    def attention_weights(self, batch: Batch) -> List[np.ndarray]:
        """Per-layer attention maps [B, h, L, L] for inspection; L is the trimmed batch width"""
        batch = batch.trimmed()
        with no_tape():
            H = encode_events(
                self.encoder,
                batch.token_ids,
                batch.times,
                disable_decay=self.disable_decay,
                disable_periodic=self.disable_periodic,
            )
            return attention_weights(H, self.layers, batch.pad_mask, use_gate=not self.disable_mask)

    def parameters(self) -> Dict[str, Tensor]:
        """Every parameter tensor, in a fixed name order"""
        named = OrderedDict((f"encoder.{k}", v) for k, v in self.encoder.named().items())
        for i, layer in enumerate(self.layers):
            named.update(layer.named(f"layers.{i}"))
        named.update(self.head.named())
        return named

    def trainable_parameters(self) -> Dict[str, Tensor]:
        """parameters() without the Z gates when the gate is disabled"""
        return OrderedDict(
            (name, t)
            for name, t in self.parameters().items()
            if not (self.disable_mask and name.endswith(".Z"))
        )

    def z_norm_total(self) -> float:
        """Sum over layers of ||Z||_F"""
        return float(sum(np.linalg.norm(layer.Z.data) for layer in self.layers))

    def zero_grad(self) -> None:
        for tensor in self.parameters().values():
            tensor.grad = None


def create_model(config: TrainConfig, vocab_size: int, num_labels: int, seed: Optional[int] = None) -> TraceModel:
    """Fresh parameters for `config`; the draw order is fixed, so (config, seed) fixes the weights"""
    rng = np.random.default_rng(config.seed if seed is None else seed)
    encoder = init_encoder(
        rng,
        vocab_size=vocab_size,
        d_model=config.d_model,
        max_len=config.max_len,
        m_decay=config.m_decay,
        period=config.period,
        init_std=config.init_std,
    )
    layers = [
        init_layer(
            rng,
            index=i,
            d_model=config.d_model,
            n_heads=config.n_heads,
            d_ff=config.ffn_width,
            max_len=config.max_len,
            init_std=config.init_std,
            z_low=config.z_init_low,
            z_high=config.z_init_high,
            freeze_z=config.disable_mask,
        )
        for i in range(config.n_layers)
    ]
    head = init_head(rng, num_labels, config.d_model, config.init_std)
    logger.debug(
        "Created model: d=%d h=%d layers=%d vocab=%d labels=%d",
        config.d_model, config.n_heads, config.n_layers, vocab_size, num_labels,
    )
    return TraceModel(
        encoder,
        layers,
        head,
        disable_decay=config.disable_decay,
        disable_periodic=config.disable_periodic,
        disable_mask=config.disable_mask,
    )
