"""Temporal attention encoders: the lightweight L-TAE and the baseline TAE.

Inputs are laid out channels-first, ``e`` of shape (..., E, T), with any
number of leading batch axes. ``days`` has shape (..., T) and counts days
elapsed since the first acquisition of each sequence.
"""

import math
from typing import List, Optional

import numpy as np

from src.errors import DataError
from src.layers import MLP, Linear, Module
from src.models import (
    AttentionRecord, InvalidConfigError, LTAEConfig, QueryMode, TAEConfig, TemporalConfig,
)
from src.tensor import (
    DimensionError, Tensor, as_tensor, concat, mean, mul, reshape, slice_axis, softmax, sum,
    transpose,
)


class SequenceOrderError(DataError):
    """Raised when acquisition days are not in non-decreasing order."""
    pass


def group_channels(e: Tensor, H: int) -> List[Tensor]:
    """
    Split the E channels (axis -2) into H contiguous groups of E/H channels.

    Args:
        e: Input of shape (..., E, T)
        H: Number of groups

    Returns:
        H tensors of shape (..., E/H, T), in head order

    Raises:
        InvalidConfigError: If H does not divide E
    """
    E = e.shape[-2]
    if H < 1 or E % H != 0:
        raise InvalidConfigError(f"H={H} does not divide E={E}",
                                 reason="heads_do_not_divide_channels")
    width = E // H
    return [slice_axis(e, -2, h * width, (h + 1) * width) for h in range(H)]


def positional_encoding(day: float, E_prime: int, tau: float = 1000.0) -> Tensor:
    """Sine encoding of one day stamp: component i is sin(day / tau**(i / E'))."""
    return Tensor(positional_table(np.asarray(day, dtype=np.float64), E_prime, tau))


def positional_table(days: np.ndarray, E_prime: int, tau: float = 1000.0) -> np.ndarray:
    """
    Encode an array of day stamps.

    Args:
        days: Array of shape (..., T), or a scalar
        E_prime: Encoding width
        tau: Characteristic scale

    Returns:
        Array of shape (..., E', T), or (E',) for a scalar day
    """
    if E_prime < 1 or not tau > 0:
        raise InvalidConfigError(f"positional encoding needs E' >= 1 and tau > 0, "
                                 f"got E'={E_prime}, tau={tau}")
    exponents = np.arange(1, E_prime + 1, dtype=np.float64) / E_prime
    denominators = np.power(float(tau), exponents)
    days = np.asarray(days, dtype=np.float64)
    if days.ndim == 0:
        return np.sin(days / denominators)
    return np.sin(days[..., None, :] / denominators[:, None])


def compute_keys(e_h: Tensor, p: Tensor, projection: Linear) -> Tensor:
    """
    Keys of one head: FC_h(e_h + p) at every time step.

    Args:
        e_h: Channel group of shape (..., E', T)
        p: Positional encoding of shape (..., E', T)
        projection: The head's affine map from E' to K

    Returns:
        Keys of shape (..., K, T)
    """
    if e_h.shape[-2] != projection.fan_in:
        raise DimensionError(f"keys: group width {e_h.shape[-2]} != projection input "
                             f"{projection.fan_in}")
    return transpose(projection(transpose(e_h + p)))


def attention_mask(keys: Tensor, query: Tensor, K: int) -> Tensor:
    """
    Scaled softmax over time of the query/key dot products.

    Args:
        keys: Shape (..., K, T)
        query: Shape (K,) for a shared master query or (..., K) per sequence

    Returns:
        Mask of shape (..., T), non-negative and summing to one
    """
    if keys.shape[-2] != K or query.shape[-1] != K:
        raise DimensionError(f"mask: keys {keys.shape} and query {query.shape} disagree with K={K}")
    logits = sum(mul(keys, reshape(query, query.shape + (1,))), axis=-2)
    return softmax(logits, scale=1.0 / math.sqrt(K))


def head_output(mask: Tensor, e_h: Tensor, p: Optional[Tensor] = None) -> Tensor:
    """
    Attention-weighted temporal sum of a head's values.

    Values are ``e_h + p``, or ``e_h`` alone when no positional term is given.

    Returns:
        Tensor of shape (..., E')
    """
    values = e_h if p is None else e_h + p
    if mask.shape[-1] != values.shape[-1]:
        raise DimensionError(f"output: mask {mask.shape} and values {values.shape} disagree on T")
    weights = reshape(mask, mask.shape[:-1] + (1, mask.shape[-1]))
    return sum(mul(values, weights), axis=-1)


def _check_inputs(e: Tensor, days: np.ndarray, E: int, T: int) -> np.ndarray:
    if e.ndim < 2 or e.shape[-2] != E or e.shape[-1] != T:
        raise DimensionError(f"expected input of shape (..., {E}, {T}), got {e.shape}")
    days = np.asarray(days, dtype=np.float64)
    if days.shape[-1:] != (T,) or days.shape[:-1] != e.shape[:-2]:
        raise DimensionError(f"days of shape {days.shape} do not match input {e.shape}")
    if np.any(np.diff(days, axis=-1) < 0):
        raise SequenceOrderError("acquisition days must be non-decreasing")
    return days


class LTAE(Module):
    """
    Lightweight Temporal Attention Encoder.

    The E input channels are split across H heads; head h maps its E' channels
    (plus the shared positional encoding) to K-dimensional keys, compares them
    to its master query and pools its own channels with the resulting mask.
    The H outputs are concatenated back to size E and fed to an MLP.
    """

    def __init__(self, config: LTAEConfig, rng: Optional[np.random.Generator] = None):
        super().__init__()
        self.config = config.validate()
        rng = rng if rng is not None else np.random.default_rng(config.seed)
        E_prime, K, H = config.E_prime, config.K, config.H

        keys = self.add_module("keys", Module())
        self.key_projections = [
            keys.add_module(str(h), Linear(E_prime, K, rng)) for h in range(H)
        ]
        self.query_projections: List[Linear] = []
        if config.query == QueryMode.PARAMETER:
            self.queries = self.add_parameter(
                "queries", rng.standard_normal((H, K)) / math.sqrt(K))
        else:
            projections = self.add_module("query_projections", Module())
            self.query_projections = [
                projections.add_module(str(h), Linear(E_prime, K, rng)) for h in range(H)
            ]
        self.mlp = self.add_module("mlp", MLP(config.mlp_widths, rng))

    def master_query(self, h: int, e_h: Tensor, p: Tensor) -> Tensor:
        """Head h's query: a learned parameter, or the temporal mean of projected inputs."""
        if self.config.query == QueryMode.PARAMETER:
            return reshape(slice_axis(self.queries, 0, h, h + 1), (self.config.K,))
        return mean(self.query_projections[h](transpose(e_h + p)), axis=-2)

    def forward(self, e: Tensor, days: np.ndarray) -> AttentionRecord:
        """
        Encode a sequence (or a batch of sequences) into one vector each.

        Args:
            e: Embeddings of shape (..., E, T)
            days: Days since the first acquisition, shape (..., T)

        Returns:
            AttentionRecord with masks (..., H, T), H head outputs (..., E')
            and the MLP output (..., mlp_widths[-1])
        """
        cfg = self.config
        e = as_tensor(e)
        days = _check_inputs(e, days, cfg.E, cfg.T)
        p = Tensor(positional_table(days, cfg.E_prime, cfg.tau))

        masks, outputs = [], []
        for h, e_h in enumerate(group_channels(e, cfg.H)):
            keys = compute_keys(e_h, p, self.key_projections[h])
            mask = attention_mask(keys, self.master_query(h, e_h, p), cfg.K)
            masks.append(mask.values)
            outputs.append(head_output(mask, e_h, p))

        output = self.mlp(concat(outputs, axis=-1))
        return AttentionRecord(masks=np.stack(masks, axis=-2), head_outputs=outputs, output=output)

    __call__ = forward


class TAE(Module):
    """
    Temporal Attention Encoder baseline.

    Keys and per-step queries come from shared projections of the full input
    (plus positional encoding) to H*K channels. Each head's master query is the
    temporal mean of its queries, and its mask pools the raw inputs, so the
    concatenated output has size H*E.
    """

    def __init__(self, config: TAEConfig, rng: Optional[np.random.Generator] = None):
        super().__init__()
        self.config = config.validate()
        rng = rng if rng is not None else np.random.default_rng(config.seed)
        self.key_projection = self.add_module("key_projection",
                                              Linear(config.E, config.qk_width, rng))
        self.query_projection = self.add_module("query_projection",
                                                Linear(config.E, config.qk_width, rng))
        self.mlp = self.add_module("mlp", MLP(config.mlp_widths, rng))

    def forward(self, e: Tensor, days: np.ndarray) -> AttentionRecord:
        """
        Encode a sequence (or batch) with the averaged-query attention.

        Returns:
            AttentionRecord with masks (..., H, T), H head outputs (..., E)
            and the MLP output
        """
        cfg = self.config
        e = as_tensor(e)
        days = _check_inputs(e, days, cfg.E, cfg.T)
        p = Tensor(positional_table(days, cfg.E, cfg.tau))
        steps = transpose(e + p)
        keys = self.key_projection(steps)
        queries = mean(self.query_projection(steps), axis=-2)

        masks, outputs = [], []
        for h in range(cfg.H):
            lo, hi = h * cfg.K, (h + 1) * cfg.K
            keys_h = transpose(slice_axis(keys, -1, lo, hi))
            mask = attention_mask(keys_h, slice_axis(queries, -1, lo, hi), cfg.K)
            masks.append(mask.values)
            outputs.append(head_output(mask, e))

        output = self.mlp(concat(outputs, axis=-1))
        return AttentionRecord(masks=np.stack(masks, axis=-2), head_outputs=outputs, output=output)

    __call__ = forward


def build_temporal_encoder(config: TemporalConfig,
                           rng: Optional[np.random.Generator] = None) -> Module:
    """Instantiate the encoder matching a configuration's type."""
    if isinstance(config, TAEConfig):
        return TAE(config, rng)
    return LTAE(config, rng)
