"""Unit tests for the L-TAE and TAE temporal encoders."""

import math

import numpy as np
import pytest

from src.layers import Linear
from src.models import InvalidConfigError, LTAEConfig, QueryMode, TAEConfig
from src.temporal import (
    LTAE, TAE, SequenceOrderError, attention_mask, build_temporal_encoder, compute_keys,
    group_channels, head_output, positional_encoding, positional_table,
)
from src.tensor import DimensionError, Tensor, backward, concat, numerical_gradient
from src import tensor as tf


def _softmax(z):
    z = z - z.max()
    return np.exp(z) / np.exp(z).sum()


def _mlp(state, prefix, x, layers):
    for i in range(layers):
        x = x @ state[f"{prefix}.{i}.weight"] + state[f"{prefix}.{i}.bias"]
        if i < layers - 1:
            x = np.maximum(x, 0.0)
    return x


def ltae_oracle(model, e, days):
    """Straight-line evaluation of the L-TAE from its parameter values."""
    cfg = model.config
    state = model.state()
    E_prime = cfg.E // cfg.H
    p = np.zeros((E_prime, cfg.T))
    for i in range(1, E_prime + 1):
        for t in range(cfg.T):
            p[i - 1, t] = math.sin(days[t] / cfg.tau ** (i / E_prime))
    masks, outputs = [], []
    for h in range(cfg.H):
        x = e[h * E_prime:(h + 1) * E_prime] + p
        W, b = state[f"keys.{h}.weight"], state[f"keys.{h}.bias"]
        keys = np.array([x[:, t] @ W + b for t in range(cfg.T)])
        logits = np.array([state["queries"][h] @ keys[t] for t in range(cfg.T)])
        a = _softmax(logits / math.sqrt(cfg.K))
        masks.append(a)
        outputs.append(sum(a[t] * x[:, t] for t in range(cfg.T)))
    return np.array(masks), _mlp(state, "mlp", np.concatenate(outputs), len(cfg.mlp_widths) - 1)


def tae_oracle(model, e, days):
    """Straight-line evaluation of the TAE recipe."""
    cfg = model.config
    state = model.state()
    p = positional_table(days, cfg.E, cfg.tau)
    x = e + p
    keys = np.array([x[:, t] @ state["key_projection.weight"] + state["key_projection.bias"]
                     for t in range(cfg.T)])
    queries = np.array([x[:, t] @ state["query_projection.weight"]
                        + state["query_projection.bias"] for t in range(cfg.T)])
    master = queries.mean(axis=0)
    masks, outputs = [], []
    for h in range(cfg.H):
        block = slice(h * cfg.K, (h + 1) * cfg.K)
        a = _softmax(keys[:, block] @ master[block] / math.sqrt(cfg.K))
        masks.append(a)
        outputs.append(e @ a)
    return np.array(masks), _mlp(state, "mlp", np.concatenate(outputs), len(cfg.mlp_widths) - 1)


class TestGroupChannels:
    """Test channel grouping."""

    def test_two_heads(self):
        """Test E=4, H=2 on a single step."""
        groups = group_channels(Tensor([[1.0], [2.0], [3.0], [4.0]]), 2)
        assert [g.values.ravel().tolist() for g in groups] == [[1.0, 2.0], [3.0, 4.0]]

    def test_single_head_is_identity(self):
        """Test that H=1 returns the input."""
        e = np.random.default_rng(0).standard_normal((5, 3))
        groups = group_channels(Tensor(e), 1)
        assert len(groups) == 1
        assert np.array_equal(groups[0].values, e)

    def test_index_formula(self):
        """Test E=6, H=3 element by element."""
        e = np.random.default_rng(1).standard_normal((6, 4))
        groups = group_channels(Tensor(e), 3)
        for h in range(3):
            for i in range(2):
                for t in range(4):
                    assert groups[h].values[i, t] == e[h * 2 + i, t]

    def test_round_trip_is_exact(self):
        """Test that concatenating the groups rebuilds the input bit for bit."""
        e = np.random.default_rng(2).standard_normal((2, 12, 5))
        rebuilt = concat(group_channels(Tensor(e), 4), axis=-2)
        assert np.array_equal(rebuilt.values, e)

    def test_non_divisor_rejected(self):
        """Test that H must divide E."""
        with pytest.raises(InvalidConfigError) as exc_info:
            group_channels(Tensor(np.ones((6, 2))), 4)
        assert exc_info.value.reason == "heads_do_not_divide_channels"


class TestPositionalEncoding:
    """Test the sinusoidal day encoding."""

    def test_day_zero(self):
        """Test that day 0 encodes to zeros."""
        assert np.array_equal(positional_encoding(0.0, 8).values, np.zeros(8))

    def test_single_component(self):
        """Test E'=1."""
        assert positional_encoding(37.0, 1).values[0] == pytest.approx(math.sin(37.0 / 1000.0))

    def test_scalar_loop(self):
        """Test E'=16 at day 100 against per-component evaluation."""
        values = positional_encoding(100.0, 16, 1000.0).values
        expected = [math.sin(100.0 / 1000.0 ** (i / 16)) for i in range(1, 17)]
        np.testing.assert_allclose(values, expected, rtol=0, atol=1e-12)
        assert np.all(np.abs(values) <= 1.0)

    def test_table_layout(self):
        """Test that tables are (E', T) with one column per day."""
        days = np.array([0.0, 10.0, 250.0])
        table = positional_table(days, 4)
        assert table.shape == (4, 3)
        np.testing.assert_allclose(table[:, 2], positional_encoding(250.0, 4).values)


class TestKeysMaskOutput:
    """Test the per-head building blocks."""

    def setup_method(self):
        """Set up a key projection."""
        self.rng = np.random.default_rng(5)
        self.projection = Linear(3, 2, self.rng)

    def test_zero_weights_give_bias(self):
        """Test that keys equal the bias when weights are zero."""
        self.projection.weight.values[:] = 0.0
        self.projection.bias.values[:] = [1.5, -2.0]
        e_h = Tensor(self.rng.standard_normal((3, 4)))
        keys = compute_keys(e_h, Tensor(np.zeros((3, 4))), self.projection)
        np.testing.assert_array_equal(keys.values, np.tile([[1.5], [-2.0]], (1, 4)))

    def test_identity_projection(self):
        """Test that an identity projection returns the group."""
        projection = Linear(3, 3, self.rng)
        projection.weight.values[:] = np.eye(3)
        e_h = self.rng.standard_normal((3, 5))
        keys = compute_keys(Tensor(e_h), Tensor(np.zeros((3, 5))), projection)
        np.testing.assert_allclose(keys.values, e_h)

    def test_keys_match_affine_oracle(self):
        """Test keys step by step against W^T (e + p) + b."""
        e_h, p = self.rng.standard_normal((3, 4)), self.rng.standard_normal((3, 4))
        keys = compute_keys(Tensor(e_h), Tensor(p), self.projection).values
        W, b = self.projection.weight.values, self.projection.bias.values
        for t in range(4):
            np.testing.assert_allclose(keys[:, t], W.T @ (e_h[:, t] + p[:, t]) + b, atol=1e-14)

    def test_keys_width_mismatch(self):
        """Test that a group of the wrong width raises DimensionError."""
        with pytest.raises(DimensionError):
            compute_keys(Tensor(np.ones((4, 2))), Tensor(np.zeros((4, 2))), self.projection)

    def test_single_step_mask(self):
        """Test T=1."""
        mask = attention_mask(Tensor([[0.3], [0.7]]), Tensor([1.0, 2.0]), 2)
        assert mask.values.tolist() == [1.0]

    def test_identical_keys_give_uniform_mask(self):
        """Test constant logits."""
        keys = Tensor(np.tile([[0.4], [-1.0]], (1, 5)))
        np.testing.assert_allclose(attention_mask(keys, Tensor([0.5, 2.0]), 2).values,
                                   np.full(5, 0.2))

    def test_mask_example(self):
        """Test K=1, q=[1], keys=[0, ln 4]."""
        mask = attention_mask(Tensor([[0.0, math.log(4.0)]]), Tensor([1.0]), 1)
        np.testing.assert_allclose(mask.values, [0.2, 0.8])

    def test_one_hot_mask_selects(self):
        """Test that a one-hot mask picks e + p at that step."""
        e_h, p = self.rng.standard_normal((3, 4)), self.rng.standard_normal((3, 4))
        out = head_output(Tensor([0.0, 0.0, 1.0, 0.0]), Tensor(e_h), Tensor(p))
        np.testing.assert_allclose(out.values, e_h[:, 2] + p[:, 2])

    def test_uniform_mask_averages(self):
        """Test that a uniform mask gives the temporal mean."""
        e_h, p = self.rng.standard_normal((3, 4)), self.rng.standard_normal((3, 4))
        out = head_output(Tensor(np.full(4, 0.25)), Tensor(e_h), Tensor(p))
        np.testing.assert_allclose(out.values, (e_h + p).mean(axis=1))

    def test_weighted_sum_loop(self):
        """Test random weights against an explicit loop."""
        e_h, p = self.rng.standard_normal((3, 6)), self.rng.standard_normal((3, 6))
        a = _softmax(self.rng.standard_normal(6))
        expected = np.zeros(3)
        for t in range(6):
            expected += a[t] * (e_h[:, t] + p[:, t])
        np.testing.assert_allclose(head_output(Tensor(a), Tensor(e_h), Tensor(p)).values,
                                   expected, atol=1e-14)


class TestLTAE:
    """Test the full L-TAE forward pass."""

    def setup_method(self):
        """Set up a small random configuration."""
        self.config = LTAEConfig(E=8, T=5, H=2, K=4, mlp_widths=[8, 4], seed=11)
        self.model = LTAE(self.config)
        rng = np.random.default_rng(4)
        self.e = rng.standard_normal((8, 5))
        self.days = np.array([0.0, 12.0, 30.0, 31.0, 80.0])

    def test_matches_straight_line_oracle(self):
        """Test masks and output against an independent evaluation."""
        record = self.model(Tensor(self.e), self.days)
        masks, output = ltae_oracle(self.model, self.e, self.days)
        np.testing.assert_allclose(record.masks, masks, atol=1e-12)
        np.testing.assert_allclose(record.output.values, output, atol=1e-12)

    def test_record_shapes(self):
        """Test the attention record layout."""
        record = self.model(Tensor(self.e), self.days)
        assert record.masks.shape == (2, 5)
        assert [o.shape for o in record.head_outputs] == [(4,), (4,)]
        assert record.output.shape == (4,)

    def test_masks_sum_to_one(self):
        """Test mask validity."""
        masks = self.model(Tensor(self.e), self.days).masks
        assert np.all(masks >= 0)
        np.testing.assert_allclose(masks.sum(axis=-1), np.ones(2), atol=1e-9)

    def test_default_output_length(self):
        """Test the default configuration produces 128 values."""
        model = LTAE(LTAEConfig())
        e = np.random.default_rng(0).standard_normal((256, 24))
        record = model(Tensor(e), np.arange(24) * 10.0)
        assert record.output.shape == (128,)

    def test_single_head_matches_oracle(self):
        """Test that H=1 behaves as ungrouped attention."""
        model = LTAE(LTAEConfig(E=4, T=3, H=1, K=2, mlp_widths=[4, 3], seed=2))
        e = np.random.default_rng(8).standard_normal((4, 3))
        days = np.array([0.0, 5.0, 9.0])
        _, output = ltae_oracle(model, e, days)
        np.testing.assert_allclose(model(Tensor(e), days).output.values, output, atol=1e-12)

    def test_batched_matches_single(self):
        """Test that a batch gives the per-sample results."""
        rng = np.random.default_rng(9)
        e = rng.standard_normal((3, 8, 5))
        days = np.tile(self.days, (3, 1))
        batched = self.model(Tensor(e), days)
        for b in range(3):
            single = self.model(Tensor(e[b]), self.days)
            np.testing.assert_allclose(batched.output.values[b], single.output.values, atol=1e-12)
            np.testing.assert_allclose(batched.masks[b], single.masks, atol=1e-12)

    def test_equal_days_permutation_invariance(self):
        """Test that permuting steps with equal days leaves the output unchanged."""
        days = np.full(5, 40.0)
        order = np.array([3, 0, 4, 1, 2])
        original = self.model(Tensor(self.e), days).output.values
        permuted = self.model(Tensor(self.e[:, order]), days).output.values
        np.testing.assert_allclose(permuted, original, atol=1e-9)

    def test_head_outputs_are_convex_combinations(self):
        """Test componentwise bounds of every head output."""
        record = self.model(Tensor(self.e), self.days)
        p = positional_table(self.days, 4)
        for h, out in enumerate(record.head_outputs):
            values = self.e[h * 4:(h + 1) * 4] + p
            assert np.all(out.values >= values.min(axis=1) - 1e-12)
            assert np.all(out.values <= values.max(axis=1) + 1e-12)

    def test_wrong_shape(self):
        """Test that an input of the wrong E raises DimensionError."""
        with pytest.raises(DimensionError):
            self.model(Tensor(np.ones((6, 5))), self.days)

    def test_decreasing_days(self):
        """Test that days must be non-decreasing."""
        with pytest.raises(SequenceOrderError):
            self.model(Tensor(self.e), np.array([0.0, 5.0, 3.0, 8.0, 9.0]))

    def test_gradient_check(self):
        """Test every parameter gradient against central differences."""
        weights = Tensor(np.random.default_rng(3).standard_normal(4))

        def loss():
            return tf.sum(tf.mul(self.model(Tensor(self.e), self.days).output, weights))

        self.model.zero_grad()
        backward(loss())
        for name, parameter in self.model.named_parameters():
            expected = numerical_gradient(loss, parameter)
            np.testing.assert_allclose(parameter.grad, expected, rtol=1e-4, atol=1e-8,
                                       err_msg=name)


class TestAveragedQuery:
    """Test the averaged-query variant of the L-TAE."""

    def test_queries_come_from_projections(self):
        """Test that the variant registers per-head query projections."""
        config = LTAEConfig(E=8, T=4, H=2, K=3, mlp_widths=[8, 2], query=QueryMode.AVERAGED)
        names = [name for name, _ in LTAE(config).named_parameters()]
        assert "queries" not in names
        assert "query_projections.0.weight" in names
        assert "query_projections.1.bias" in names

    def test_more_parameters_than_ltae(self):
        """Test that averaging queries costs parameters."""
        base = LTAEConfig(E=8, T=4, H=2, K=3, mlp_widths=[8, 2])
        variant = LTAEConfig(E=8, T=4, H=2, K=3, mlp_widths=[8, 2], query=QueryMode.AVERAGED)
        assert LTAE(variant).parameter_count() > LTAE(base).parameter_count()

    def test_masks_sum_to_one(self):
        """Test mask validity of the variant."""
        config = LTAEConfig(E=8, T=4, H=2, K=3, mlp_widths=[8, 2], query=QueryMode.AVERAGED)
        e = np.random.default_rng(0).standard_normal((8, 4))
        masks = LTAE(config)(Tensor(e), np.array([0.0, 1.0, 2.0, 3.0])).masks
        np.testing.assert_allclose(masks.sum(axis=-1), np.ones(2), atol=1e-9)


class TestTAE:
    """Test the TAE baseline."""

    def setup_method(self):
        """Set up a small TAE."""
        self.config = TAEConfig(E=6, T=4, H=2, K=3, mlp_widths=[12, 5], seed=3)
        self.model = TAE(self.config)
        self.e = np.random.default_rng(6).standard_normal((6, 4))
        self.days = np.array([0.0, 3.0, 17.0, 40.0])

    def test_matches_oracle(self):
        """Test against a straight-line evaluation of the averaged-query recipe."""
        record = self.model(Tensor(self.e), self.days)
        masks, output = tae_oracle(self.model, self.e, self.days)
        np.testing.assert_allclose(record.masks, masks, atol=1e-12)
        np.testing.assert_allclose(record.output.values, output, atol=1e-12)

    def test_head_outputs_have_full_width(self):
        """Test that values are the raw E-wide inputs."""
        record = self.model(Tensor(self.e), self.days)
        assert [o.shape for o in record.head_outputs] == [(6,), (6,)]

    def test_single_step(self):
        """Test T=1: the mask is [1] and heads return the input."""
        model = TAE(TAEConfig(E=4, T=1, H=2, K=2, mlp_widths=[8, 3]))
        e = np.random.default_rng(1).standard_normal((4, 1))
        record = model(Tensor(e), np.array([0.0]))
        np.testing.assert_array_equal(record.masks, np.ones((2, 1)))
        for out in record.head_outputs:
            np.testing.assert_allclose(out.values, e[:, 0])

    def test_constant_sequence(self):
        """Test that a constant sequence is returned whatever the mask."""
        e = np.tile(np.arange(6.0)[:, None], (1, 4))
        record = self.model(Tensor(e), self.days)
        for out in record.head_outputs:
            np.testing.assert_allclose(out.values, np.arange(6.0), atol=1e-12)

    def test_more_parameters_than_ltae(self):
        """Test parameter economy of the L-TAE at equal configuration."""
        ltae = LTAEConfig(E=8, T=5, H=2, K=4, mlp_widths=[8, 4])
        tae = TAEConfig.from_ltae(ltae)
        assert TAE(tae).parameter_count() > LTAE(ltae).parameter_count()

    def test_builder_dispatch(self):
        """Test build_temporal_encoder picks the class from the config type."""
        assert isinstance(build_temporal_encoder(self.config), TAE)
        assert isinstance(build_temporal_encoder(LTAEConfig(E=4, T=2, H=2, K=2, mlp_widths=[4])),
                          LTAE)
