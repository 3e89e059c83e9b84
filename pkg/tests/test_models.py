"""Unit tests for core data models."""

import numpy as np
import pytest

from src.errors import ConfigurationError
from src.models import (
    ConfusionMatrix, CostReport, InvalidConfigError, LTAEConfig, OptimizerKind, PayloadKind,
    PipelineConfig, QueryMode, RunConfig, SynthSpec, TAEConfig, TemporalKind, TrainSettings,
)


def test_enum_values():
    """Test the string values used in configuration files."""
    assert TemporalKind.LTAE.value == "ltae"
    assert TemporalKind.TAE.value == "tae"
    assert QueryMode.PARAMETER.value == "parameter"
    assert QueryMode.AVERAGED.value == "averaged"
    assert PayloadKind.PIXEL_SETS.value == "pixel_sets"
    assert OptimizerKind.ADAM.value == "adam"


def test_ltae_defaults():
    """Test the default L-TAE hyper-parameters."""
    config = LTAEConfig().validate()
    assert (config.E, config.H, config.K, config.T) == (256, 16, 8, 24)
    assert config.E_prime == 16
    assert config.output_size == 128
    assert config.tau == 1000.0


def test_minimal_ltae_is_valid():
    """Test E = H = K = 1 with a one-width MLP."""
    config = LTAEConfig(E=1, H=1, K=1, T=1, mlp_widths=[1]).validate()
    assert config.E_prime == 1


def test_invalid_invariants():
    """Test the reasons attached to violated invariants."""
    cases = [
        (LTAEConfig(E=10, H=4, mlp_widths=[10]), "heads_do_not_divide_channels"),
        (LTAEConfig(E=8, H=2, mlp_widths=[4]), "mlp_input_mismatch"),
        (LTAEConfig(E=8, H=2, K=0, mlp_widths=[8]), "invalid_dimension"),
        (LTAEConfig(E=8, H=2, tau=0.0, mlp_widths=[8]), "invalid_tau"),
        (LTAEConfig(E=8, H=2, mlp_widths=[]), "empty_widths"),
    ]
    for config, reason in cases:
        with pytest.raises(InvalidConfigError) as exc_info:
            config.validate()
        assert exc_info.value.reason == reason
        assert isinstance(exc_info.value, ConfigurationError)


def test_tae_from_ltae():
    """Test that the matching TAE widens only the MLP input."""
    ltae = LTAEConfig()
    tae = TAEConfig.from_ltae(ltae).validate()
    assert tae.mlp_widths == [16 * 256, 128]
    assert (tae.E, tae.H, tae.K, tae.T) == (ltae.E, ltae.H, ltae.K, ltae.T)
    assert tae.qk_width == 128


def test_tae_mlp_input_checked():
    """Test that the TAE MLP must start at H * E."""
    with pytest.raises(InvalidConfigError) as exc_info:
        TAEConfig(E=8, H=2, mlp_widths=[8, 4]).validate()
    assert exc_info.value.reason == "mlp_input_mismatch"


def test_pipeline_widths_checked():
    """Test the chaining of spatial, temporal and decoder widths."""
    temporal = LTAEConfig(E=8, T=4, H=2, K=2, mlp_widths=[8, 4])
    good = PipelineConfig(temporal=temporal, num_classes=3, pixel_widths=[5, 6],
                          pooled_widths=[12, 8], decoder_widths=[4, 4, 3])
    assert good.validate().temporal_kind == TemporalKind.LTAE
    assert good.input_channels == 5

    bad_pool = PipelineConfig(temporal=temporal, num_classes=3, pixel_widths=[5, 6],
                              pooled_widths=[6, 8], decoder_widths=[4, 4, 3])
    with pytest.raises(InvalidConfigError) as exc_info:
        bad_pool.validate()
    assert exc_info.value.reason == "pooled_input_mismatch"

    bad_decoder = PipelineConfig(temporal=temporal, num_classes=2, pixel_widths=[5, 6],
                                 pooled_widths=[12, 8], decoder_widths=[4, 4, 3])
    with pytest.raises(InvalidConfigError) as exc_info:
        bad_decoder.validate()
    assert exc_info.value.reason == "decoder_output_mismatch"


def test_embeddings_pipeline_skips_spatial_widths():
    """Test that an embeddings pipeline reads E as its input width."""
    config = PipelineConfig(temporal=LTAEConfig(E=6, T=3, H=3, K=2, mlp_widths=[6, 5]),
                            num_classes=2, payload_kind=PayloadKind.EMBEDDINGS,
                            pooled_widths=[1], decoder_widths=[5, 4, 2])
    assert config.validate().input_channels == 6


def test_run_config_defaults_validate():
    """Test that the default run configuration is consistent."""
    assert RunConfig().validate().model.num_classes == 20


def test_training_settings_checked():
    """Test training setting invariants."""
    with pytest.raises(InvalidConfigError):
        TrainSettings(batch_size=0).validate()
    with pytest.raises(InvalidConfigError):
        TrainSettings(betas=(0.9, 1.0)).validate()


def test_synth_spec_checked():
    """Test generator parameter invariants."""
    with pytest.raises(InvalidConfigError):
        SynthSpec(T=1).validate()
    with pytest.raises(InvalidConfigError):
        SynthSpec(num_classes=2, event_centers=[10.0]).validate()
    with pytest.raises(InvalidConfigError):
        SynthSpec(channels=3, signal_channels=[3]).validate()


def test_confusion_matrix_update():
    """Test ConfusionMatrix accumulation."""
    cm = ConfusionMatrix.empty(3)
    cm.update([0, 1, 2, 2], [0, 2, 2, 2])
    assert cm.num_classes == 3
    assert cm.total == 4
    assert cm.counts[2, 2] == 2
    assert cm.counts[1, 2] == 1
    assert cm.counts.dtype == np.int64


def test_cost_report_total():
    """Test that the FLOP total sums the columns."""
    report = CostReport(method="L-TAE", T=1, param_count=3, flops_keys=3, flops_queries=0,
                        flops_mask=6, flops_output=2, flops_mlp=0, asymptotic=None)
    assert report.flops_total == 11


def test_booleans_are_not_dimensions():
    """Test that True is rejected where a positive integer is expected."""
    with pytest.raises(InvalidConfigError) as exc_info:
        LTAEConfig(E=4, H=True, K=2, mlp_widths=[4]).validate()
    assert exc_info.value.reason == "invalid_dimension"
    with pytest.raises(InvalidConfigError):
        TrainSettings(epochs=True).validate()
    with pytest.raises(InvalidConfigError):
        LTAEConfig(E=4, H=2, K=2, mlp_widths=[4, True]).validate()


def test_non_numeric_constants_rejected():
    """Test that string constants fail validation instead of comparison."""
    with pytest.raises(InvalidConfigError) as exc_info:
        LTAEConfig(tau="abc").validate()
    assert exc_info.value.reason == "invalid_tau"
    with pytest.raises(InvalidConfigError):
        TrainSettings(learning_rate="1e-3").validate()
    with pytest.raises(InvalidConfigError):
        SynthSpec(noise="0.3").validate()
