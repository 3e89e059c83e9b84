"""Exact parameter and FLOP accounting of the temporal encoders.

Counting convention: one multiply-accumulate is 2 FLOPs, so an affine map
in -> out costs 2*in*out (the bias add is the last accumulate). An exp or a
division costs 2 FLOPs, an addition 1 FLOP, and each ReLU on a hidden MLP
layer 1 FLOP per element. Positional adds are charged to every head that
consumes them.
"""

from dataclasses import asdict
from typing import Any, Dict, List, Optional

from src.models import (
    AsymptoticCost, CostReport, InvalidConfigError, LTAEConfig, QueryMode, TAEConfig,
    TemporalConfig, Term,
)

CONVENTION = ("MAC=2 FLOPs (affine in->out = 2*in*out, bias folded), exp=2, div=2, add=1, "
              "hidden ReLU=1 per element, positional add charged per head")

PRESETS: Dict[str, TemporalConfig] = {
    "ltae-default": LTAEConfig(E=256, T=24, H=16, K=8, mlp_widths=[256, 128]),
    "ltae-9k": LTAEConfig(E=128, T=24, H=8, K=8, mlp_widths=[128]),
    "ltae-34k": LTAEConfig(E=128, T=24, H=16, K=8, mlp_widths=[128, 128]),
    "ltae-112k": LTAEConfig(E=256, T=24, H=16, K=8, mlp_widths=[256, 128]),
    "ltae-288k": LTAEConfig(E=512, T=24, H=32, K=8, mlp_widths=[512, 128]),
    "ltae-740k": LTAEConfig(E=1024, T=24, H=32, K=8, mlp_widths=[1024, 256, 128]),
    "ltae-3840k": LTAEConfig(E=2048, T=24, H=64, K=8, mlp_widths=[2048, 1024, 256, 128]),
    "tae-default": TAEConfig(E=256, T=24, H=16, K=8, mlp_widths=[4096, 128]),
    "tae-19k": TAEConfig(E=64, T=24, H=2, K=8, mlp_widths=[128, 128]),
    "tae-39k": TAEConfig(E=64, T=24, H=4, K=8, mlp_widths=[256, 128]),
    "tae-76k": TAEConfig(E=128, T=24, H=4, K=8, mlp_widths=[512, 128]),
    "tae-195k": TAEConfig(E=256, T=24, H=4, K=8, mlp_widths=[1024, 128]),
    "tae-360k": TAEConfig(E=256, T=24, H=4, K=8, mlp_widths=[1024, 256, 128]),
    "tae-641k": TAEConfig(E=256, T=24, H=8, K=8, mlp_widths=[2048, 256, 128]),
    "tae-2592k": TAEConfig(E=1024, T=24, H=8, K=16, mlp_widths=[8192, 256, 128]),
}

# One-factor sweeps around ltae-default.
PRESETS.update({f"ltae-h{h}": LTAEConfig(E=256, T=24, H=h, K=8, mlp_widths=[256, 128])
                for h in (2, 4, 8, 16, 32)})
PRESETS.update({f"ltae-k{k}": LTAEConfig(E=256, T=24, H=16, K=k, mlp_widths=[256, 128])
                for k in (2, 4, 8, 16, 32)})
PRESETS.update({f"ltae-e{e}": LTAEConfig(E=e, T=24, H=16, K=8, mlp_widths=[e, 128])
                for e in (32, 64, 128, 256, 512)})

# Size sweeps, smallest first.
LTAE_TABLE = ["ltae-9k", "ltae-34k", "ltae-112k", "ltae-288k", "ltae-740k", "ltae-3840k"]
TAE_TABLE = ["tae-19k", "tae-39k", "tae-76k", "tae-195k", "tae-360k", "tae-641k", "tae-2592k"]
HEAD_SWEEP = ["ltae-h2", "ltae-h4", "ltae-h8", "ltae-h16", "ltae-h32"]
KEY_SWEEP = ["ltae-k2", "ltae-k4", "ltae-k8", "ltae-k16", "ltae-k32"]
CHANNEL_SWEEP = ["ltae-e32", "ltae-e64", "ltae-e128", "ltae-e256", "ltae-e512"]


def preset(name: str) -> TemporalConfig:
    """
    A fresh copy of a named configuration.

    Raises:
        InvalidConfigError: If the name is unknown
    """
    if name not in PRESETS:
        raise InvalidConfigError(f"Unknown preset '{name}'. Available: {', '.join(PRESETS)}",
                                 reason="unknown_preset")
    config = PRESETS[name]
    data = asdict(config)
    return type(config)(**data)


def _mlp_params(widths: List[int]) -> int:
    return sum(fan_in * fan_out + fan_out for fan_in, fan_out in zip(widths[:-1], widths[1:]))


def _mlp_flops(widths: List[int]) -> int:
    affine = sum(2 * fan_in * fan_out for fan_in, fan_out in zip(widths[:-1], widths[1:]))
    hidden = sum(widths[1:-1])
    return affine + hidden


def count_params(config: TemporalConfig) -> int:
    """
    Number of scalar parameters of a temporal encoder.

    Raises:
        InvalidConfigError: If the configuration is invalid
    """
    config.validate()
    if isinstance(config, TAEConfig):
        projection = config.E * config.qk_width + config.qk_width
        return 2 * projection + _mlp_params(config.mlp_widths)

    H, K, E_prime = config.H, config.K, config.E_prime
    keys = H * (E_prime * K + K)
    queries = H * K if config.query == QueryMode.PARAMETER else H * (E_prime * K + K)
    return keys + queries + _mlp_params(config.mlp_widths)


def count_flops(config: TemporalConfig, T: Optional[int] = None) -> CostReport:
    """
    FLOPs to encode one sequence of length T, split by stage.

    Args:
        config: Temporal encoder configuration
        T: Sequence length; defaults to the configuration's T

    Returns:
        CostReport with exact integer counts and the method's asymptotic terms

    Raises:
        InvalidConfigError: If the configuration or T is invalid
    """
    config.validate()
    T = config.T if T is None else T
    if not isinstance(T, int) or T < 1:
        raise InvalidConfigError(f"T must be a positive integer, got {T!r}", reason="invalid_dimension")
    H, K = config.H, config.K
    mask = H * 2 * T * K + T * H * (2 + 2)

    if isinstance(config, TAEConfig):
        E = config.E
        return CostReport(
            method="TAE", T=T, param_count=count_params(config),
            flops_keys=T * H * (2 * E * K + E),
            flops_queries=T * H * 2 * E * K + H * K * T,
            flops_mask=mask,
            flops_output=H * T * 2 * E,
            flops_mlp=_mlp_flops(config.mlp_widths),
            asymptotic=asymptotic_cost("TAE"),
        )

    E_prime = config.E_prime
    queries = 0
    if config.query == QueryMode.AVERAGED:
        queries = T * H * 2 * E_prime * K + H * K * T
    return CostReport(
        method="L-TAE", T=T, param_count=count_params(config),
        flops_keys=T * H * (2 * E_prime * K + E_prime),
        flops_queries=queries,
        flops_mask=mask,
        flops_output=H * T * 2 * E_prime,
        flops_mlp=_mlp_flops(config.mlp_widths),
        asymptotic=asymptotic_cost("L-TAE"),
    )


def _term(display: str, *monomials: str) -> Term:
    return Term(display=display, monomials=[tuple(m) for m in monomials])


ASYMPTOTIC = {
    "ltae": AsymptoticCost("L-TAE", keys=_term("O(TEK)", "TEK"), mask=_term("O(HTK)", "HTK"),
                           output=_term("O(EX)", "EX")),
    "tae": AsymptoticCost("TAE", keys=_term("O(HTEK)", "HTEK"), mask=_term("O(HTK)", "HTK"),
                          output=_term("O(HEX)", "HEX")),
    "transformer": AsymptoticCost("Transformer", keys=_term("O(HTEK)", "HTEK"),
                                  mask=_term("O(HT²K)", "HTTK"), output=_term("O(HEX)", "HEX")),
    "gru": AsymptoticCost("GRU", combined=_term("O(MT(E+M))", "MTE", "MMT"),
                          output=_term("O(MX)", "MX")),
}


def asymptotic_cost(method: str) -> AsymptoticCost:
    """
    Asymptotic cost terms of a temporal module.

    Symbols: T sequence length, E input size, K key size, H heads, M hidden
    state size, X output size.

    Args:
        method: One of L-TAE, TAE, Transformer, GRU (case and dashes ignored)

    Raises:
        InvalidConfigError: For an unknown method
    """
    key = method.replace("-", "").replace("_", "").lower()
    if key not in ASYMPTOTIC:
        raise InvalidConfigError(f"Unknown method '{method}'", reason="unknown_method")
    return ASYMPTOTIC[key]


def scaling_factor(term: Term, symbol: str, factor: int = 2) -> int:
    """Growth of a term's leading monomial when one symbol is multiplied by factor."""
    degree = max(monomial.count(symbol) for monomial in term.monomials)
    return factor ** degree


def report_to_dict(report: CostReport, params: bool = True, flops: bool = True) -> Dict[str, Any]:
    """
    Structured form of a report with fixed field names.

    FLOP fields are given raw and in MFLOPs (``mflops_*``).
    """
    document: Dict[str, Any] = {"method": report.method, "T": report.T}
    if params:
        document["param_count"] = report.param_count
    if flops:
        parts = {
            "keys": report.flops_keys,
            "queries": report.flops_queries,
            "mask": report.flops_mask,
            "output": report.flops_output,
            "mlp": report.flops_mlp,
            "total": report.flops_total,
        }
        for name, value in parts.items():
            document[f"flops_{name}"] = value
        for name, value in parts.items():
            document[f"mflops_{name}"] = round(value / 1e6, 6)
        document["convention"] = CONVENTION
    cost = report.asymptotic
    document["asymptotic"] = {
        column: getattr(cost, column).display
        for column in ("keys", "mask", "output", "combined")
        if getattr(cost, column) is not None
    }
    return document
