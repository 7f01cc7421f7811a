"""Fusion of directional context/base summaries into one context vector.

The enabled last-hidden-state summaries (and optionally a POS embedding) are
concatenated, pushed through a relu layer of width 1.5*h*l, then through a
final affine map back down to h*l. Only the width of the first weight matrix
changes across model variants; the output dimension is always h*l.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import Parameter, Tensor, affine, concat, lookup, relu


class ConfigurationError(ValueError):
    """The provided states or settings do not match the variant config."""


# Slot order mirrors the concatenation order: left/right context summaries
# (forward then backward), then the base form summaries.
ALL_SLOTS = ("left_fwd", "left_bwd", "right_fwd", "right_bwd", "base_fwd", "base_bwd")


@dataclass(frozen=True)
class VariantConfig:
    """Which information sources the encoder consumes.

    The five reported variants map to:
      base only            -> use_context=False, use_base=True
      context only         -> use_context=True, use_base=False
      context+base         -> both True, bidirectional context
      context+base+pos     -> plus use_pos=True
      single-direction     -> bidirectional_context=False (forward over the
                              left context, backward over the right; the base
                              form stays bidirectional)
    """

    use_context: bool = True
    use_base: bool = True
    bidirectional_context: bool = True
    use_pos: bool = False

    def __post_init__(self):
        if not (self.use_context or self.use_base):
            raise ConfigurationError("variant must use context, base form, or both")

    def state_slots(self) -> tuple[str, ...]:
        slots = []
        if self.use_context:
            if self.bidirectional_context:
                slots += ["left_fwd", "left_bwd", "right_fwd", "right_bwd"]
            else:
                slots += ["left_fwd", "right_bwd"]
        if self.use_base:
            slots += ["base_fwd", "base_bwd"]
        return tuple(slots)


VARIANT_NAMES = {
    "bs": VariantConfig(use_context=False, use_base=True),
    "ctx": VariantConfig(use_context=True, use_base=False),
    "ctx+bs": VariantConfig(),
    "ctx+bs+pos": VariantConfig(use_pos=True),
    "uni-ctx+bs+pos": VariantConfig(bidirectional_context=False, use_pos=True),
}


def resolve_variant(variant) -> VariantConfig:
    if isinstance(variant, VariantConfig):
        return variant
    try:
        return VARIANT_NAMES[variant]
    except KeyError:
        raise ConfigurationError(
            f"unknown variant {variant!r}; expected one of {sorted(VARIANT_NAMES)}") from None


def hidden_width(h: int, l: int) -> int:
    """Width of the relu layer, 1.5*h*l; a half rounds up."""
    return (3 * h * l + 1) // 2


@dataclass
class EncoderParams:
    h_mat: Parameter    # (1.5*h*l, d_cat)
    h_bias: Parameter   # (1.5*h*l,)
    t_mat: Parameter    # (h*l, 1.5*h*l)
    t_bias: Parameter   # (h*l,)
    pos_table: "Parameter | None" = None  # (#POS, d_pos)

    @classmethod
    def init(cls, cfg: VariantConfig, h: int, l: int, rng: np.random.Generator,
             n_pos: int = 0, d_pos: int = 16, scale: float = 0.08) -> "EncoderParams":
        state_dim = h * l
        d_cat = len(cfg.state_slots()) * state_dim
        pos_table = None
        if cfg.use_pos:
            if n_pos < 1:
                raise ConfigurationError("use_pos requires at least one POS tag")
            d_cat += d_pos
            pos_table = Parameter.uniform((n_pos, d_pos), rng, scale)
        width = hidden_width(h, l)
        return cls(
            h_mat=Parameter.uniform((width, d_cat), rng, scale),
            h_bias=Parameter.zeros(width),
            t_mat=Parameter.uniform((state_dim, width), rng, scale),
            t_bias=Parameter.zeros(state_dim),
            pos_table=pos_table,
        )

    def named_parameters(self) -> dict[str, Parameter]:
        out = {"h_mat": self.h_mat, "h_bias": self.h_bias,
               "t_mat": self.t_mat, "t_bias": self.t_bias}
        if self.pos_table is not None:
            out["pos_table"] = self.pos_table
        return out


def encode(states: dict[str, Tensor], pos_index: "int | None",
           cfg: VariantConfig, params: EncoderParams) -> Tensor:
    """Combine the enabled state slots (+ POS embedding) into the context
    vector o of dimension h*l."""
    wanted = cfg.state_slots()
    got = set(states)
    if got != set(wanted):
        missing = sorted(set(wanted) - got)
        extra = sorted(got - set(wanted))
        raise ConfigurationError(
            f"state slots do not match variant: missing {missing}, unexpected {extra}")
    parts = [states[s] for s in wanted]
    if cfg.use_pos:
        if pos_index is None:
            raise ConfigurationError("variant uses POS conditioning but no POS tag was given")
        parts.append(lookup(params.pos_table, pos_index))
    elif pos_index is not None:
        raise ConfigurationError("POS tag given but the variant does not use POS conditioning")
    t = relu(affine(params.h_mat, concat(parts), params.h_bias))
    return affine(params.t_mat, t, params.t_bias)
