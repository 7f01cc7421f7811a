"""LSTM cell and multi-layer directional sequence runners.

The cell is the standard formulation: input/forget/output gates plus a tanh
candidate, c = f*c_prev + i*g, h = o*tanh(c). lstm_step records a single
fused node on the tape with a hand-derived backward pass, which keeps
per-token graph overhead low; the scalar-loop oracle in the tests pins the
math down.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import Parameter, ShapeError, Tensor, _accumulate, _record, _sigmoid, concat

GATES = ("i", "f", "o", "g")


@dataclass
class LstmLayerParams:
    """Per-gate input weights, recurrent weights, and biases for one layer."""

    w_i: Parameter
    w_f: Parameter
    w_o: Parameter
    w_g: Parameter
    u_i: Parameter
    u_f: Parameter
    u_o: Parameter
    u_g: Parameter
    b_i: Parameter
    b_f: Parameter
    b_o: Parameter
    b_g: Parameter

    @classmethod
    def init(cls, d_in: int, d_out: int, rng: np.random.Generator,
             scale: float = 0.08, forget_bias: float = 1.0) -> "LstmLayerParams":
        kw = {}
        for gate in GATES:
            kw[f"w_{gate}"] = Parameter.uniform((d_out, d_in), rng, scale)
            kw[f"u_{gate}"] = Parameter.uniform((d_out, d_out), rng, scale)
            kw[f"b_{gate}"] = Parameter.zeros(d_out)
        kw["b_f"] = Parameter.constant(d_out, forget_bias)
        return cls(**kw)

    @property
    def d_in(self) -> int:
        return self.w_i.shape[1]

    @property
    def d_out(self) -> int:
        return self.w_i.shape[0]

    def named_parameters(self) -> dict[str, Parameter]:
        out = {}
        for gate in GATES:
            for kind in ("w", "u", "b"):
                name = f"{kind}_{gate}"
                out[name] = getattr(self, name)
        return out


def lstm_step(layer: LstmLayerParams, x: Tensor, h_prev: Tensor,
              c_prev: Tensor) -> tuple[Tensor, Tensor]:
    """One cell update; returns (h, c). Recorded as one fused tape node."""
    d_out = layer.d_out
    if x.data.shape != (layer.d_in,):
        raise ShapeError(f"lstm_step: input {x.data.shape} does not match layer d_in ({layer.d_in},)")
    if h_prev.data.shape != (d_out,) or c_prev.data.shape != (d_out,):
        raise ShapeError(
            f"lstm_step: state shapes {h_prev.data.shape}/{c_prev.data.shape} "
            f"do not match layer d_out ({d_out},)")

    xv, hv, cv = x.data, h_prev.data, c_prev.data
    i = _sigmoid(layer.w_i.value @ xv + layer.u_i.value @ hv + layer.b_i.value)
    f = _sigmoid(layer.w_f.value @ xv + layer.u_f.value @ hv + layer.b_f.value)
    o = _sigmoid(layer.w_o.value @ xv + layer.u_o.value @ hv + layer.b_o.value)
    g = np.tanh(layer.w_g.value @ xv + layer.u_g.value @ hv + layer.b_g.value)
    c_new = f * cv + i * g
    tc = np.tanh(c_new)
    h_new = o * tc

    h_out = Tensor(h_new)
    c_out = Tensor(c_new)

    def node():
        dh = h_out.grad
        dc_in = c_out.grad
        if dh is None and dc_in is None:
            return
        dc = np.zeros(d_out) if dc_in is None else dc_in.copy()
        if dh is not None:
            dc += dh * o * (1.0 - tc * tc)
            da_o = (dh * tc) * o * (1.0 - o)
        else:
            da_o = np.zeros(d_out)
        da_i = (dc * g) * i * (1.0 - i)
        da_f = (dc * cv) * f * (1.0 - f)
        da_g = (dc * i) * (1.0 - g * g)
        dx = np.zeros_like(xv)
        dh_prev = np.zeros_like(hv)
        for gate, da in zip(GATES, (da_i, da_f, da_o, da_g)):
            w = getattr(layer, f"w_{gate}")
            u = getattr(layer, f"u_{gate}")
            b = getattr(layer, f"b_{gate}")
            w.grad += np.outer(da, xv)
            u.grad += np.outer(da, hv)
            b.grad += da
            dx += w.value.T @ da
            dh_prev += u.value.T @ da
        _accumulate(x, dx)
        _accumulate(h_prev, dh_prev)
        _accumulate(c_prev, dc * f)

    _record(node)
    return h_out, c_out


@dataclass
class LstmStack:
    """A stack of LSTM layers run in one direction over a sequence."""

    layers: list[LstmLayerParams]
    direction: str  # "forward" | "backward"

    @classmethod
    def init(cls, d_in: int, hidden: int, n_layers: int, direction: str,
             rng: np.random.Generator) -> "LstmStack":
        if direction not in ("forward", "backward"):
            raise ValueError(f"direction must be forward or backward, got {direction!r}")
        layers = [LstmLayerParams.init(d_in if k == 0 else hidden, hidden, rng)
                  for k in range(n_layers)]
        return cls(layers=layers, direction=direction)

    @property
    def hidden(self) -> int:
        return self.layers[0].d_out

    @property
    def output_dim(self) -> int:
        return self.hidden * len(self.layers)

    def named_parameters(self) -> dict[str, Parameter]:
        out = {}
        for k, layer in enumerate(self.layers):
            for name, p in layer.named_parameters().items():
                out[f"{k}.{name}"] = p
        return out


def run_stack(stack: LstmStack, sequence: list[Tensor]) -> Tensor:
    """Run the stack over a sequence and return the concatenated final hidden
    states of every layer (dimension hidden * n_layers), layer 0 first.

    Backward stacks consume the sequence reversed, so their "final" state
    summarizes the sequence from its end.
    """
    if not sequence:
        raise ValueError("run_stack needs a non-empty sequence")
    if stack.direction == "backward":
        sequence = list(reversed(sequence))
    finals = []
    inputs = sequence
    for layer in stack.layers:
        h = Tensor(np.zeros(layer.d_out))
        c = Tensor(np.zeros(layer.d_out))
        outputs = []
        for x in inputs:
            h, c = lstm_step(layer, x, h, c)
            outputs.append(h)
        finals.append(h)
        inputs = outputs
    if len(finals) == 1:
        return finals[0]
    return concat(finals)
