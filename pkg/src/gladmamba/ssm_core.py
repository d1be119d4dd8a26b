"""Selective state-space machinery shared by the two fusion blocks.

A diagonal linear state-space layer is driven by input-dependent
parameters: continuous dynamics dh/dt = A h + B x are discretized per step
with a zero-order hold under a per-step, per-channel step size Delta, then
unrolled sequentially:

    h_t = Abar_t * h_{t-1} + Bbar_t * x_t,     y_t = <C_t, h_t>

The recurrence is a genuine sequential loop over the time axis; everything
around it is vectorized, and the scan ships a hand-derived backward pass so
training does not pay for a per-step autograd graph.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch
import torch.nn.functional as F
from torch import nn

SERIES_EPS = 1e-8


@dataclass(frozen=True)
class SSMBlockConfig:
    state_size: int = 8
    conv_width: int = 4
    delta_rank: int = 4


def hippo_diag(state_size: int, dtype: torch.dtype = torch.float64) -> torch.Tensor:
    """Diagonal-real HiPPO-style initialization: A_n = -(n+1), n = 0..N-1."""
    if state_size < 1:
        raise ValueError(f"state_size must be >= 1, got {state_size}")
    return -torch.arange(1, state_size + 1, dtype=dtype)


def hippo_log_init(
    state_size: int, channels: int, dtype: torch.dtype = torch.float64
) -> torch.Tensor:
    """Log-magnitude parameterization of :func:`hippo_diag`, per channel.

    The layer stores log(-A) so that A = -exp(log_A) stays strictly negative
    under unconstrained optimization.
    """
    row = torch.log(-hippo_diag(state_size, dtype=dtype))
    return row.expand(channels, state_size).contiguous()


@dataclass(frozen=True)
class SSMDiscrete:
    """Per-step discretized dynamics: both tensors have shape (T, d, N)."""

    Abar: torch.Tensor
    Bbar: torch.Tensor


def discretize_zoh(
    A: torch.Tensor,
    B: torch.Tensor,
    delta: torch.Tensor,
    series_eps: float = SERIES_EPS,
) -> SSMDiscrete:
    """Zero-order-hold discretization for diagonal A.

    A: (d, N) diagonal continuous dynamics; B: (T, N) input projections;
    delta: (T, d) strictly positive step sizes.  Elementwise:

        Abar = exp(delta * A),   Bbar = (exp(delta * A) - 1) / A * B

    with the series limit Bbar = delta * B when |delta * A| < series_eps,
    which keeps the expression well-defined as A -> 0.
    """
    if A.dim() != 2:
        raise ValueError(f"A must have shape (d, N), got {tuple(A.shape)}")
    if B.dim() != 2 or delta.dim() != 2:
        raise ValueError("B must have shape (T, N) and delta shape (T, d)")
    if B.shape[0] != delta.shape[0]:
        raise ValueError(f"B has {B.shape[0]} steps but delta has {delta.shape[0]}")
    if A.shape[0] != delta.shape[1] or A.shape[1] != B.shape[1]:
        raise ValueError(
            f"shape mismatch: A {tuple(A.shape)}, B {tuple(B.shape)}, delta {tuple(delta.shape)}"
        )
    if bool((delta <= 0).any()):
        raise ValueError("delta must be strictly positive")
    dA = delta.unsqueeze(-1) * A.unsqueeze(0)  # (T, d, N)
    abar = torch.exp(dA)
    small = dA.abs() < series_eps
    # Guard the division so the unselected branch stays finite for autograd.
    safe_a = torch.where(small, torch.ones_like(dA), A.unsqueeze(0).expand_as(dA))
    ratio = torch.expm1(dA) / safe_a
    b_row = B.unsqueeze(1)  # (T, 1, N)
    bbar = torch.where(small, delta.unsqueeze(-1) * b_row, ratio * b_row)
    return SSMDiscrete(Abar=abar, Bbar=bbar)


class _SelectiveScan(torch.autograd.Function):
    """Sequential diagonal-SSM scan with an exact hand-written backward."""

    @staticmethod
    def forward(ctx, abar: torch.Tensor, bbar: torch.Tensor, c: torch.Tensor, x: torch.Tensor):
        steps = abar.shape[0]
        u = bbar * x.unsqueeze(-1)  # (T, d, N)
        h = abar.new_zeros(abar.shape[1], abar.shape[2])
        collected = []
        for t in range(steps):
            h = torch.addcmul(u[t], abar[t], h)
            collected.append(h)
        states = torch.stack(collected, dim=0)
        y = torch.einsum("tdn,tn->td", states, c)
        ctx.save_for_backward(abar, bbar, c, x, states)
        return y

    @staticmethod
    def backward(ctx, grad_y: torch.Tensor):
        abar, bbar, c, x, states = ctx.saved_tensors
        steps = abar.shape[0]
        grad_y = grad_y.contiguous()
        # Direct contribution of y_t to h_t, then the reverse-time recursion
        # g_t = dL/dh_t = ghat_t + Abar_{t+1} * g_{t+1}.
        ghat = grad_y.unsqueeze(-1) * c.unsqueeze(1)  # (T, d, N)
        acc = ghat[steps - 1]
        collected = [acc]
        for t in range(steps - 2, -1, -1):
            acc = torch.addcmul(ghat[t], abar[t + 1], acc)
            collected.append(acc)
        collected.reverse()
        g = torch.stack(collected, dim=0)
        prev = torch.cat([torch.zeros_like(states[:1]), states[:-1]], dim=0)
        grad_abar = g * prev
        grad_bbar = g * x.unsqueeze(-1)
        grad_x = (g * bbar).sum(dim=-1)
        grad_c = torch.einsum("td,tdn->tn", grad_y, states)
        return grad_abar, grad_bbar, grad_c, grad_x


def selective_scan(disc: SSMDiscrete, C: torch.Tensor, x: torch.Tensor) -> torch.Tensor:
    """Run the recurrence over the sequence; returns outputs of shape (T, d).

    C has shape (T, N) and x has shape (T, d).  Output y_t depends only on
    x_1..x_t (and the step-t parameters): the scan is causal by construction.
    """
    steps, d, n = disc.Abar.shape
    if disc.Bbar.shape != disc.Abar.shape:
        raise ValueError("Abar and Bbar must have matching shapes")
    if C.shape != (steps, n):
        raise ValueError(f"C must have shape ({steps}, {n}), got {tuple(C.shape)}")
    if x.shape != (steps, d):
        raise ValueError(f"x must have shape ({steps}, {d}), got {tuple(x.shape)}")
    return _SelectiveScan.apply(disc.Abar, disc.Bbar, C, x)


class CausalDepthwiseConv1d(nn.Module):
    """Depthwise 1-d convolution over the sequence axis, left-padded.

    Output step t mixes inputs t-width+1 .. t only; the final kernel tap
    multiplies the current step.
    """

    def __init__(self, channels: int, width: int):
        super().__init__()
        if width < 1:
            raise ValueError(f"conv width must be >= 1, got {width}")
        self.channels = channels
        self.width = width
        self.weight = nn.Parameter(torch.empty(channels, width))
        self.bias = nn.Parameter(torch.empty(channels))
        bound = 1.0 / math.sqrt(width)
        nn.init.uniform_(self.weight, -bound, bound)
        nn.init.uniform_(self.bias, -bound, bound)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        steps = x.shape[0]
        seq = x.t().unsqueeze(0)  # (1, d, T)
        out = F.conv1d(
            seq, self.weight.unsqueeze(1), self.bias, padding=self.width - 1, groups=self.channels
        )
        return out[0, :, :steps].t()


class SequencePreprocess(nn.Module):
    """Shared sequence front end: LayerNorm -> Linear -> causal conv -> SiLU."""

    def __init__(self, d_model: int, conv_width: int):
        super().__init__()
        self.norm = nn.LayerNorm(d_model)
        self.proj = nn.Linear(d_model, d_model)
        self.conv = CausalDepthwiseConv1d(d_model, conv_width)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return F.silu(self.conv(self.proj(self.norm(x))))


class SelectiveSSM(nn.Module):
    """Diagonal SSM whose (B, C, Delta) are read off a conditioning sequence.

    `forward(x, source)` scans over `x` with parameters produced from
    `source`; the two sequences must be step-aligned.  Delta goes through a
    low-rank projection and a softplus (zero conditioning gives
    softplus(0) because the up-projection bias starts at zero).
    """

    def __init__(self, d_model: int, state_size: int, delta_rank: int):
        super().__init__()
        self.d_model = d_model
        self.state_size = state_size
        self.a_log = nn.Parameter(hippo_log_init(state_size, d_model, dtype=torch.float32))
        self.b_proj = nn.Linear(d_model, state_size, bias=False)
        self.c_proj = nn.Linear(d_model, state_size, bias=False)
        self.dt_down = nn.Linear(d_model, delta_rank, bias=False)
        self.dt_up = nn.Linear(delta_rank, d_model)
        nn.init.zeros_(self.dt_up.bias)

    def parameterize(self, source: torch.Tensor):
        b = self.b_proj(source)
        c = self.c_proj(source)
        delta = F.softplus(self.dt_up(self.dt_down(source)))
        return b, c, delta

    def forward(self, x: torch.Tensor, source: torch.Tensor) -> torch.Tensor:
        if x.shape[0] != source.shape[0]:
            raise ValueError(
                f"x has {x.shape[0]} steps but conditioning source has {source.shape[0]}"
            )
        b, c, delta = self.parameterize(source)
        disc = discretize_zoh(-torch.exp(self.a_log), b, delta)
        return selective_scan(disc, c, x)


class GatedResidualOut(nn.Module):
    """Output stage: SiLU gate from the raw input, projection, double-norm
    residual fuse.  Maps (scan output y, block input h) -> refined h."""

    def __init__(self, d_model: int):
        super().__init__()
        self.norm_gate = nn.LayerNorm(d_model)
        self.gate_proj = nn.Linear(d_model, d_model)
        self.out_proj = nn.Linear(d_model, d_model)
        self.norm_inner = nn.LayerNorm(d_model)
        self.norm_outer = nn.LayerNorm(d_model)

    def forward(self, y: torch.Tensor, h: torch.Tensor) -> torch.Tensor:
        gate = F.silu(self.gate_proj(self.norm_gate(h)))
        return self.norm_outer(self.norm_inner(self.out_proj(y * gate)) + h)
