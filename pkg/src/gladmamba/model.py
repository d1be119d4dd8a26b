"""Full two-view model: encoders, view fusion, spectrum-guided refinement.

For a packed batch the pipeline is

    view features --encoder--> node embeddings --+--> view-fused node refinement
                                                 `--> mean readout --spectrum-guided--> graph refinement

Node-level and graph-level branches run in parallel off the encoder: the
graph branch consumes the encoder readout, not the refined node sequence.
Ablation variants drop or rewire blocks; a dropped block is bypassed by
identity so downstream shapes (and byte-for-byte inputs) are preserved.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
import torch
from torch import nn

from .config import ABLATION_VARIANTS, RunConfig
from .dataset_io import GraphBatch
from .gnn_encoder import (
    EncoderConfig,
    GraphEncoder,
    default_encoder_kind,
    gcn_adjacency,
    sum_adjacency,
)
from .sgm import SpectrumGuidedMamba
from .ssm_core import SSMBlockConfig
from .vfm import ViewFusedMamba

DEFAULT_DTYPE = torch.float64


@dataclass(frozen=True)
class ModelDims:
    """Input widths the model must be built for (they depend on the data)."""

    input_dim_o: int
    input_dim_a: int
    rq_dim_o: int
    rq_dim_a: int


@dataclass(frozen=True)
class TorchGraphBatch:
    """Tensor view of one packed batch, ready for the model."""

    batch: GraphBatch
    x_o: torch.Tensor
    x_a: torch.Tensor
    rq_o: torch.Tensor
    rq_a: torch.Tensor
    adj_norm: torch.Tensor
    adj_sum: torch.Tensor
    membership: torch.Tensor

    @property
    def graph_count(self) -> int:
        return self.batch.graph_count


def collate_batch(
    batch: GraphBatch,
    x_o: np.ndarray,
    x_a: np.ndarray,
    rq_o: np.ndarray,
    rq_a: np.ndarray,
    dtype: torch.dtype = DEFAULT_DTYPE,
) -> TorchGraphBatch:
    return TorchGraphBatch(
        batch=batch,
        x_o=torch.from_numpy(np.ascontiguousarray(x_o)).to(dtype),
        x_a=torch.from_numpy(np.ascontiguousarray(x_a)).to(dtype),
        rq_o=torch.from_numpy(np.ascontiguousarray(rq_o)).to(dtype),
        rq_a=torch.from_numpy(np.ascontiguousarray(rq_a)).to(dtype),
        adj_norm=gcn_adjacency(batch, dtype=dtype),
        adj_sum=sum_adjacency(batch, dtype=dtype),
        membership=torch.from_numpy(batch.membership),
    )


@dataclass(frozen=True)
class ModelOutput:
    z_node_o: torch.Tensor
    z_node_a: torch.Tensor
    z_graph_o: torch.Tensor
    z_graph_a: torch.Tensor
    h_graph_o: torch.Tensor
    h_graph_a: torch.Tensor


class GladMamba(nn.Module):
    """Two encoders plus the selective-SSM refinement blocks.

    `ablation` picks a variant: "no-vfm" / "no-sgm" / "no-mamba" bypass
    blocks entirely (identity, no parameters); "no-vf-ssm" keeps the fused
    block but conditions each view on itself; "no-sg-ssm" conditions the
    graph scan on raw graph embeddings instead of Rayleigh profiles.
    """

    def __init__(
        self,
        dims: ModelDims,
        encoder_cfg: EncoderConfig | None = None,
        vfm_cfg: SSMBlockConfig | None = None,
        sgm_cfg: SSMBlockConfig | None = None,
        ablation: str = "none",
        dtype: torch.dtype = DEFAULT_DTYPE,
    ):
        super().__init__()
        if ablation not in ABLATION_VARIANTS:
            raise ValueError(f"unknown ablation {ablation!r}")
        encoder_cfg = encoder_cfg or EncoderConfig()
        self.dims = dims
        self.ablation = ablation
        self.d_model = encoder_cfg.d_model
        self.encoder_o = GraphEncoder(dims.input_dim_o, encoder_cfg)
        self.encoder_a = GraphEncoder(dims.input_dim_a, encoder_cfg)
        use_vfm = ablation not in ("no-vfm", "no-mamba")
        use_sgm = ablation not in ("no-sgm", "no-mamba")
        self.vfm = (
            ViewFusedMamba(self.d_model, vfm_cfg, cross_view=(ablation != "no-vf-ssm"))
            if use_vfm
            else None
        )
        if use_sgm:
            use_rq = ablation != "no-sg-ssm"
            self.sgm_o = SpectrumGuidedMamba(self.d_model, dims.rq_dim_o, sgm_cfg, use_rq=use_rq)
            self.sgm_a = SpectrumGuidedMamba(self.d_model, dims.rq_dim_a, sgm_cfg, use_rq=use_rq)
        else:
            self.sgm_o = None
            self.sgm_a = None
        self.to(dtype)

    def forward(self, tb: TorchGraphBatch) -> ModelOutput:
        adj = tb.adj_norm if self.encoder_o.kind == "gcn" else tb.adj_sum
        h_node_o, h_graph_o = self.encoder_o(tb.x_o, adj, tb.membership, tb.graph_count)
        h_node_a, h_graph_a = self.encoder_a(tb.x_a, adj, tb.membership, tb.graph_count)
        if self.vfm is not None:
            z_node_o, z_node_a = self.vfm(h_node_o, h_node_a)
        else:
            z_node_o, z_node_a = h_node_o, h_node_a
        if self.sgm_o is not None and self.sgm_a is not None:
            z_graph_o = self.sgm_o(h_graph_o, tb.rq_o)
            z_graph_a = self.sgm_a(h_graph_a, tb.rq_a)
        else:
            z_graph_o, z_graph_a = h_graph_o, h_graph_a
        return ModelOutput(
            z_node_o=z_node_o,
            z_node_a=z_node_a,
            z_graph_o=z_graph_o,
            z_graph_a=z_graph_a,
            h_graph_o=h_graph_o,
            h_graph_a=h_graph_a,
        )


def resolve_encoder_config(cfg: RunConfig) -> EncoderConfig:
    """Fill in the per-dataset default encoder kind when none was chosen."""
    if cfg.encoder.kind is not None:
        return cfg.encoder
    return replace(cfg.encoder, kind=default_encoder_kind(cfg.dataset))


def build_model(cfg: RunConfig, dims: ModelDims, dtype: torch.dtype = DEFAULT_DTYPE) -> GladMamba:
    return GladMamba(
        dims,
        encoder_cfg=resolve_encoder_config(cfg),
        vfm_cfg=cfg.vfm,
        sgm_cfg=cfg.sgm,
        ablation=cfg.ablation,
        dtype=dtype,
    )
