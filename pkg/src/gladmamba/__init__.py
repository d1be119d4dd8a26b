"""Unsupervised graph-level anomaly detection with selective state-space
fusion of a semantic and a structural graph view."""

from .augmentation import AugConfig, ViewPair, build_feature_view, build_structure_view, build_view_pair
from .config import ABLATION_VARIANTS, EvalConfig, RunConfig, from_flat, load_config, save_config, to_flat
from .dataset_io import (
    Graph,
    GraphBatch,
    GraphDataset,
    SplitSpec,
    assign_anomaly_labels,
    fetch_tu_dataset,
    make_split,
    parse_tu_dataset,
    permute_nodes,
    write_tu_dataset,
)
from .gnn_encoder import EncoderConfig, GCNLayer, GINLayer, GraphEncoder, default_encoder_kind
from .model import GladMamba, ModelDims, ModelOutput, TorchGraphBatch, build_model, collate_batch
from .objective_scoring import (
    LossConfig,
    ScoreNormalizer,
    adaptive_total_loss,
    anomaly_score,
    auc,
    fit_normalizer,
    graph_infonce,
    node_infonce,
)
from .sgm import SpectrumGuidedMamba
from .spectral import (
    SpectralReport,
    dataset_energy_curves,
    laplacian,
    rayleigh_quotient_diag,
    spectral_energy_distribution,
)
from .ssm_core import SSMBlockConfig, SSMDiscrete, discretize_zoh, hippo_diag, selective_scan
from .trainer import (
    PreparedGraph,
    RunArtifacts,
    ScoreReport,
    TrainingDivergedError,
    ablate,
    eval_order_sensitivity,
    evaluate,
    load_checkpoint,
    node_order_sensitivity,
    prepare_graphs,
    save_checkpoint,
    train,
)
from .vfm import ViewFusedMamba

__version__ = "0.1.0"
