"""Federated propagation and training over graphs split across parties."""

from .decouple import BorderGraph, InternalGraph, LocalGraph, graph_decoupling
from .fedprop import APPNP, GCN, GPR, SGC, CostMeter, fedcog_run
from .graph import (
    GlobalGraph,
    centralized_appnp,
    centralized_gcn_forward,
    centralized_sgc,
    edge_density,
    propagate_once,
    sbm_generate,
    sla_degrees,
)
from .partition import (
    Partition,
    induce_local_graphs,
    kmeans_partition,
    label_emd,
    partition_stats,
    topological_partition,
)
from .privacy import angular_distance, attack_count, find_exposed_nodes, lnnc_augment

__version__ = "0.1.0"
