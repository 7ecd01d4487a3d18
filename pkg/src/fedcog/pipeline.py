"""End-to-end experiment driver and the federated/centralized equivalence check."""

from __future__ import annotations

import dataclasses
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import fedprop, fedtrain, learn
from .config import ExperimentConfig
from .decouple import LocalGraph, graph_decoupling
from .graph import (
    GlobalGraph,
    centralized_appnp,
    centralized_gcn_forward,
    centralized_sgc,
    sbm_generate,
)
from .io import load_citation_dataset
from .partition import (
    Partition,
    induce_local_graphs,
    kmeans_partition,
    partition_stats,
    topological_partition,
)
from .privacy import augmented_graph, lnnc_augment

log = logging.getLogger(__name__)


class StageError(RuntimeError):
    def __init__(self, stage: str, exc: Exception):
        super().__init__(f"stage {stage!r} failed: {exc}")
        self.stage = stage


class _stage:
    def __init__(self, name: str):
        self.name = name

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        if exc is not None and not isinstance(exc, StageError):
            raise StageError(self.name, exc) from exc
        return False


def load_graph(cfg: ExperimentConfig) -> GlobalGraph:
    d = cfg.dataset
    if d.kind == "citation":
        g = load_citation_dataset(d.content, d.cites, strict=d.strict)
    else:
        g = sbm_generate(
            d.block_sizes, d.p_in, d.p_out, d.feature_dim, d.num_classes, d.seed, d.feature_scale
        )
    if d.normalize_features:
        sums = np.abs(g.features).sum(axis=1, keepdims=True)
        g = g.with_features(g.features / np.where(sums == 0, 1.0, sums))
    return g


def make_partition(cfg: ExperimentConfig, g: GlobalGraph) -> Partition:
    p = cfg.partitioner
    if p.method == "kmeans":
        return kmeans_partition(g, p.parts, p.max_iters, p.seed)
    return topological_partition(g, p.parts, p.seed)


def make_variant(cfg: ExperimentConfig, feature_dim: int) -> fedprop.Variant:
    m = cfg.model
    if m.variant == "sgc":
        return fedprop.SGC()
    if m.variant == "gpr":
        return fedprop.GPR(m.r)
    if m.variant == "appnp":
        return fedprop.APPNP(m.alpha)
    rng = np.random.default_rng(m.weight_seed)
    dims = [feature_dim] + list(m.hidden or [feature_dim] * m.layers)
    if len(dims) - 1 < m.layers:
        dims += [dims[-1]] * (m.layers - len(dims) + 1)
    weights = [rng.normal(scale=1.0 / np.sqrt(a), size=(a, b)) for a, b in zip(dims[:-1], dims[1:])]
    return fedprop.GCN(tuple(weights[: m.layers]), m.activation)


def centralized_oracle(g: GlobalGraph, variant: fedprop.Variant, layers: int) -> np.ndarray:
    """Centralized counterpart of :func:`fedprop.fedcog_run` for ``variant``.

    With source weight ``(1+d_v)^{r-1}`` and target weight ``(1+d_u)^{-r}`` the
    federated split realises ``D^{-r} (A+I) D^{r-1}``, which is the
    ``propagate_once`` operator at exponent ``1 - r``.
    """
    if isinstance(variant, fedprop.SGC):
        return centralized_sgc(g, layers, 0.5)
    if isinstance(variant, fedprop.GPR):
        return centralized_sgc(g, layers, 1.0 - variant.r)
    if isinstance(variant, fedprop.APPNP):
        return centralized_appnp(g, layers, variant.alpha)
    return centralized_gcn_forward(g, variant.weights[:layers], variant.activation)


def decoupled_parties(locals_: list[LocalGraph], drop_inter: bool = False) -> list[fedprop.PartyData]:
    out = []
    for lg in locals_:
        if drop_inter:
            lg = lg.without_inter_edges()
        ig, bg = graph_decoupling(lg)
        out.append(fedprop.PartyData(ig, bg, lg.features))
    return out


def _relative_error(a: np.ndarray, b: np.ndarray) -> tuple[float, tuple[int, int]]:
    diff = np.abs(a - b)
    scale = float(np.abs(b).max()) if b.size else 0.0
    if diff.size == 0:
        return 0.0, (0, 0)
    worst = np.unravel_index(int(np.argmax(diff)), diff.shape)
    err = float(diff[worst]) / scale if scale > 0 else float(diff[worst])
    return err, (int(worst[0]), int(worst[1]))


@dataclass
class VerifyReport:
    passed: bool
    tolerance: float
    max_error: float
    layer_errors: list
    worst: dict
    meter: dict
    placeholders: int

    def lines(self) -> list[str]:
        out = [f"layer {i + 1}: max relative error {e:.3e}" for i, e in enumerate(self.layer_errors)]
        status = "PASS" if self.passed else "FAIL"
        out.append(f"{status}: max relative error {self.max_error:.3e} (tolerance {self.tolerance:.0e})")
        if not self.passed:
            w = self.worst
            out.append(
                f"worst entry: node {w['node']} (party {w['party']}), layer {w['layer']}, column {w['column']}"
            )
        return out


def tolerance_for(variant: fedprop.Variant) -> float:
    return 1e-5 if isinstance(variant, fedprop.GCN) and variant.activation != "linear" else 1e-8


def verify_equivalence(cfg: ExperimentConfig, gamma_hook=None, graph: GlobalGraph | None = None) -> VerifyReport:
    """Run federated propagation and the centralized oracle on the same graph, layer by layer."""
    g = load_graph(cfg) if graph is None else graph
    part = make_partition(cfg, g)
    locals_ = induce_local_graphs(g, part)
    if cfg.lnnc:
        pairs = [lnnc_augment(lg) for lg in locals_]
        locals_ = [lg for lg, _ in pairs]
        g = augmented_graph(g, [plan for _, plan in pairs])
    variant = make_variant(cfg, g.feature_dim)
    parties = decoupled_parties(locals_)
    layers = cfg.model.layers
    hist, meter = fedprop.fedcog_run(parties, layers, variant, keep_layers=True, gamma_hook=gamma_hook)

    errors = []
    worst = {"error": 0.0, "node": None, "party": None, "layer": 0, "column": None}
    for layer in range(1, layers + 1):
        fed = fedprop.gather(parties, hist[layer], g.num_nodes)
        ref = centralized_oracle(g, variant, layer)
        err, (node, col) = _relative_error(fed, ref)
        errors.append(err)
        if err > worst["error"] or worst["node"] is None:
            worst = {"error": err, "node": node, "party": int(part.owner[node]), "layer": layer, "column": col}
    tol = tolerance_for(variant)
    max_err = max(errors) if errors else 0.0
    return VerifyReport(
        passed=max_err < tol,
        tolerance=tol,
        max_error=max_err,
        layer_errors=errors,
        worst=worst,
        meter=meter.as_dict(),
        placeholders=sum(p.internal.num_placeholders for p in parties),
    )


@dataclass
class ExperimentReport:
    config: dict
    mode: str
    partition: dict
    lnnc: dict
    cost: dict
    history: list = field(default_factory=list)
    final_metric: float | None = None
    metric_name: str = "accuracy"

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentReport":
        return cls(**d)

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def write(self, out_dir) -> Path:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.json").write_text(self.dumps())
        with open(out / "history.jsonl", "w") as fh:
            for rec in self.history:
                fh.write(json.dumps(rec, sort_keys=True) + "\n")
        return out / "report.json"

    @classmethod
    def read(cls, path) -> "ExperimentReport":
        path = Path(path)
        if path.is_dir():
            path = path / "report.json"
        return cls.from_dict(json.loads(path.read_text()))


def _split_edges(g: GlobalGraph, drop: np.ndarray) -> GlobalGraph:
    n = g.num_nodes
    keys = g.edges[:, 0] * n + g.edges[:, 1]
    gone = np.sort(drop, axis=1)
    keep = ~np.isin(keys, gone[:, 0] * n + gone[:, 1])
    return g.with_edges(g.edges[keep])


def _embed(cfg: ExperimentConfig, g: GlobalGraph, part: Partition, mode: str):
    """Propagate features for ``mode``; returns global embeddings, party data, LNNC and cost info."""
    variant = make_variant(cfg, g.feature_dim)
    if isinstance(variant, fedprop.GCN):
        raise ValueError("GCN weights are not trained federatedly; use the verify command for GCN")
    layers = cfg.model.layers
    if mode == "centralized":
        emb = centralized_oracle(g, variant, layers)
        return emb, {"audited": False}, fedprop.CostMeter().as_dict()
    locals_ = induce_local_graphs(g, part)
    audit = {"audited": False}
    if cfg.lnnc:
        pairs = [lnnc_augment(lg) for lg in locals_]
        locals_ = [lg for lg, _ in pairs]
        plans = [plan for _, plan in pairs]
        audit = {
            "audited": True,
            "exposed_before": sum(p.exposed_before for p in plans),
            "edges_added": sum(len(p.added_edges) for p in plans),
            "skipped": sum(len(p.skipped) for p in plans),
        }
    parties = decoupled_parties(locals_, drop_inter=(mode == "disconnected"))
    per_party, meter = fedprop.fedcog_run(parties, layers, variant)
    cost = meter.as_dict()
    cost["placeholders"] = sum(p.internal.num_placeholders for p in parties)
    return fedprop.gather(parties, per_party, g.num_nodes), audit, cost


def _train_parties(cfg, g, part, emb, mode, split):
    owner = part.owner if mode != "centralized" else np.zeros(g.num_nodes, dtype=np.int64)
    m = int(owner.max()) + 1
    parties = []
    if cfg.task.kind == "node":
        train = set(split.train_ids.tolist())
        for i in range(m):
            nodes = np.flatnonzero(owner == i)
            rows = [k for k, u in enumerate(nodes.tolist()) if u in train]
            parties.append(fedtrain.node_party(i, emb[nodes], g.labels[nodes], rows))
    else:
        pairs = np.concatenate([split.train_pos, split.train_neg])
        targets = np.concatenate([np.ones(len(split.train_pos)), np.zeros(len(split.train_neg))])
        for i in range(m):
            nodes = np.flatnonzero(owner == i)
            local = {u: k for k, u in enumerate(nodes.tolist())}
            mine = [k for k, (a, b) in enumerate(pairs.tolist()) if a in local and b in local]
            idx = np.array([[local[a], local[b]] for a, b in pairs[mine].tolist()], dtype=np.int64)
            parties.append(fedtrain.link_party(i, emb[nodes], idx.reshape(-1, 2), targets[mine]))
    return parties


def _algorithm(cfg: ExperimentConfig, lr: float) -> fedtrain.Algorithm:
    t = cfg.train
    if t.algo == "fedavg":
        return fedtrain.FedAvg(lr)
    if t.algo == "fedadagrad":
        return fedtrain.FedAdagrad(lr, t.tau)
    if t.algo == "fedadam":
        return fedtrain.FedAdam(lr, t.tau, t.beta1, t.beta2)
    return fedtrain.FedDyn(lr, t.alpha)


def run_experiment(cfg: ExperimentConfig, mode: str | None = None, write: bool = True) -> ExperimentReport:
    """partition -> induce -> (LNNC) -> decouple -> propagate -> federated training -> evaluate."""
    mode = mode or cfg.mode
    with _stage("load"):
        g = load_graph(cfg)
    split = None
    with _stage("split"):
        if cfg.task.kind == "node":
            split = learn.sample_node_split(g, cfg.task.per_class, cfg.task.test_size, cfg.task.seed)
        else:
            split = learn.sample_link_split(g, cfg.task.train_frac, cfg.task.seed)
            g = _split_edges(g, split.test_pos)
    with _stage("partition"):
        part = make_partition(cfg, g)
        stats = partition_stats(part, g)
    with _stage("propagate"):
        emb, audit, cost = _embed(cfg, g, part, mode)
    with _stage("train"):
        parties = _train_parties(cfg, g, part, emb, mode, split)
        if cfg.task.kind == "node":
            params0 = learn.ClassifierParams.init(emb.shape[1], g.num_classes, cfg.task.head_hidden, cfg.train.seed)

            def evaluate(params):
                pred = learn.predict_logits(emb[split.test_ids], params).argmax(axis=1)
                return learn.accuracy(pred, g.labels[split.test_ids])

            metric_name = "accuracy"
        else:
            params0 = learn.LinkModelParams.init(emb.shape[1], seed=cfg.train.seed)
            test_pairs = np.concatenate([split.test_pos, split.test_neg])
            test_y = np.concatenate([np.ones(len(split.test_pos)), np.zeros(len(split.test_neg))])

            def evaluate(params):
                return learn.auc(learn.link_scores(emb, params, test_pairs), test_y)

            metric_name = "auc"

        lrs = list(cfg.train.lr_grid) or [cfg.train.lr]
        best = None
        for lr in lrs:
            tc = fedtrain.TrainConfig(
                rounds=cfg.train.rounds,
                algo=_algorithm(cfg, lr),
                local_epochs=cfg.train.local_epochs,
                participation=cfg.train.participation,
                seed=cfg.train.seed,
                learning_rate=cfg.train.client_lr,
            )
            params, history = fedtrain.federated_train(parties, tc, params0, evaluate)
            final_loss = history[-1]["loss"] if history else float("inf")
            if best is None or final_loss < best[0]:
                best = (final_loss, lr, params, history)
        _, lr, params, history = best
        final = evaluate(params)
    cost = dict(cost)
    cost["train_floats_up"] = int(sum(r["floats_up"] for r in history))
    cost["learning_rate"] = lr
    report = ExperimentReport(
        config=cfg.to_dict(),
        mode=mode,
        partition={
            "intra_edge_fraction": stats.intra_edge_fraction,
            "avg_label_emd": stats.avg_label_emd,
            "party_sizes": stats.party_sizes,
        },
        lnnc=audit,
        cost=cost,
        history=history,
        final_metric=final,
        metric_name=metric_name,
    )
    if write and cfg.output:
        out = Path(cfg.output) if mode == cfg.mode else Path(cfg.output) / mode
        report.write(out)
    return report
