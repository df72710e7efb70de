"""Round orchestration: client sampling, local updates, FedAvg, evaluation.

Each round samples c of M clients, runs their local updates concurrently on
a shared immutable snapshot of the global parameters, then aggregates the
returned stores in ascending client-id order so runs are bit-reproducible.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import encoders
from .autodiff import Tape, Tensor, backward
from .config import ExperimentConfig
from .contrast import (
    ContrastBatch,
    NegativeStack,
    classification_loss,
    combined_loss,
    info_nce,
    sample_negatives,
    stack_init,
)
from .encoders import EncoderConfig
from .errors import EvaluationError, NumericError
from .graphs import (
    Dataset,
    GraphInstance,
    adjacency,
    generate_synthetic,
    load_dataset,
    partition,
    train_test_split,
)
from .metrics import roc_auc
from .params import ParamStore, flatten, sgd_step, unflatten
from .privacy import PrivacyBudget, budget_report, make_views, perturb
from .rng import derive_seed, substream


@dataclass
class GlobalModel:
    params: ParamStore
    round_index: int = 0


@dataclass
class ClientRuntime:
    client_id: int
    graphs: list[GraphInstance]
    stack: NegativeStack
    graphs_by_id: dict[int, GraphInstance] = field(init=False)

    def __post_init__(self):
        self.graphs_by_id = {g.id: g for g in self.graphs}


@dataclass
class ClientStats:
    client_id: int
    steps: int
    mean_loss_c: float
    mean_loss_e: float
    mean_loss: float
    fallback_count: int
    stack_size: int


@dataclass
class EvalResult:
    macro_auc: float
    per_task: list[float | None]


@dataclass
class RoundReport:
    round_index: int
    sampled_clients: list[int]
    client_stats: list[ClientStats]
    auc_clean: float
    auc_perturbed: float
    cumulative_budget: float


def sample_clients(n_clients: int, n_sampled: int, rng) -> list[int]:
    """Uniform sample without replacement, returned sorted."""
    if not (1 <= n_sampled <= n_clients):
        raise ValueError(f"need 1 <= n_sampled <= n_clients, got {n_sampled} of {n_clients}")
    return sorted(int(i) for i in rng.choice(n_clients, size=n_sampled, replace=False))


def _embed_view(cfg: EncoderConfig, params: ParamStore, weights: np.ndarray, features) -> Tensor:
    return encoders.readout(encoders.encode(cfg, params, encoders.normalize(weights), features))


def client_update(
    global_params: ParamStore, runtime: ClientRuntime, cfg: ExperimentConfig, rng
) -> tuple[ParamStore, ClientStats]:
    """One local training pass; returns new parameters, leaving the input untouched.

    Per graph: release two noised views, embed both, couple the positive pair
    with label-differing negatives re-encoded from the stack (as constants, no
    gradient flows into them), combine contrastive and classification losses,
    backpropagate, step, and push view 1 onto the stack.
    """
    enc_cfg = _encoder_config(cfg)
    local = global_params
    sum_c = sum_e = sum_total = 0.0
    steps = 0
    fallbacks = 0
    for _ in range(cfg.local_epochs):
        for g in runtime.graphs:
            v0, v1 = make_views(g, cfg.eps0, cfg.eps1, rng)
            batch = None
            neg_embs = []
            if cfg.gamma > 0:
                negs, fb = sample_negatives(runtime.stack, g.labels, g.label_mask, cfg.k, rng)
                fallbacks += int(fb)
                batch = ContrastBatch(view0=v0, view1=v1, negatives=negs)
                for entry in negs:
                    source = runtime.graphs_by_id[entry.source_id]
                    neg_embs.append(
                        _embed_view(enc_cfg, local, entry.view.weights, source.features)
                    )
            try:
                with Tape() as tape:
                    h0 = _embed_view(enc_cfg, local, v0.weights, g.features)
                    h1 = _embed_view(enc_cfg, local, v1.weights, g.features)
                    if batch is not None:
                        loss_c = info_nce(h0, h1, neg_embs, cfg.tau)
                    else:
                        loss_c = Tensor([[0.0]])
                    logits0 = encoders.predict(local, h0)
                    logits1 = encoders.predict(local, h1)
                    loss_e = classification_loss(logits0, logits1, g.labels, g.label_mask)
                    loss = combined_loss(loss_c, loss_e, cfg.gamma)
                grads = backward(tape, loss, local)
            except NumericError as exc:
                raise NumericError(f"graph {g.id}: {exc}") from exc
            local = sgd_step(local, grads, cfg.lr)
            runtime.stack.push(v1, g.labels, g.label_mask, g.id)
            sum_c += loss_c.item()
            sum_e += loss_e.item()
            sum_total += loss.item()
            steps += 1
    stats = ClientStats(
        client_id=runtime.client_id,
        steps=steps,
        mean_loss_c=sum_c / steps if steps else 0.0,
        mean_loss_e=sum_e / steps if steps else 0.0,
        mean_loss=sum_total / steps if steps else 0.0,
        fallback_count=fallbacks,
        stack_size=len(runtime.stack),
    )
    return local, stats


def fedavg(
    global_params: ParamStore, updates: list[ParamStore], n_clients: int, n_sampled: int
) -> ParamStore:
    """Convex combination of the mean client update with the previous model.

    theta' = (c/M) * mean(updates) + ((M - c)/M) * theta. Callers pass updates
    in ascending client-id order so the summation order is fixed.
    """
    if len(updates) != n_sampled:
        raise ValueError(f"expected {n_sampled} updates, got {len(updates)}")
    if not (1 <= n_sampled <= n_clients):
        raise ValueError(f"need 1 <= n_sampled <= n_clients, got {n_sampled} of {n_clients}")
    schema = global_params.schema()
    for u in updates:
        if u.schema() != schema:
            raise ValueError("update schema does not match the global parameters")
    total = np.zeros(global_params.total_size())
    for u in updates:
        total += flatten(u)
    mixed = (total / n_sampled) * (n_sampled / n_clients) + flatten(global_params) * (
        (n_clients - n_sampled) / n_clients
    )
    return unflatten(mixed, schema)


def _encoder_config(cfg: ExperimentConfig) -> EncoderConfig:
    return EncoderConfig(kind=cfg.encoder, layers=cfg.layers, hidden=cfg.hidden, tag_hops=cfg.tag_hops)


def evaluate(
    params: ParamStore,
    enc_cfg: EncoderConfig,
    test: Dataset,
    mode: str = "clean",
    epsilon: float = 1.0,
    rng=None,
) -> EvalResult:
    """Macro ROC-AUC over tasks with both classes observed in the test set.

    mode "clean" scores the true adjacency; "perturbed" draws a fresh noised
    view per graph at the given budget (inference matching training).
    """
    if len(test) == 0:
        raise EvaluationError("empty test set")
    if mode not in ("clean", "perturbed"):
        raise ValueError(f"mode must be 'clean' or 'perturbed', got {mode!r}")
    if mode == "perturbed" and rng is None:
        raise ValueError("perturbed evaluation needs an rng")
    budget = PrivacyBudget(epsilon) if mode == "perturbed" else None
    n, t_count = len(test), test.task_count
    scores = np.zeros((n, t_count))
    labels = np.zeros((n, t_count), dtype=np.int64)
    mask = np.zeros((n, t_count), dtype=np.int64)
    for row, g in enumerate(test.graphs):
        weights = adjacency(g) if mode == "clean" else perturb(g, budget, rng).weights
        h = _embed_view(enc_cfg, params, weights, g.features)
        logits = encoders.predict(params, h)
        scores[row] = 1.0 / (1.0 + np.exp(-logits.data[0]))
        labels[row] = g.labels
        mask[row] = g.label_mask
    per_task: list[float | None] = []
    for t in range(t_count):
        obs = mask[:, t] == 1
        y = labels[obs, t]
        if obs.sum() == 0 or y.min() == y.max():
            per_task.append(None)
            continue
        per_task.append(roc_auc(scores[obs, t], y))
    scored = [a for a in per_task if a is not None]
    if not scored:
        raise EvaluationError("no task has both classes observed")
    return EvalResult(macro_auc=float(np.mean(scored)), per_task=per_task)


def _load_or_generate(cfg: ExperimentConfig) -> Dataset:
    if cfg.dataset_path is not None:
        return load_dataset(cfg.dataset_path)
    return generate_synthetic(
        n_graphs=cfg.n_graphs,
        p_range=(cfg.p_min, cfg.p_max),
        q=cfg.feature_dim,
        noise_sd=cfg.noise_sd,
        seed=derive_seed(cfg.seed, "data"),
    )


def build_runtimes(cfg: ExperimentConfig, train_set: Dataset) -> list[ClientRuntime]:
    """Partition the training graphs and seed each client's negative stack.

    Substreams: partition uses (seed, "partition"); client m's stack seeding
    uses (seed, "stack", m). Stacks stay empty when the contrastive term is
    disabled (gamma == 0).
    """
    part = partition(train_set, cfg.clients, derive_seed(cfg.seed, "partition"))
    by_id = train_set.by_id()
    runtimes = []
    for m in range(cfg.clients):
        graphs = [by_id[i] for i in part.assignments[m]]
        stack = NegativeStack(cfg.cap_n)
        if cfg.gamma > 0 and cfg.k > 0:
            local = Dataset(graphs=graphs, feature_dim=train_set.feature_dim, task_count=train_set.task_count)
            stack_init(stack, local, cfg.k, cfg.eps1, substream(cfg.seed, "stack", m))
        runtimes.append(ClientRuntime(client_id=m, graphs=graphs, stack=stack))
    return runtimes


def train(cfg: ExperimentConfig, on_round=None) -> tuple[GlobalModel, list[RoundReport]]:
    """Run the full federated loop; deterministic given cfg.seed.

    Substream naming: data (seed, "data"), split (seed, "split"), init
    (seed, "init"), client sampling (seed, "sample", round), local training
    (seed, "train", round, client), perturbed evaluation (seed, "eval", round).
    on_round, when given, is called with each RoundReport as it completes.
    """
    dataset = _load_or_generate(cfg)
    train_set, test_set = train_test_split(dataset, cfg.test_fraction, derive_seed(cfg.seed, "split"))
    enc_cfg = _encoder_config(cfg)
    global_model = GlobalModel(
        params=encoders.init_params(
            enc_cfg, dataset.feature_dim, dataset.task_count, substream(cfg.seed, "init")
        ),
        round_index=0,
    )
    runtimes = build_runtimes(cfg, train_set)
    participation = [0] * cfg.clients
    reports: list[RoundReport] = []
    for t in range(cfg.rounds):
        try:
            sampled = sample_clients(cfg.clients, cfg.sampled, substream(cfg.seed, "sample", t))

            def run_one(m: int):
                return client_update(
                    global_model.params, runtimes[m], cfg, substream(cfg.seed, "train", t, m)
                )

            if cfg.parallel_clients and len(sampled) > 1:
                with ThreadPoolExecutor(max_workers=len(sampled)) as pool:
                    results = dict(zip(sampled, pool.map(run_one, sampled)))
            else:
                results = {m: run_one(m) for m in sampled}
            updates = [results[m][0] for m in sampled]  # sampled is already ascending
            new_params = fedavg(global_model.params, updates, cfg.clients, cfg.sampled)
            global_model = GlobalModel(params=new_params, round_index=t + 1)
            for m in sampled:
                participation[m] += 1
            epochs_done = max(participation) * cfg.local_epochs
            cum_budget = budget_report(epochs_done, cfg.eps0, cfg.eps1)
            eval_clean = evaluate(new_params, enc_cfg, test_set, mode="clean")
            eval_pert = evaluate(
                new_params, enc_cfg, test_set,
                mode="perturbed", epsilon=cfg.eps0, rng=substream(cfg.seed, "eval", t),
            )
        except Exception as exc:
            raise RuntimeError(f"round {t} failed: {exc}") from exc
        report = RoundReport(
            round_index=t,
            sampled_clients=list(sampled),
            client_stats=[results[m][1] for m in sampled],
            auc_clean=eval_clean.macro_auc,
            auc_perturbed=eval_pert.macro_auc,
            cumulative_budget=cum_budget,
        )
        reports.append(report)
        if on_round is not None:
            on_round(report)
    return global_model, reports
