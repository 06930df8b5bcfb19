"""Federated training loop: pretraining, collaborative KL alignment on public
data, local SL training with refined labels, and confidence re-weighting.

Each round runs, in order: client weights from the current loss/delta
histories, one collaborative phase (all clients publish public-set logits
before anyone updates), a local phase on every client, then evaluation.
Ablation flags switch each component off independently.
"""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import data as D
from . import losses as L
from .config import FederationConfig
from .dlr import DlrSchedule, dlr_weight, refine_labels
from .eccr import ClientRoundStats, RoundWeights, round_weights
from .errors import NumericError, UsageError
from .models import MLP, ArchSpec, build_model, parameter_delta_norm
from .optim import AdamState, adam_step
from .tensor import backward

logger = logging.getLogger(__name__)

# stream tags for derive_seed
_MEANS, _POOL, _TEST, _PUBLIC, _PARTITION, _POOL_PICK = 1, 2, 3, 4, 5, 6
_NOISE, _INIT, _SHUFFLE = 100, 200, 300


def derive_seed(seed: int, tag: int) -> int:
    """Independent 32-bit seed for one named random stream of a run."""
    return int(np.random.SeedSequence([seed, tag]).generate_state(1)[0])


@dataclass
class World:
    """Everything sampled from the run seed before training starts."""

    client_data: list[D.Dataset]
    clean_labels: list[np.ndarray]
    public: D.Dataset
    test: D.Dataset
    realized_noise: list[float]


@dataclass
class ClientState:
    id: int
    arch: ArchSpec
    model: MLP
    adam: AdamState
    data: D.Dataset
    rng: np.random.Generator
    loss_history: list[float] = field(default_factory=list)
    delta_history: list[float] = field(default_factory=list)


@dataclass
class RoundRecord:
    phase: str  # "pretrain" or "round"
    index: int
    accuracies: list[float]
    sl_losses: list[float]
    confidences: list[float] | None = None
    weights: list[float] | None = None
    wall_time: float = 0.0

    @property
    def average_accuracy(self) -> float:
        return float(np.mean(self.accuracies))


@dataclass
class RunResult:
    records: list[RoundRecord]
    clients: list[ClientState]
    world: World


# ---------------------------------------------------------------------------
# setup
# ---------------------------------------------------------------------------

def build_world(cfg: FederationConfig, seed: int) -> World:
    d, k = cfg.data, cfg.train.clients
    means = D.cluster_means(d.classes, d.dim, derive_seed(seed, _MEANS))
    total = d.samples_per_client * k
    pool = D.sample_clusters(means, -(-total // d.classes), d.spread, derive_seed(seed, _POOL))
    if d.partition == "iid":
        pick = np.sort(np.random.default_rng(derive_seed(seed, _POOL_PICK)).permutation(len(pool))[:total])
        pool = pool.subset(pick)
        plan = D.partition_iid(len(pool), k, derive_seed(seed, _PARTITION))
    else:
        plan = D.partition_dirichlet(pool.labels, k, d.beta, d.min_per_client, derive_seed(seed, _PARTITION))
    test = D.sample_clusters(means, d.test_per_class, d.spread, derive_seed(seed, _TEST))
    public = D.generate_public(cfg.public_classes, d.dim, d.public_size, d.spread, derive_seed(seed, _PUBLIC))

    matrix = D.build_transition_matrix(cfg.noise.kind, cfg.noise.rate, d.classes)
    noisy = set(cfg.noisy_clients)
    client_data, clean, realized = [], [], []
    for c, idx in enumerate(plan):
        shard = pool.subset(idx)
        labels = shard.labels
        if c in noisy:
            labels = D.apply_label_noise(shard.labels, matrix, derive_seed(seed, _NOISE + c))
        client_data.append(shard.with_labels(labels))
        clean.append(shard.labels.copy())
        realized.append(D.empirical_flip_rate(shard.labels, labels))
    return World(client_data, clean, public, test, realized)


def init_clients(cfg: FederationConfig, world: World, seed: int) -> list[ClientState]:
    clients = []
    roster = cfg.model.hidden
    for c in range(cfg.train.clients):
        hidden = roster[c % len(roster)]
        arch = ArchSpec("mlp-" + "x".join(map(str, hidden)), hidden, cfg.data.dim, cfg.data.classes)
        model = build_model(arch, derive_seed(seed, _INIT + c))
        clients.append(
            ClientState(
                id=c,
                arch=arch,
                model=model,
                adam=AdamState.for_params(model.params, cfg.train.learning_rate),
                data=world.client_data[c],
                rng=np.random.default_rng(derive_seed(seed, _SHUFFLE + c)),
            )
        )
    return clients


# ---------------------------------------------------------------------------
# per-client pieces
# ---------------------------------------------------------------------------

def evaluate(model: MLP, test: D.Dataset) -> float:
    """Top-1 accuracy; argmax ties go to the lowest class index."""
    pred = np.argmax(model.logits(test.features), axis=1)
    return float(np.mean(pred == test.labels))


def mean_sl_loss(client: ClientState, loss_cfg: L.LossConfig) -> float:
    """SL loss of the current model on the client's full (noisy) private set."""
    logits = client.model.logits(client.data.features)
    given = L.one_hot(client.data.labels, client.data.classes)
    value = float(L.sl_loss_np(given, logits, loss_cfg).mean())
    if not np.isfinite(value):
        raise NumericError(f"client {client.id}: non-finite SL loss during evaluation")
    return value


def train_epoch(client: ClientState, targets: np.ndarray, use_sl: bool, cfg: FederationConfig) -> float:
    """One shuffled minibatch pass; returns the mean minibatch loss."""
    x = client.data.features
    n = x.shape[0]
    bs = cfg.train.batch_size
    perm = client.rng.permutation(n)
    params = client.model.params
    total = 0.0
    for start in range(0, n, bs):
        idx = perm[start:start + bs]
        logits = client.model(x[idx])
        if use_sl:
            q = L.temperature_softmax(logits, cfg.loss.temperature)
            loss = L.sl_loss(targets[idx], q, cfg.loss)
        else:
            loss = L.cross_entropy(targets[idx], L.temperature_softmax(logits, 1.0))
        value = loss.item()
        if not np.isfinite(value):
            raise NumericError(f"client {client.id}: non-finite training loss")
        grads = backward(loss, params)
        adam_step(params, grads, client.adam)
        total += value * idx.size
    return total / n


def pretrain(clients: Sequence[ClientState], epochs: int, cfg: FederationConfig, test: D.Dataset) -> list[RoundRecord]:
    """Independent local training on hard (noisy) labels; one record per epoch."""
    if epochs < 2:
        raise UsageError("pretraining needs at least 2 epochs to seed the re-weighting history")
    use_sl = cfg.ablation.sl
    targets = [L.one_hot(c.data.labels, c.data.classes) for c in clients]
    records = []
    for epoch in range(1, epochs + 1):
        t0 = time.perf_counter()
        accs, losses = [], []
        for client, tgt in zip(clients, targets):
            before = client.model.snapshot()
            train_epoch(client, tgt, use_sl, cfg)
            client.delta_history.append(parameter_delta_norm(before, client.model.snapshot()))
            client.loss_history.append(mean_sl_loss(client, cfg.loss))
            accs.append(evaluate(client.model, test))
            losses.append(client.loss_history[-1])
        records.append(RoundRecord("pretrain", epoch, accs, losses, wall_time=time.perf_counter() - t0))
    return records


def collaborative_round(
    clients: Sequence[ClientState],
    public_x: np.ndarray,
    multipliers: Sequence[float],
    cfg: FederationConfig,
    source_weights: Sequence[float] | None = None,
) -> list[float]:
    """Align every client to the others' pre-round public logits.

    All logits are gathered before any update, so the result does not depend
    on the order in which clients are stepped.  ``multipliers[k]`` scales
    client k's summed KL loss.  Returns each client's KL loss before its step.
    """
    if len(multipliers) != len(clients):
        raise UsageError(f"{len(clients)} clients but {len(multipliers)} multipliers")
    published = []
    for client in clients:
        z = client.model.logits(public_x)
        if not np.all(np.isfinite(z)):
            raise NumericError(f"client {client.id}: non-finite public logits; round aborted")
        published.append(z)

    kl_values = []
    tau = cfg.loss.temperature
    # sum the other clients' terms in id order so the result is independent of list order
    by_id = sorted(range(len(clients)), key=lambda j: clients[j].id)
    for k, client in enumerate(clients):
        others = [published[j] for j in by_id if j != k]
        weights_k = None
        if source_weights is not None:
            weights_k = [source_weights[j] for j in by_id if j != k]
        params = client.model.params
        for step in range(cfg.train.collab_steps):
            loss = L.collab_kl_loss(client.model(public_x), others, tau, multipliers[k], weights_k)
            if step == 0:
                kl_values.append(loss.item())
            grads = backward(loss, params)
            adam_step(params, grads, client.adam)
    return kl_values


def local_round(client: ClientState, completed_rounds: int, cfg: FederationConfig, epochs: int | None = None) -> None:
    """``epochs`` passes of SL (or CE) training on DLR-refined targets."""
    epochs = cfg.local_epochs if epochs is None else epochs
    if epochs < 1:
        raise UsageError(f"local phase needs >= 1 epoch, got {epochs}")
    given = L.one_hot(client.data.labels, client.data.classes)
    flags = cfg.ablation
    use_dlr = flags.sl and flags.dlr
    w = 0.0
    if use_dlr:
        w = dlr_weight(completed_rounds, DlrSchedule(cfg.dlr.schedule_scale, max(cfg.train.rounds, 1)))
    for _ in range(epochs):
        targets = given
        if use_dlr and w > 0:
            preds = L.softmax_np(client.model.logits(client.data.features), cfg.dlr.temperature)
            targets = refine_labels(given, preds, w)
        train_epoch(client, targets, flags.sl, cfg)


def client_stats(client: ClientState) -> ClientRoundStats:
    if len(client.loss_history) < 2 or not client.delta_history:
        raise UsageError(f"client {client.id}: re-weighting needs two loss points and one delta")
    return ClientRoundStats(
        mean_sl_loss=client.loss_history[-1],
        prev_mean_sl_loss=client.loss_history[-2],
        param_delta=client.delta_history[-1],
        param_count=client.model.param_count,
    )


# ---------------------------------------------------------------------------
# full run
# ---------------------------------------------------------------------------

def run_rhfl_plus(
    cfg: FederationConfig,
    seed: int = 0,
    on_round_end: Callable[[int, list[ClientState]], None] | None = None,
) -> RunResult:
    """Build the world, pretrain, then run ``cfg.train.rounds`` rounds."""
    cfg.validate()
    world = build_world(cfg, seed)
    clients = init_clients(cfg, world, seed)
    records = pretrain(clients, cfg.train.pretrain_epochs, cfg, world.test)
    if on_round_end is not None:
        on_round_end(0, clients)

    flags = cfg.ablation
    k = len(clients)
    public_x = world.public.features
    for t in range(1, cfg.train.rounds + 1):
        t0 = time.perf_counter()
        confidences, weights = round_weights([client_stats(c) for c in clients], cfg.eccr.confidence_gain)
        used: list[float] | None = None
        start = [c.model.snapshot() for c in clients]
        if flags.hfl:
            used = _multipliers(flags.eccr, weights, k, cfg.train.weight_sources)
            sources = weights.normalized if (flags.eccr and cfg.train.weight_sources) else None
            collaborative_round(clients, public_x, used, cfg, sources)
        after_collab = [c.model.snapshot() for c in clients]
        for client in clients:
            local_round(client, t, cfg)
        for c, client in enumerate(clients):
            end = client.model.snapshot()
            scope = cfg.train.delta_scope
            ref, cur = {"round": (start[c], end), "local": (after_collab[c], end),
                        "collab": (start[c], after_collab[c])}[scope]
            client.delta_history.append(parameter_delta_norm(ref, cur))
            client.loss_history.append(mean_sl_loss(client, cfg.loss))
        records.append(
            RoundRecord(
                "round",
                t,
                [evaluate(c.model, world.test) for c in clients],
                [c.loss_history[-1] for c in clients],
                confidences,
                list(weights.normalized) if flags.eccr else used,
                time.perf_counter() - t0,
            )
        )
        if on_round_end is not None:
            on_round_end(t, clients)
        logger.info("round %d avg acc %.4f", t, records[-1].average_accuracy)
    return RunResult(records, clients, world)


def _multipliers(eccr_on: bool, weights: RoundWeights, k: int, weight_sources: bool) -> list[float]:
    """Per-client factor on the summed KL loss."""
    if eccr_on and not weight_sources:
        return list(weights.normalized)
    return [1.0 / (k - 1)] * k
