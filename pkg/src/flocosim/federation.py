"""The round engine: client scheduling, local updates, aggregation, inference.

Strategies:
  fedavg      plain local SGD on a single model
  fedprox     fedavg with a proximal pull toward the round's global model
  ditto       fedavg globally, plus per-client proximal fine-tuning
  floco       simplex training with subregion assignment at round tau
  floco_plus  floco, plus per-client proximal fine-tuning of endpoint copies

All randomness is drawn from streams keyed by (seed, round, client, purpose),
so results are independent of client execution order and thread schedule.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from . import model as mdl
from .metrics import RoundMetrics, accuracy, ece, total_gradient_variance, worst_fraction_accuracy
from .numerics import pca_project
from .partition import LabeledDataset, PartitionResult, split_train_test
from .rng import RngStream
from .simplex import (
    Subregion,
    SubregionSampler,
    assign_client_representations,
    make_subregion,
    uniform_center,
    whole_simplex,
)

STRATEGIES = ("fedavg", "fedprox", "floco", "floco_plus", "ditto")
FLAT_STRATEGIES = ("fedavg", "fedprox", "ditto")
SIMPLEX_STRATEGIES = ("floco", "floco_plus")


@dataclass
class FederationConfig:
    """All hyperparameters of a run."""

    n_clients: int = 20
    rounds: int = 200
    participants: int = 10
    local_epochs: int = 5
    local_steps: int | None = None  # overrides local_epochs when set
    gamma: float = 0.05
    batch_size: int = 32
    simplex_dim: int = 5
    tau: int = 100
    rho: float = 0.1
    strategy: str = "floco"
    mu: float = 0.01
    lam: float = 1.0
    finetune_epochs: int = 5
    simplex_scope: str = mdl.LAST_LAYER
    master_seed: int = 0
    eval_interval: int = 10
    ece_bins: int = 10
    renormalize_participation: bool = False
    # model
    input_dim: int = 16
    hidden_dim: int = 32
    n_classes: int = 10
    # synthetic data
    n_per_class: int = 500
    spread: float = 1.2
    partition: str = "dirichlet"
    dirichlet_beta: float = 0.3
    fivefold_q: float = 80.0
    fivefold_groups: int = 5

    def validate(self) -> "FederationConfig":
        checks = [
            (self.n_clients >= 1, "n_clients", "must be >= 1"),
            (self.rounds >= 1, "rounds", "must be >= 1"),
            (1 <= self.participants <= self.n_clients, "participants", "must lie in [1, n_clients]"),
            (1 <= self.tau <= self.rounds + 1, "tau", "must lie in [1, rounds + 1]"),
            (self.gamma > 0, "gamma", "must be positive"),
            (self.batch_size >= 1, "batch_size", "must be >= 1"),
            (self.simplex_dim >= 0, "simplex_dim", "must be >= 0"),
            (0 < self.rho <= 2, "rho", "must lie in (0, 2]"),
            (self.strategy in STRATEGIES, "strategy", f"must be one of {STRATEGIES}"),
            (self.mu >= 0, "mu", "must be >= 0"),
            (self.lam >= 0, "lam", "must be >= 0"),
            (self.finetune_epochs >= 1, "finetune_epochs", "must be >= 1"),
            (self.local_epochs >= 1, "local_epochs", "must be >= 1"),
            (self.local_steps is None or self.local_steps >= 1, "local_steps", "must be >= 1"),
            (self.eval_interval >= 1, "eval_interval", "must be >= 1"),
            (self.ece_bins >= 1, "ece_bins", "must be >= 1"),
            (
                self.simplex_scope in (mdl.LAST_LAYER, mdl.ALL_LAYERS),
                "simplex_scope",
                f"must be {mdl.LAST_LAYER} or {mdl.ALL_LAYERS}",
            ),
        ]
        for ok, name, msg in checks:
            if not ok:
                raise ValueError(f"config field {name}: {msg}")
        return self

    def steps_for(self, n_train: int) -> int:
        if self.local_steps is not None:
            return self.local_steps
        return self.local_epochs * max(1, math.ceil(n_train / self.batch_size))


@dataclass
class ClientState:
    id: int
    train: LabeledDataset
    test: LabeledDataset
    subregion: Subregion
    personal_head: np.ndarray | None = None  # (M+1, P), floco_plus
    personal_model: np.ndarray | None = None  # flat params, ditto
    sampler_stats: dict | None = None  # shared acceptance stats for the subregion

    @property
    def n_k(self) -> int:
        return len(self.train)


@dataclass
class GlobalState:
    round: int
    model: mdl.ModelState
    backbone_flat: np.ndarray
    endpoints: np.ndarray  # (M+1, P)

    def sync_model(self):
        self.model.backbone = mdl.unflatten_backbone(
            self.backbone_flat, self.model.input_dim, self.model.hidden_dim
        )
        self.model.head = mdl.HeadEndpoints(self.endpoints)


def build_clients(
    cfg: FederationConfig, dataset: LabeledDataset, partition: PartitionResult
) -> list[ClientState]:
    """Attach train/test splits and whole-simplex subregions to every client."""
    rngs = RngStream(cfg.master_seed)
    m = effective_simplex_dim(cfg)
    clients = []
    for k, idx in enumerate(partition.client_indices):
        local = dataset.subset(idx)
        train_pos, test_pos = split_train_test(local.labels, 0.2, rngs.stream(k, "split"))
        clients.append(
            ClientState(
                id=k,
                train=local.subset(train_pos),
                test=local.subset(test_pos) if len(test_pos) else local.subset(train_pos),
                subregion=whole_simplex(m),
            )
        )
    return clients


def effective_simplex_dim(cfg: FederationConfig) -> int:
    return cfg.simplex_dim if cfg.strategy in SIMPLEX_STRATEGIES else 0


def choose_participants(
    rngs: RngStream, t: int, n_clients: int, count: int
) -> np.ndarray:
    """Uniform sample without replacement, deterministic given (seed, t)."""
    if count > n_clients:
        raise ValueError("count exceeds number of clients")
    rng = rngs.stream(t, "participants")
    return np.sort(rng.choice(n_clients, size=count, replace=False))


def _batch_indices(n: int, batch_size: int, steps: int, rng: np.random.Generator):
    """Yield `steps` mini-batch index arrays, reshuffling every epoch."""
    done = 0
    while done < steps:
        perm = rng.permutation(n)
        for start in range(0, n, batch_size):
            if done == steps:
                return
            yield perm[start : start + batch_size]
            done += 1


def _flat_dims(cfg: FederationConfig):
    return cfg.input_dim, cfg.hidden_dim, cfg.n_classes


def _flat_loss_and_grad(cfg: FederationConfig, params: np.ndarray, batch: mdl.Batch):
    d, h, l = _flat_dims(cfg)
    nb = mdl.backbone_size(d, h)
    w1 = np.ascontiguousarray(params[: h * d].reshape(h, d))
    b1 = np.ascontiguousarray(params[h * d : nb])
    w2 = np.ascontiguousarray(params[nb : nb + l * h].reshape(l, h))
    b2 = np.ascontiguousarray(params[nb + l * h :])
    from . import kernels

    loss, gw1, gb1, gw2, gb2 = kernels.mlp_loss_and_grads(
        w1, b1, w2, b2, batch.inputs, batch.labels
    )
    return loss, np.concatenate([gw1.ravel(), gb1, gw2.ravel(), gb2])


def _run_flat_sgd(
    cfg: FederationConfig,
    start: np.ndarray,
    client: ClientState,
    steps: int,
    rng: np.random.Generator,
    mu: float = 0.0,
    anchor: np.ndarray | None = None,
):
    """Mini-batch SGD from `start`, optionally with a proximal pull to `anchor`."""
    if client.n_k == 0:
        raise ValueError(f"client {client.id} has an empty train split")
    params = start.copy()
    feats, labels = client.train.features, client.train.labels
    for idx in _batch_indices(client.n_k, cfg.batch_size, steps, rng):
        batch = mdl.Batch(feats[idx], labels[idx])
        _, grad = _flat_loss_and_grad(cfg, params, batch)
        if mu > 0.0:
            grad = grad + mu * (params - anchor)
        params = params - cfg.gamma * grad
    return params


def local_update_fedavg(
    global_params: np.ndarray, client: ClientState, cfg: FederationConfig, rng
) -> np.ndarray:
    """T' steps of plain local SGD; returns the parameter delta."""
    steps = cfg.steps_for(client.n_k)
    return _run_flat_sgd(cfg, global_params, client, steps, rng) - global_params


def local_update_fedprox(
    global_params: np.ndarray, client: ClientState, cfg: FederationConfig, rng
) -> np.ndarray:
    """As fedavg, with gradient mu * (w - w_global) added each step."""
    steps = cfg.steps_for(client.n_k)
    end = _run_flat_sgd(cfg, global_params, client, steps, rng, mu=cfg.mu, anchor=global_params)
    return end - global_params


def local_update_floco(
    endpoints: np.ndarray,
    backbone_flat: np.ndarray,
    client: ClientState,
    cfg: FederationConfig,
    rng: np.random.Generator,
    steps: int | None = None,
    prox_lam: float = 0.0,
    anchors: np.ndarray | None = None,
):
    """Simplex training on the client's subregion.

    One alpha is drawn per mini-batch step; endpoint m moves by
    -gamma * alpha_m * grad (plus an optional proximal pull toward `anchors`),
    the backbone by a plain SGD step.  Returns (endpoint deltas, backbone delta).
    """
    if client.n_k == 0:
        raise ValueError(f"client {client.id} has an empty train split")
    if steps is None:
        steps = cfg.steps_for(client.n_k)
    theta = endpoints.copy()
    backbone = backbone_flat.copy()
    if client.sampler_stats is None:
        client.sampler_stats = {"proposals": 0, "accepts": 0, "approximate": False}
    sampler = SubregionSampler(client.subregion, rng, client.sampler_stats)
    d, h, l = _flat_dims(cfg)
    nb = mdl.backbone_size(d, h)
    all_layers = cfg.simplex_scope == mdl.ALL_LAYERS
    feats, labels = client.train.features, client.train.labels
    from . import kernels

    # Hot loop: same math as model.loss_and_grads, without rebuilding model
    # state objects every step.
    for idx in _batch_indices(client.n_k, cfg.batch_size, steps, rng):
        alpha = sampler.draw()
        combined = alpha @ theta
        if all_layers:
            w1 = combined[: h * d].reshape(h, d)
            b1 = combined[h * d : nb]
            head = combined[nb:]
        else:
            w1 = backbone[: h * d].reshape(h, d)
            b1 = backbone[h * d : nb]
            head = combined
        w2 = head[: l * h].reshape(l, h)
        b2 = head[l * h :]
        _, gw1, gb1, gw2, gb2 = kernels.mlp_loss_and_grads(
            np.ascontiguousarray(w1), np.ascontiguousarray(b1),
            np.ascontiguousarray(w2), np.ascontiguousarray(b2),
            np.ascontiguousarray(feats[idx]), np.ascontiguousarray(labels[idx]),
        )
        head_grad = np.concatenate([gw2.ravel(), gb2])
        if all_layers:
            grad = np.concatenate([gw1.ravel(), gb1, head_grad])
        else:
            grad = head_grad
            backbone = backbone - cfg.gamma * np.concatenate([gw1.ravel(), gb1])
        endpoint_grads = alpha[:, None] * grad[None, :]
        if prox_lam > 0.0:
            endpoint_grads = endpoint_grads + prox_lam * (theta - anchors)
        theta = theta - cfg.gamma * endpoint_grads
    return theta - endpoints, backbone - backbone_flat


def global_aggregate(
    base: np.ndarray,
    deltas: dict[int, np.ndarray],
    client_weights: dict[int, int],
    total_n: int,
    renormalize: bool = False,
) -> np.ndarray:
    """base + sum_k (N_k / N) * delta_k, reduced in ascending client id.

    N is the total sample count over all clients (the paper's weighting);
    with renormalize=True it is instead the participants' total.
    """
    if not deltas:
        raise ValueError("no client updates to aggregate")
    denom = sum(client_weights[k] for k in deltas) if renormalize else total_n
    out = base.copy()
    for k in sorted(deltas):
        if deltas[k].shape != base.shape:
            raise ValueError(f"update from client {k} has mismatched shape")
        out += (client_weights[k] / denom) * deltas[k]
    return out


def assign_subregions_at_tau(
    gradient_stacks: dict[int, np.ndarray], cfg: FederationConfig, clients: list[ClientState]
) -> list[np.ndarray]:
    """Set every client's subregion from its stacked endpoint updates.

    Stacks are concatenated per client, reduced with PCA to M+1 dims, placed
    in the simplex, and surrounded with an L1 ball of radius rho.
    """
    missing = [c.id for c in clients if c.id not in gradient_stacks]
    if missing:
        raise ValueError(f"missing gradient stacks for clients {missing}")
    m = effective_simplex_dim(cfg)
    rows = np.stack([gradient_stacks[c.id].ravel() for c in clients])
    kappas = pca_project(rows, m + 1)
    alphas = assign_client_representations(kappas)
    for client, alpha in zip(clients, alphas):
        client.subregion = make_subregion(alpha, cfg.rho)
        client.sampler_stats = None  # acceptance evidence no longer applies
    return alphas


def ditto_finetune(
    client: ClientState, global_params: np.ndarray, cfg: FederationConfig, rng
) -> np.ndarray:
    """E epochs of SGD on the proximal objective, initialized at the global model."""
    steps = cfg.finetune_epochs * max(1, math.ceil(client.n_k / cfg.batch_size))
    return _run_flat_sgd(
        cfg, global_params, client, steps, rng, mu=cfg.lam, anchor=global_params
    )


def floco_plus_finetune(
    client: ClientState,
    endpoints: np.ndarray,
    backbone_flat: np.ndarray,
    cfg: FederationConfig,
    rng,
) -> np.ndarray:
    """Personalize endpoint copies with a proximal pull toward the global ones."""
    steps = cfg.finetune_epochs * max(1, math.ceil(client.n_k / cfg.batch_size))
    delta, _ = local_update_floco(
        endpoints,
        backbone_flat,
        client,
        cfg,
        rng,
        steps=steps,
        prox_lam=cfg.lam,
        anchors=endpoints,
    )
    return endpoints + delta


def _predictor(state: GlobalState, alpha, endpoints: np.ndarray | None = None):
    model = state.model
    if endpoints is not None:
        model = replace(model, head=mdl.HeadEndpoints(endpoints))
    return lambda x: mdl.forward(model, alpha, x)


def infer_global(state: GlobalState):
    """Predictor at the simplex center (the arithmetic mean of the endpoints)."""
    return _predictor(state, uniform_center(state.endpoints.shape[0] - 1))


def infer_local(state: GlobalState, client: ClientState):
    """Predictor at the client's assigned point, over personal endpoints if any.

    Before assignment the subregion center is the simplex center, so this
    coincides with the global predictor.
    """
    if client.personal_model is not None:
        return _flat_predictor_from(client.personal_model, state)
    return _predictor(state, client.subregion.center, client.personal_head)


def _flat_predictor_from(flat: np.ndarray, state: GlobalState):
    d = state.model.input_dim
    h = state.model.hidden_dim
    l = state.model.n_classes
    nb = mdl.backbone_size(d, h)
    bb = mdl.unflatten_backbone(flat[:nb], d, h)
    head = mdl.HeadEndpoints(flat[nb:][None, :])
    model = mdl.ModelState(backbone=bb, head=head, n_classes=l, simplex_scope=mdl.LAST_LAYER)
    return lambda x: mdl.forward(model, uniform_center(0), x)


def _head_slice(cfg: FederationConfig, flat_or_endpoint: np.ndarray) -> np.ndarray:
    """Last-layer portion of a flat parameter/update vector."""
    nb = mdl.backbone_size(cfg.input_dim, cfg.hidden_dim)
    return flat_or_endpoint[..., nb:]


def _init_global(cfg: FederationConfig, rngs: RngStream) -> GlobalState:
    m = effective_simplex_dim(cfg)
    scope = cfg.simplex_scope if cfg.strategy in SIMPLEX_STRATEGIES else mdl.LAST_LAYER
    model = mdl.init_model(
        cfg.input_dim, cfg.hidden_dim, cfg.n_classes, m, rngs.stream("init"), scope
    )
    return GlobalState(
        round=0,
        model=model,
        backbone_flat=mdl.flatten_backbone(model.backbone),
        endpoints=model.head.endpoints.copy(),
    )


def _flat_params(state: GlobalState) -> np.ndarray:
    return np.concatenate([state.backbone_flat, state.endpoints[0]])


def _evaluate(
    cfg: FederationConfig,
    t: int,
    state: GlobalState,
    clients: list[ClientState],
    global_test: LabeledDataset,
    variance: float,
    rngs: RngStream,
) -> RoundMetrics:
    state.sync_model()
    # Personalization strategies build their local models at evaluation time.
    if cfg.strategy == "ditto":
        flat = _flat_params(state)
        for c in clients:
            c.personal_model = ditto_finetune(c, flat, cfg, rngs.stream(t, c.id, "finetune"))
    elif cfg.strategy == "floco_plus" and t >= cfg.tau:
        for c in clients:
            c.personal_head = floco_plus_finetune(
                c, state.endpoints, state.backbone_flat, cfg, rngs.stream(t, c.id, "finetune")
            )

    gpred = infer_global(state)
    gprobs = gpred(global_test.features)
    global_acc = float(np.mean(np.argmax(gprobs, axis=1) == global_test.labels))
    global_ece = ece(gprobs, global_test.labels, cfg.ece_bins)

    local_accs, local_eces = [], []
    for c in clients:
        probs = infer_local(state, c)(c.test.features)
        local_accs.append(float(np.mean(np.argmax(probs, axis=1) == c.test.labels)))
        local_eces.append(ece(probs, c.test.labels, cfg.ece_bins))
    return RoundMetrics(
        round=t,
        global_acc=global_acc,
        mean_local_acc=float(np.mean(local_accs)),
        global_ece=global_ece,
        mean_local_ece=float(np.mean(local_eces)),
        total_grad_variance=variance,
        worst5_local_acc=worst_fraction_accuracy(local_accs, 0.05),
    )


def run_experiment(
    cfg: FederationConfig,
    dataset: LabeledDataset,
    partition: PartitionResult,
    global_test: LabeledDataset | None = None,
) -> tuple[list[RoundMetrics], GlobalState, list[ClientState]]:
    """Execute T communication rounds; fully deterministic given the config.

    Metrics are recorded every eval_interval rounds and at the final round.
    When no global test set is supplied, the union of the clients' local test
    splits stands in for it.
    """
    cfg.validate()
    rngs = RngStream(cfg.master_seed)
    clients = build_clients(cfg, dataset, partition)
    if global_test is None:
        joined = np.concatenate(
            [np.concatenate([c.test.features for c in clients]), ]
        )
        labels = np.concatenate([c.test.labels for c in clients])
        global_test = LabeledDataset(joined, labels, cfg.n_classes)
    state = _init_global(cfg, rngs)
    total_n = sum(c.n_k for c in clients)
    weights = {c.id: c.n_k for c in clients}
    flat_strategy = cfg.strategy in FLAT_STRATEGIES
    metrics: list[RoundMetrics] = []

    for t in range(1, cfg.rounds + 1):
        state.round = t
        participants = choose_participants(rngs, t, cfg.n_clients, cfg.participants)
        part_set = set(int(k) for k in participants)

        if flat_strategy:
            flat = _flat_params(state)
            deltas = {}
            for k in participants:
                c = clients[int(k)]
                rng = rngs.stream(t, c.id, "batches")
                if cfg.strategy == "fedprox":
                    deltas[c.id] = local_update_fedprox(flat, c, cfg, rng)
                else:
                    deltas[c.id] = local_update_fedavg(flat, c, cfg, rng)
            new_flat = global_aggregate(
                flat, deltas, weights, total_n, cfg.renormalize_participation
            )
            nb = mdl.backbone_size(cfg.input_dim, cfg.hidden_dim)
            state.backbone_flat = new_flat[:nb]
            state.endpoints = new_flat[None, nb:]
            head_updates = np.stack([_head_slice(cfg, deltas[k]) for k in sorted(deltas)])
        else:
            endpoint_deltas: dict[int, np.ndarray] = {}
            backbone_deltas: dict[int, np.ndarray] = {}
            # At the assignment round every client contributes a gradient
            # stack; participants' training deltas double as theirs.
            run_ids = sorted(part_set | set(range(cfg.n_clients))) if t == cfg.tau else sorted(part_set)
            for k in run_ids:
                c = clients[k]
                d_theta, d_bb = local_update_floco(
                    state.endpoints, state.backbone_flat, c, cfg, rngs.stream(t, c.id, "batches")
                )
                endpoint_deltas[k] = d_theta
                backbone_deltas[k] = d_bb
            if t == cfg.tau:
                assign_subregions_at_tau(endpoint_deltas, cfg, clients)
            part_theta = {k: endpoint_deltas[k] for k in part_set}
            part_bb = {k: backbone_deltas[k] for k in part_set}
            state.endpoints = global_aggregate(
                state.endpoints, part_theta, weights, total_n, cfg.renormalize_participation
            )
            if cfg.simplex_scope == mdl.LAST_LAYER:
                state.backbone_flat = global_aggregate(
                    state.backbone_flat, part_bb, weights, total_n, cfg.renormalize_participation
                )
            if not np.all(np.isfinite(state.endpoints)):
                raise FloatingPointError(f"non-finite endpoints after round {t}")
            if cfg.simplex_scope == mdl.LAST_LAYER:
                head_updates = np.stack([part_theta[k] for k in sorted(part_theta)])
            else:
                head_updates = np.stack(
                    [_head_slice(cfg, part_theta[k]) for k in sorted(part_theta)]
                )

        if t % cfg.eval_interval == 0 or t == cfg.rounds:
            variance = (
                total_gradient_variance(head_updates) if head_updates.shape[0] >= 2 else 0.0
            )
            metrics.append(_evaluate(cfg, t, state, clients, global_test, variance, rngs))

    state.sync_model()
    return metrics, state, clients
