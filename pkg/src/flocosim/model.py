"""Small classifier with a simplex-parameterized final layer.

Architecture: input -> dense(hidden) -> rectifier -> dense(classes) -> softmax.
The final layer ("head", weights plus bias, flattened) is spanned by a set of
endpoint vectors; a barycentric coordinate alpha selects the combined head
w_alpha = sum_m alpha_m * theta_m.  In all-layers mode the endpoints hold full
flattened parameter vectors (backbone + head) instead.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels

LAST_LAYER = "last_layer"
ALL_LAYERS = "all_layers"


@dataclass
class Backbone:
    w1: np.ndarray  # (hidden, input_dim)
    b1: np.ndarray  # (hidden,)

    @property
    def hidden_dim(self) -> int:
        return self.w1.shape[0]

    @property
    def input_dim(self) -> int:
        return self.w1.shape[1]


@dataclass
class HeadEndpoints:
    """M+1 endpoint vectors stored as rows of a (M+1, P) array."""

    endpoints: np.ndarray

    def __post_init__(self):
        self.endpoints = np.atleast_2d(np.asarray(self.endpoints, dtype=np.float64))
        if not np.all(np.isfinite(self.endpoints)):
            raise ValueError("endpoint vectors must be finite")

    @property
    def m(self) -> int:
        return self.endpoints.shape[0] - 1

    def copy(self) -> "HeadEndpoints":
        return HeadEndpoints(self.endpoints.copy())


@dataclass
class ModelState:
    backbone: Backbone
    head: HeadEndpoints
    n_classes: int
    simplex_scope: str = LAST_LAYER

    def __post_init__(self):
        if self.simplex_scope not in (LAST_LAYER, ALL_LAYERS):
            raise ValueError(f"unknown simplex_scope: {self.simplex_scope}")
        expected = head_size(self.backbone.hidden_dim, self.n_classes)
        if self.simplex_scope == ALL_LAYERS:
            expected += backbone_size(self.backbone.input_dim, self.backbone.hidden_dim)
        if self.head.endpoints.shape[1] != expected:
            raise ValueError(
                f"endpoint length {self.head.endpoints.shape[1]}, expected {expected}"
            )

    @property
    def input_dim(self) -> int:
        return self.backbone.input_dim

    @property
    def hidden_dim(self) -> int:
        return self.backbone.hidden_dim


@dataclass
class Batch:
    inputs: np.ndarray  # (B, input_dim)
    labels: np.ndarray  # (B,) class indices

    def __post_init__(self):
        self.inputs = np.ascontiguousarray(self.inputs, dtype=np.float64)
        self.labels = np.ascontiguousarray(self.labels, dtype=np.int64)
        if self.inputs.shape[0] != self.labels.shape[0]:
            raise ValueError("inputs and labels disagree on batch size")

    def __len__(self) -> int:
        return self.inputs.shape[0]


def backbone_size(input_dim: int, hidden_dim: int) -> int:
    return hidden_dim * input_dim + hidden_dim


def head_size(hidden_dim: int, n_classes: int) -> int:
    return n_classes * hidden_dim + n_classes


def flatten_backbone(backbone: Backbone) -> np.ndarray:
    return np.concatenate([backbone.w1.ravel(), backbone.b1])


def unflatten_backbone(vec: np.ndarray, input_dim: int, hidden_dim: int) -> Backbone:
    nw = hidden_dim * input_dim
    w1 = vec[:nw].reshape(hidden_dim, input_dim)
    return Backbone(w1=w1, b1=vec[nw : nw + hidden_dim])


def split_head(vec: np.ndarray, hidden_dim: int, n_classes: int):
    nw = n_classes * hidden_dim
    return vec[:nw].reshape(n_classes, hidden_dim), vec[nw : nw + n_classes]


def init_model(
    input_dim: int,
    hidden_dim: int,
    n_classes: int,
    m: int,
    rng: np.random.Generator,
    simplex_scope: str = LAST_LAYER,
) -> ModelState:
    """Uniform init in [-1/sqrt(fan_in), 1/sqrt(fan_in)] per layer.

    Each of the M+1 endpoints is initialized independently; the diversity of
    independent starts is what keeps the endpoints from collapsing.
    """

    def _layer(fan_in, *shape):
        bound = 1.0 / np.sqrt(fan_in)
        return rng.uniform(-bound, bound, size=shape)

    w1 = _layer(input_dim, hidden_dim, input_dim)
    b1 = _layer(input_dim, hidden_dim)
    backbone = Backbone(w1=w1, b1=b1)

    endpoints = []
    for _ in range(m + 1):
        head = np.concatenate(
            [_layer(hidden_dim, n_classes, hidden_dim).ravel(), _layer(hidden_dim, n_classes)]
        )
        if simplex_scope == ALL_LAYERS:
            full_backbone = np.concatenate(
                [_layer(input_dim, hidden_dim, input_dim).ravel(), _layer(input_dim, hidden_dim)]
            )
            head = np.concatenate([full_backbone, head])
        endpoints.append(head)
    return ModelState(
        backbone=backbone,
        head=HeadEndpoints(np.stack(endpoints)),
        n_classes=n_classes,
        simplex_scope=simplex_scope,
    )


def combine_head(head: HeadEndpoints, alpha) -> np.ndarray:
    """Barycentric combination w_alpha = sum_m alpha_m theta_m."""
    alpha = np.asarray(alpha, dtype=np.float64)
    if alpha.shape[0] != head.endpoints.shape[0]:
        raise ValueError(
            f"alpha has {alpha.shape[0]} entries, head has {head.endpoints.shape[0]} endpoints"
        )
    return alpha @ head.endpoints


def _resolve_params(model: ModelState, alpha):
    """Return (w1, b1, w2, b2) at the given simplex point."""
    combined = combine_head(model.head, alpha)
    if model.simplex_scope == ALL_LAYERS:
        nb = backbone_size(model.input_dim, model.hidden_dim)
        bb = unflatten_backbone(combined[:nb], model.input_dim, model.hidden_dim)
        w2, b2 = split_head(combined[nb:], model.hidden_dim, model.n_classes)
        return bb.w1, bb.b1, w2, b2
    w2, b2 = split_head(combined, model.hidden_dim, model.n_classes)
    return model.backbone.w1, model.backbone.b1, w2, b2


def forward(model: ModelState, alpha, inputs) -> np.ndarray:
    """Per-row class probabilities at simplex point alpha."""
    inputs = np.ascontiguousarray(inputs, dtype=np.float64)
    if inputs.shape[1] != model.input_dim:
        raise ValueError(
            f"input width {inputs.shape[1]} != configured input_dim {model.input_dim}"
        )
    w1, b1, w2, b2 = (np.ascontiguousarray(a) for a in _resolve_params(model, alpha))
    return kernels.mlp_forward(w1, b1, w2, b2, inputs)


def loss_and_grads(model: ModelState, alpha, batch: Batch):
    """Mean cross-entropy and exact analytic gradients at simplex point alpha.

    Returns (loss, backbone_grad, endpoint_grads) where endpoint_grads[m] is
    alpha_m times the gradient w.r.t. the combined endpoint vector.  In
    all-layers mode the backbone gradient is folded into the endpoint
    gradients and the returned backbone_grad is empty.
    """
    if len(batch) == 0:
        raise ValueError("empty batch")
    alpha = np.asarray(alpha, dtype=np.float64)
    w1, b1, w2, b2 = (np.ascontiguousarray(a) for a in _resolve_params(model, alpha))
    loss, gw1, gb1, gw2, gb2 = kernels.mlp_loss_and_grads(
        w1, b1, w2, b2, batch.inputs, batch.labels
    )
    head_grad = np.concatenate([gw2.ravel(), gb2])
    if model.simplex_scope == ALL_LAYERS:
        full_grad = np.concatenate([gw1.ravel(), gb1, head_grad])
        endpoint_grads = alpha[:, None] * full_grad[None, :]
        return loss, np.empty(0), endpoint_grads
    backbone_grad = np.concatenate([gw1.ravel(), gb1])
    endpoint_grads = alpha[:, None] * head_grad[None, :]
    return loss, backbone_grad, endpoint_grads


def sgd_step(params: np.ndarray, grad: np.ndarray, gamma: float) -> np.ndarray:
    """Plain gradient-descent step params - gamma * grad."""
    if params.shape != grad.shape:
        raise ValueError("params and grad have different shapes")
    return params - gamma * grad
