"""Multi-view evidential classifier with small dense evidence heads.

One head per view maps that view's features through tanh hidden layers to a
softplus output, so evidence is nonnegative for every input. Heads are
trained jointly by Adam on the overall evidential objective; gradients flow
through both fusion operators back into every head. Everything is seeded and
reductions are ordered, so a config plus data determines the trained model
bit for bit.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .data import MultiViewDataset, MultiViewSample
from .dirichlet import BaseRate, DirichletParams, EvidenceVector, expected_probabilities, predict_class
from .losses import LossConfig, annealed_lambda, overall_loss, overall_loss_and_grad
from .opinions import (
    FusionConflictError,
    combine_multiview,
    dirichlet_from_evidence,
    dirichlet_from_opinion,
    opinion_from_dirichlet,
)

CHECKPOINT_FORMAT = "evifuse-model"
CHECKPOINT_VERSION = 1

# Training skips a sample when the constraint-fusion normalizer falls below
# this; gradients near total conflict are unbounded.
_TRAIN_CONFLICT_FLOOR = 1e-6


class TrainingDiverged(RuntimeError):
    """Raised when the objective stops being finite."""


@dataclass(frozen=True)
class ModelConfig:
    """Shape and optimization settings for an evidential model."""

    num_classes: int
    num_views: int
    view_dims: tuple
    hidden: tuple = (32,)
    prior_weight: float | None = None  # W; defaults to num_classes
    learning_rate: float = 1e-4
    epochs: int = 200
    batch_size: int = 32
    anneal_epochs: int | None = None  # defaults to epochs
    seed: int = 0

    def __post_init__(self):
        k, v = int(self.num_classes), int(self.num_views)
        if k < 2:
            raise ValueError("need at least two classes")
        if v < 2:
            raise ValueError("need at least two views")
        dims = tuple(int(d) for d in self.view_dims)
        if len(dims) != v or any(d < 1 for d in dims):
            raise ValueError("view_dims must list one positive dimension per view")
        hidden = tuple(int(h) for h in self.hidden)
        if any(h < 1 for h in hidden):
            raise ValueError("hidden layer sizes must be positive")
        w = float(self.prior_weight) if self.prior_weight is not None else float(k)
        if not np.isfinite(w) or w <= 0.0:
            raise ValueError("prior weight must be positive")
        if self.learning_rate < 0.0:
            raise ValueError("learning rate must be nonnegative")
        if int(self.epochs) < 0 or int(self.batch_size) < 1:
            raise ValueError("bad epochs/batch_size")
        anneal = int(self.anneal_epochs) if self.anneal_epochs is not None else max(1, int(self.epochs))
        if anneal < 1:
            raise ValueError("anneal_epochs must be at least 1")
        object.__setattr__(self, "num_classes", k)
        object.__setattr__(self, "num_views", v)
        object.__setattr__(self, "view_dims", dims)
        object.__setattr__(self, "hidden", hidden)
        object.__setattr__(self, "prior_weight", w)
        object.__setattr__(self, "learning_rate", float(self.learning_rate))
        object.__setattr__(self, "epochs", int(self.epochs))
        object.__setattr__(self, "batch_size", int(self.batch_size))
        object.__setattr__(self, "anneal_epochs", anneal)
        object.__setattr__(self, "seed", int(self.seed))

    def to_dict(self) -> dict:
        return {
            "num_classes": self.num_classes,
            "num_views": self.num_views,
            "view_dims": list(self.view_dims),
            "hidden": list(self.hidden),
            "prior_weight": self.prior_weight,
            "learning_rate": self.learning_rate,
            "epochs": self.epochs,
            "batch_size": self.batch_size,
            "anneal_epochs": self.anneal_epochs,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "ModelConfig":
        return cls(
            num_classes=obj["num_classes"],
            num_views=obj["num_views"],
            view_dims=tuple(obj["view_dims"]),
            hidden=tuple(obj["hidden"]),
            prior_weight=obj.get("prior_weight"),
            learning_rate=obj.get("learning_rate", 1e-4),
            epochs=obj.get("epochs", 200),
            batch_size=obj.get("batch_size", 32),
            anneal_epochs=obj.get("anneal_epochs"),
            seed=obj.get("seed", 0),
        )


def _softplus(z: np.ndarray) -> np.ndarray:
    return np.logaddexp(0.0, z)


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


class EvidenceHead:
    """Dense map from one view's features to nonnegative class evidence."""

    def __init__(self, weights, biases):
        self.weights = [np.asarray(w, dtype=float) for w in weights]
        self.biases = [np.asarray(b, dtype=float) for b in biases]
        if len(self.weights) != len(self.biases) or not self.weights:
            raise ValueError("inconsistent head layers")

    @classmethod
    def initialize(cls, in_dim: int, hidden, num_classes: int, rng) -> "EvidenceHead":
        sizes = [int(in_dim), *(int(h) for h in hidden), int(num_classes)]
        weights, biases = [], []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            r = 1.0 / np.sqrt(fan_in)
            weights.append(rng.uniform(-r, r, size=(fan_out, fan_in)))
            biases.append(rng.uniform(-r, r, size=fan_out))
        return cls(weights, biases)

    def forward(self, x: np.ndarray) -> np.ndarray:
        h = np.asarray(x, dtype=float)
        for w, b in zip(self.weights[:-1], self.biases[:-1]):
            h = np.tanh(w @ h + b)
        return _softplus(self.weights[-1] @ h + self.biases[-1])

    def forward_cached(self, x: np.ndarray):
        """Forward pass keeping activations for backward()."""
        x = np.asarray(x, dtype=float)
        acts = [x]
        h = x
        for w, b in zip(self.weights[:-1], self.biases[:-1]):
            h = np.tanh(w @ h + b)
            acts.append(h)
        z_out = self.weights[-1] @ h + self.biases[-1]
        return _softplus(z_out), (acts, z_out)

    def backward(self, cache, grad_evidence: np.ndarray):
        """Parameter gradients for an upstream d loss / d evidence."""
        acts, z_out = cache
        delta = grad_evidence * _sigmoid(z_out)
        grads_w = [None] * len(self.weights)
        grads_b = [None] * len(self.biases)
        grads_w[-1] = np.outer(delta, acts[-1])
        grads_b[-1] = delta
        for layer in range(len(self.weights) - 2, -1, -1):
            delta = (self.weights[layer + 1].T @ delta) * (1.0 - acts[layer + 1] ** 2)
            grads_w[layer] = np.outer(delta, acts[layer])
            grads_b[layer] = delta
        return grads_w, grads_b

    def parameters(self):
        for w, b in zip(self.weights, self.biases):
            yield w
            yield b


class EvidentialModel:
    """V evidence heads plus the training base rate and config."""

    def __init__(self, heads, base_rate: BaseRate, config: ModelConfig):
        if len(heads) != config.num_views:
            raise ValueError("head count must equal the number of views")
        if base_rate.num_classes != config.num_classes:
            raise ValueError("base rate and config disagree on the number of classes")
        if base_rate.weight != config.prior_weight:
            raise ValueError("base rate weight and config prior_weight disagree")
        self.heads = list(heads)
        self.base_rate = base_rate
        self.config = config

    @classmethod
    def initialize(cls, config: ModelConfig, base_rate: BaseRate) -> "EvidentialModel":
        rng = np.random.default_rng(config.seed)
        heads = [
            EvidenceHead.initialize(dim, config.hidden, config.num_classes, rng)
            for dim in config.view_dims
        ]
        return cls(heads, base_rate, config)

    def parameters(self):
        for head in self.heads:
            yield from head.parameters()


def compute_base_rate(labels, num_classes: int, weight: float | None = None) -> BaseRate:
    """Class frequencies of the training labels; weight defaults to K."""
    labels = np.asarray(labels, dtype=int)
    if labels.size == 0:
        raise ValueError("no labels")
    if labels.min() < 0 or labels.max() >= num_classes:
        raise ValueError("label outside the configured class range")
    counts = np.bincount(labels, minlength=num_classes)
    if np.any(counts == 0):
        missing = int(np.flatnonzero(counts == 0)[0])
        raise ValueError(f"class {missing} absent from the labels; its base rate would be 0")
    return BaseRate(counts / counts.sum(), weight)


def _check_sample(model: EvidentialModel, sample: MultiViewSample):
    cfg = model.config
    if len(sample.views) != cfg.num_views or tuple(v.size for v in sample.views) != cfg.view_dims:
        raise ValueError(f"sample {sample.id}: view shapes do not match the model")


def forward(model: EvidentialModel, sample: MultiViewSample):
    """Evidence, per-view opinions, combined opinion, combined Dirichlet."""
    _check_sample(model, sample)
    base = model.base_rate
    evidences = [EvidenceVector(h.forward(x)) for h, x in zip(model.heads, sample.views)]
    view_opinions = [
        opinion_from_dirichlet(dirichlet_from_evidence(e, base), base) for e in evidences
    ]
    try:
        combined = combine_multiview(view_opinions[:-1], view_opinions[-1])
    except FusionConflictError as exc:
        raise FusionConflictError(f"sample {sample.id}: {exc}") from exc
    return evidences, view_opinions, combined, dirichlet_from_opinion(combined, base)


def predict(model: EvidentialModel, sample: MultiViewSample, base_rate_override: BaseRate | None = None):
    """(predicted class, combined uncertainty, expected probabilities).

    With an override, the combined opinion is re-anchored to the new base
    rate before reading off probabilities; beliefs and uncertainty are
    untouched, since they are evidence-only quantities.
    """
    _, _, combined, alpha = forward(model, sample)
    if base_rate_override is not None:
        alpha = dirichlet_from_opinion(combined, base_rate_override)
    probs = expected_probabilities(alpha)
    return predict_class(alpha), combined.uncertainty, probs


@dataclass(frozen=True)
class TrainingReport:
    """Per-epoch curves; epoch i is measured after update i+1 completes."""

    train_loss: tuple
    train_acc: tuple
    valid_loss: tuple
    valid_acc: tuple
    skipped: tuple  # conflict-skipped sample counts per epoch

    def to_dict(self) -> dict:
        return {
            "train_loss": list(self.train_loss),
            "train_acc": list(self.train_acc),
            "valid_loss": list(self.valid_loss),
            "valid_acc": list(self.valid_acc),
            "skipped": list(self.skipped),
        }

    @property
    def final_valid_acc(self) -> float:
        return self.valid_acc[-1] if self.valid_acc else float("nan")


def _combined_alpha(evidences, base: BaseRate) -> DirichletParams:
    ops = [
        opinion_from_dirichlet(dirichlet_from_evidence(EvidenceVector(e), base), base)
        for e in evidences
    ]
    combined = combine_multiview(ops[:-1], ops[-1])
    return dirichlet_from_opinion(combined, base)


def _dataset_eval(model: EvidentialModel, ds: MultiViewDataset, loss_cfg: LossConfig):
    """Mean overall loss and accuracy of the model on a dataset."""
    base = model.base_rate
    prior = base.rates * base.weight
    total = 0.0
    correct = 0
    for sample in ds:
        evidences = [h.forward(x) for h, x in zip(model.heads, sample.views)]
        alpha = _combined_alpha(evidences, base)
        view_alphas = [DirichletParams(e + prior) for e in evidences]
        total += overall_loss(view_alphas, alpha, sample.label, loss_cfg)
        correct += int(predict_class(alpha) == sample.label)
    return total / len(ds), correct / len(ds)


def fit(model: EvidentialModel, train: MultiViewDataset, valid: MultiViewDataset) -> TrainingReport:
    """Adam on the overall objective with a linearly annealed balance factor.

    Batches are drawn by a seeded permutation each epoch; per-batch gradients
    are ordered means over the batch. Samples whose fusion is near total
    conflict are skipped and counted. Raises TrainingDiverged if the
    objective stops being finite.
    """
    cfg = model.config
    for ds in (train, valid):
        if ds.num_classes != cfg.num_classes or ds.view_dims != cfg.view_dims:
            raise ValueError("dataset shape does not match the model config")
    base = model.base_rate
    beta = DirichletParams(base.rates * base.weight)
    rng = np.random.default_rng(cfg.seed + 1)  # decouple batch order from init
    params = list(model.parameters())
    adam_m = [np.zeros_like(p) for p in params]
    adam_v = [np.zeros_like(p) for p in params]
    beta1, beta2, eps = 0.9, 0.999, 1e-8
    step = 0

    curves = {"train_loss": [], "train_acc": [], "valid_loss": [], "valid_acc": [], "skipped": []}
    for epoch in range(cfg.epochs):
        lam = annealed_lambda(epoch, cfg.anneal_epochs)
        loss_cfg = LossConfig(lam, beta)
        order = rng.permutation(len(train))
        skipped = 0
        for start in range(0, len(order), cfg.batch_size):
            batch = order[start : start + cfg.batch_size]
            grad_acc = [np.zeros_like(p) for p in params]
            used = 0
            for idx in batch:
                sample = train.samples[idx]
                results = [
                    h.forward_cached(x) for h, x in zip(model.heads, sample.views)
                ]
                evidences = [e for e, _ in results]
                try:
                    loss, ev_grads = overall_loss_and_grad(
                        evidences, base, sample.label, loss_cfg,
                        conflict_floor=_TRAIN_CONFLICT_FLOOR,
                    )
                except FusionConflictError:
                    skipped += 1
                    continue
                if not np.isfinite(loss):
                    raise TrainingDiverged(
                        f"non-finite loss at epoch {epoch}, sample {sample.id}"
                    )
                used += 1
                slot = 0
                for head, (_, cache), g_e in zip(model.heads, results, ev_grads):
                    grads_w, grads_b = head.backward(cache, g_e)
                    for gw, gb in zip(grads_w, grads_b):
                        grad_acc[slot] += gw
                        grad_acc[slot + 1] += gb
                        slot += 2
            if used == 0:
                continue
            step += 1
            lr_t = cfg.learning_rate * np.sqrt(1.0 - beta2**step) / (1.0 - beta1**step)
            for p, g, m, v in zip(params, grad_acc, adam_m, adam_v):
                g /= used
                m *= beta1
                m += (1.0 - beta1) * g
                v *= beta2
                v += (1.0 - beta2) * g * g
                p -= lr_t * m / (np.sqrt(v) + eps)

        tr_loss, tr_acc = _dataset_eval(model, train, loss_cfg)
        va_loss, va_acc = _dataset_eval(model, valid, loss_cfg)
        if not (np.isfinite(tr_loss) and np.isfinite(va_loss)):
            raise TrainingDiverged(f"non-finite epoch loss at epoch {epoch}")
        curves["train_loss"].append(tr_loss)
        curves["train_acc"].append(tr_acc)
        curves["valid_loss"].append(va_loss)
        curves["valid_acc"].append(va_acc)
        curves["skipped"].append(skipped)

    return TrainingReport(
        tuple(curves["train_loss"]),
        tuple(curves["train_acc"]),
        tuple(curves["valid_loss"]),
        tuple(curves["valid_acc"]),
        tuple(curves["skipped"]),
    )


def save_checkpoint(model: EvidentialModel, path) -> None:
    """Versioned JSON checkpoint; floats keep full round-trip precision."""
    doc = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "config": model.config.to_dict(),
        "base_rate": model.base_rate.to_dict(),
        "heads": [
            {
                "layers": [
                    {"weights": w.tolist(), "bias": b.tolist()}
                    for w, b in zip(head.weights, head.biases)
                ]
            }
            for head in model.heads
        ],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, sort_keys=True)
        fh.write("\n")


def load_checkpoint(path) -> EvidentialModel:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValueError(f"{path}: not a valid checkpoint: {exc}") from exc
    if not isinstance(doc, dict) or doc.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"{path}: not an evidential model checkpoint")
    if doc.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {doc.get('version')}")
    config = ModelConfig.from_dict(doc["config"])
    base = BaseRate.from_dict(doc["base_rate"])
    heads = []
    for head_doc in doc["heads"]:
        weights = [np.array(layer["weights"], dtype=float) for layer in head_doc["layers"]]
        biases = [np.array(layer["bias"], dtype=float) for layer in head_doc["layers"]]
        heads.append(EvidenceHead(weights, biases))
    return EvidentialModel(heads, base, config)
