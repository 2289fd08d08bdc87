"""End-to-end training of the hybrid models.

Softmax cross-entropy over the mixed expert logits, exact analytic gradients
(quantum-router gradients delegate to the selected Jacobian backend), Adam,
mini-batching, early stopping on validation loss, and seeded determinism:
initialization, splits and shuffling all derive from the config seed, so a
fixed seed reproduces the trace and the final parameters bitwise.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .gradients import route_jacobian
from .models import (
    DeepRouter,
    HybridModel,
    LinearRouter,
    QuantumRouter,
    apply_parameters,
    clone_model,
    forward,
    gate_quantum,
    parameter_dict,
    softmax,
)


@dataclass
class TrainConfig:
    learning_rate: float = 0.01
    batch_size: int = 32
    max_epochs: int = 100
    early_stop_patience: int = 10
    min_delta: float = 1e-4
    validation_fraction: float = 0.2
    seed: int = 0
    gradient_backend: str = "adjoint"

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if not 0.0 < self.validation_fraction < 1.0:
            raise ValueError(f"validation_fraction must be in (0, 1), got {self.validation_fraction}")
        if self.max_epochs < 0:
            raise ValueError(f"max_epochs must be nonnegative, got {self.max_epochs}")


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_loss: float
    train_acc: float
    val_acc: float
    wall_ms: float
    expert_utilization: np.ndarray


@dataclass
class TrainTrace:
    records: list[EpochRecord] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.records)


def write_trace_csv(trace: TrainTrace, path, n_experts: int, include_wall_ms: bool = True) -> None:
    """Per-epoch CSV. The wall_ms column is the one nondeterministic field;
    the experiment harness drops it so its artifacts reproduce bitwise."""
    cols = ["epoch", "train_loss", "val_loss", "train_acc", "val_acc"]
    if include_wall_ms:
        cols.append("wall_ms")
    cols += [f"util_{i}" for i in range(n_experts)]
    with open(path, "w", encoding="utf-8") as f:
        f.write(",".join(cols) + "\n")
        for r in trace.records:
            row = [str(r.epoch), repr(r.train_loss), repr(r.val_loss), repr(r.train_acc), repr(r.val_acc)]
            if include_wall_ms:
                row.append(repr(r.wall_ms))
            row += [repr(float(u)) for u in r.expert_utilization]
            f.write(",".join(row) + "\n")


def _cross_entropy(logits: np.ndarray, label: int) -> tuple[float, np.ndarray]:
    """Loss and d(loss)/d(logits) for one sample."""
    shifted = logits - logits.max()
    log_z = math.log(np.exp(shifted).sum())
    p = np.exp(shifted - log_z)
    return log_z - shifted[label], p - np.eye(len(logits))[label]


def loss_and_grad(
    model: HybridModel, X: np.ndarray, y: np.ndarray, backend: str = "adjoint"
) -> tuple[float, dict[str, np.ndarray]]:
    """Mean cross-entropy over the batch and its exact gradient per parameter."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=int))
    if len(X) == 0:
        raise ValueError("empty batch")
    if y.min() < 0 or y.max() >= model.n_classes:
        raise ValueError(f"labels must lie in [0, {model.n_classes}), got range [{y.min()}, {y.max()}]")
    grads = {name: np.zeros_like(arr) for name, arr in parameter_dict(model).items()}
    router = model.router
    total_loss = 0.0
    for x, label in zip(X, y):
        g, cache = _gate_with_cache(router, x)
        expert_out = np.stack([e.output(x) for e in model.experts])  # (N, C)
        logits = g @ expert_out
        loss, d_logits = _cross_entropy(logits, int(label))
        total_loss += loss
        for i in range(model.n_experts):
            grads[f"expert{i}.weight"] += g[i] * np.outer(d_logits, x)
            grads[f"expert{i}.bias"] += g[i] * d_logits
        d_gate = expert_out @ d_logits  # (N,)
        _router_backward(router, x, g, d_gate, cache, grads, backend)
    n = len(X)
    for name in grads:
        grads[name] /= n
    return total_loss / n, grads


def _gate_with_cache(router, x: np.ndarray):
    """Gate vector plus whatever the backward pass needs."""
    if isinstance(router, LinearRouter):
        return softmax(router.weight @ x + router.bias), None
    if isinstance(router, DeepRouter):
        hiddens = [x]
        h = x
        for w, b in router.layers[:-1]:
            h = np.tanh(w @ h + b)
            hiddens.append(h)
        w, b = router.layers[-1]
        return softmax(w @ h + b), hiddens
    return gate_quantum(router, x), None


def _softmax_backward(g: np.ndarray, d_gate: np.ndarray) -> np.ndarray:
    """d(loss)/d(logits) given d(loss)/d(softmax outputs)."""
    return g * (d_gate - g @ d_gate)


def _router_backward(router, x, g, d_gate, cache, grads, backend) -> None:
    if isinstance(router, LinearRouter):
        dz = _softmax_backward(g, d_gate)
        grads["router.weight"] += np.outer(dz, x)
        grads["router.bias"] += dz
    elif isinstance(router, DeepRouter):
        hiddens = cache
        dz = _softmax_backward(g, d_gate)
        for i in range(len(router.layers) - 1, -1, -1):
            w, _ = router.layers[i]
            grads[f"router.layer{i}.weight"] += np.outer(dz, hiddens[i])
            grads[f"router.layer{i}.bias"] += dz
            if i > 0:
                dz = (w.T @ dz) * (1.0 - hiddens[i] ** 2)
    elif isinstance(router, QuantumRouter):
        jac = route_jacobian(
            router.spec, router.params, x, router.n_experts, backend=backend, mapping=router.mapping
        )  # (N, P)
        grads["router.theta"] += d_gate @ jac
    else:
        raise TypeError(f"unknown router type {type(router).__name__}")


@dataclass
class AdamState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]

    @classmethod
    def zeros_like(cls, params: dict[str, np.ndarray]) -> "AdamState":
        return cls(
            m={k: np.zeros_like(a) for k, a in params.items()},
            v={k: np.zeros_like(a) for k, a in params.items()},
        )


def adam_step(
    params: dict[str, np.ndarray],
    grads: dict[str, np.ndarray],
    state: AdamState,
    t: int,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps_hat: float = 1e-8,
) -> tuple[dict[str, np.ndarray], AdamState]:
    """One bias-corrected Adam update; pure, returns fresh arrays."""
    if t < 1:
        raise ValueError(f"step index must be >= 1, got {t}")
    new_params, new_m, new_v = {}, {}, {}
    for name, p in params.items():
        grad = grads[name]
        if grad.shape != p.shape:
            raise ValueError(f"gradient shape {grad.shape} does not match parameter {name} shape {p.shape}")
        m = beta1 * state.m[name] + (1 - beta1) * grad
        v = beta2 * state.v[name] + (1 - beta2) * grad**2
        m_hat = m / (1 - beta1**t)
        v_hat = v / (1 - beta2**t)
        new_params[name] = p - lr * m_hat / (np.sqrt(v_hat) + eps_hat)
        new_m[name], new_v[name] = m, v
    return new_params, AdamState(m=new_m, v=new_v)


def evaluate(model: HybridModel, X: np.ndarray, y: np.ndarray, epsilon: float = 0.0):
    """Mean loss, accuracy and mean gate vector over a labeled set."""
    total_loss, correct = 0.0, 0
    gate_sum = np.zeros(model.n_experts)
    for x, label in zip(X, y):
        logits, g = forward(model, x, epsilon)
        loss, _ = _cross_entropy(logits, int(label))
        total_loss += loss
        correct += int(np.argmax(logits) == label)
        gate_sum += g
    n = len(X)
    return total_loss / n, correct / n, gate_sum / n


def fit(model: HybridModel, dataset: tuple[np.ndarray, np.ndarray], config: TrainConfig):
    """Train with early stopping; returns the best-validation-loss snapshot.

    The validation split is stratified and carved from ``dataset`` by the
    config seed. If the split rounds down to zero rows (tiny datasets),
    validation metrics fall back to the training set.
    """
    X, y = dataset
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=int)
    classes = np.unique(y)
    if len(classes) < 2:
        raise ValueError(f"degenerate dataset: needs >= 2 classes, got {classes.tolist()}")
    rng = np.random.default_rng(config.seed)

    val_mask = np.zeros(len(X), dtype=bool)
    for cls in classes:
        idx = rng.permutation(np.flatnonzero(y == cls))
        val_mask[idx[: int(round(config.validation_fraction * len(idx)))]] = True
    X_tr, y_tr = X[~val_mask], y[~val_mask]
    X_val, y_val = X[val_mask], y[val_mask]
    if len(X_val) == 0:
        X_val, y_val = X_tr, y_tr
    if len(X_tr) < config.batch_size:
        raise ValueError(
            f"only {len(X_tr)} training samples left after the validation split, need >= batch_size={config.batch_size}"
        )

    model = clone_model(model)
    best = clone_model(model)
    best_val_loss = math.inf
    state = AdamState.zeros_like(parameter_dict(model))
    trace = TrainTrace()
    t = 0
    bad_epochs = 0
    for epoch in range(1, config.max_epochs + 1):
        start = time.perf_counter()
        order = rng.permutation(len(X_tr))
        epoch_loss = 0.0
        for lo in range(0, len(order), config.batch_size):
            batch = order[lo : lo + config.batch_size]
            loss, grads = loss_and_grad(model, X_tr[batch], y_tr[batch], backend=config.gradient_backend)
            epoch_loss += loss * len(batch)
            t += 1
            new_params, state = adam_step(
                parameter_dict(model), grads, state, t, lr=config.learning_rate
            )
            apply_parameters(model, new_params)
        _, train_acc, _ = evaluate(model, X_tr, y_tr)
        val_loss, val_acc, utilization = evaluate(model, X_val, y_val)
        trace.records.append(
            EpochRecord(
                epoch=epoch,
                train_loss=epoch_loss / len(X_tr),
                val_loss=val_loss,
                train_acc=train_acc,
                val_acc=val_acc,
                wall_ms=(time.perf_counter() - start) * 1000.0,
                expert_utilization=utilization,
            )
        )
        if best_val_loss - val_loss > config.min_delta:
            best_val_loss = val_loss
            best = clone_model(model)
            bad_epochs = 0
        else:
            bad_epochs += 1
            if bad_epochs >= config.early_stop_patience:
                break
    return best, trace
