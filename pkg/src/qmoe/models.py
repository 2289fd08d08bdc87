"""Hybrid mixture-of-experts models: three router variants, linear experts.

The ablation trio:

* Model A -- linear router (softmax of an affine map),
* Model B -- quantum router (angle-embedding circuit, basis measurement,
  outcomes marginalized onto experts),
* Model C -- deep router (tanh MLP ending in softmax).

Every variant mixes the same kind of classical linear experts:
y = sum_i g_i(x) * (W_i x + b_i). Experts emit per-class logits and the
mixed logits feed a softmax cross-entropy loss during training.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import noise
from .circuits import CircuitSpec, measure_probabilities, route_probabilities, run_circuit
from .data import Scaler


@dataclass
class LinearExpert:
    weight: np.ndarray  # (n_classes, d)
    bias: np.ndarray  # (n_classes,)

    def output(self, x: np.ndarray) -> np.ndarray:
        return self.weight @ x + self.bias


@dataclass
class LinearRouter:
    weight: np.ndarray  # (n_experts, d)
    bias: np.ndarray  # (n_experts,)


@dataclass
class DeepRouter:
    """Affine layers with tanh between them; the last layer has width n_experts."""

    layers: list[tuple[np.ndarray, np.ndarray]]


@dataclass
class QuantumRouter:
    spec: CircuitSpec
    params: np.ndarray  # (P,) rotation angles
    n_experts: int
    mapping: str = "mod"


Router = LinearRouter | DeepRouter | QuantumRouter


@dataclass
class HybridModel:
    router: Router
    experts: list[LinearExpert]
    d: int
    n_classes: int

    @property
    def n_experts(self) -> int:
        return len(self.experts)


@dataclass(frozen=True)
class ParamCount:
    router: int
    experts: int

    @property
    def total(self) -> int:
        return self.router + self.experts


def softmax(z: np.ndarray) -> np.ndarray:
    e = np.exp(z - np.max(z))
    return e / e.sum()


def gate_linear(router: LinearRouter, x: np.ndarray) -> np.ndarray:
    if x.shape != (router.weight.shape[1],):
        raise ValueError(f"input has shape {x.shape}, router expects ({router.weight.shape[1]},)")
    return softmax(router.weight @ x + router.bias)


def gate_deep(router: DeepRouter, x: np.ndarray) -> np.ndarray:
    h = x
    for w, b in router.layers[:-1]:
        h = np.tanh(w @ h + b)
    w, b = router.layers[-1]
    return softmax(w @ h + b)


def gate_quantum(router: QuantumRouter, x: np.ndarray) -> np.ndarray:
    state = run_circuit(router.spec, router.params, x)
    probs = measure_probabilities(state)
    return route_probabilities(probs, router.n_experts, router.mapping)


def gate_quantum_noisy(router: QuantumRouter, x: np.ndarray, epsilon: float) -> np.ndarray:
    probs = noise.run_circuit_noisy(router.spec, router.params, x, epsilon)
    return route_probabilities(probs, router.n_experts, router.mapping)


def gate(router: Router, x: np.ndarray) -> np.ndarray:
    if isinstance(router, LinearRouter):
        return gate_linear(router, x)
    if isinstance(router, DeepRouter):
        return gate_deep(router, x)
    return gate_quantum(router, x)


def forward(model: HybridModel, x: np.ndarray, epsilon: float = 0.0) -> tuple[np.ndarray, np.ndarray]:
    """Mixed logits and the gate vector for one sample.

    ``epsilon`` routes through the depolarizing density-matrix simulation;
    it only affects quantum routers (classical routers have no noise model).
    """
    x = np.asarray(x, dtype=float)
    if epsilon > 0.0 and isinstance(model.router, QuantumRouter):
        g = gate_quantum_noisy(model.router, x, epsilon)
    else:
        g = gate(model.router, x)
    expert_out = np.stack([e.output(x) for e in model.experts])  # (N, n_classes)
    return g @ expert_out, g


def predict(model: HybridModel, X: np.ndarray, epsilon: float = 0.0) -> np.ndarray:
    """Argmax class for each row of X."""
    return np.array([int(np.argmax(forward(model, x, epsilon)[0])) for x in X])


def count_parameters(model: HybridModel) -> ParamCount:
    router = model.router
    if isinstance(router, LinearRouter):
        n_router = router.weight.size + router.bias.size
    elif isinstance(router, DeepRouter):
        n_router = sum(w.size + b.size for w, b in router.layers)
    else:
        n_router = router.params.size
    n_experts = sum(e.weight.size + e.bias.size for e in model.experts)
    return ParamCount(router=int(n_router), experts=int(n_experts))


def efficiency_ratio(accuracy: float, n_params: int) -> float:
    """Accuracy per log-parameter: accuracy / ln(1 + P)."""
    if n_params < 1:
        raise ValueError(f"parameter count must be >= 1, got {n_params}")
    return accuracy / math.log(1 + n_params)


def _xavier_uniform(rng: np.random.Generator, fan_out: int, fan_in: int) -> np.ndarray:
    a = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-a, a, size=(fan_out, fan_in))


def build_model(
    router_kind: str,
    d: int,
    n_classes: int,
    n_experts: int,
    rng: np.random.Generator,
    n_layers: int = 12,
    hidden: tuple[int, ...] = (13, 13),
    mapping: str = "mod",
    init_angle: float = 0.1,
) -> HybridModel:
    """Seeded construction of a hybrid model.

    Quantum circuit angles start uniform in [-init_angle, init_angle]; small
    angles keep the circuit near identity, where gradients do not vanish.
    Classical weights use Xavier-uniform initialization. The quantum router
    ties one feature to one qubit, so its input dimension is d qubits.
    """
    if router_kind == "linear":
        router: Router = LinearRouter(
            weight=_xavier_uniform(rng, n_experts, d), bias=np.zeros(n_experts)
        )
    elif router_kind == "deep":
        widths = [d, *hidden, n_experts]
        layers = [
            (_xavier_uniform(rng, widths[i + 1], widths[i]), np.zeros(widths[i + 1]))
            for i in range(len(widths) - 1)
        ]
        router = DeepRouter(layers=layers)
    elif router_kind == "quantum":
        spec = CircuitSpec.layered(n_qubits=d, n_layers=n_layers)
        if n_experts > 2**d:
            raise ValueError(f"{n_experts} experts need at most 2**{d} outcomes")
        router = QuantumRouter(
            spec=spec,
            params=rng.uniform(-init_angle, init_angle, size=spec.n_params),
            n_experts=n_experts,
            mapping=mapping,
        )
    else:
        raise ValueError(f"unknown router kind {router_kind!r}")
    experts = [
        LinearExpert(weight=_xavier_uniform(rng, n_classes, d), bias=np.zeros(n_classes))
        for _ in range(n_experts)
    ]
    return HybridModel(router=router, experts=experts, d=d, n_classes=n_classes)


def parameter_dict(model: HybridModel) -> dict[str, np.ndarray]:
    """All trainable arrays, keyed by stable names, in a fixed order."""
    params: dict[str, np.ndarray] = {}
    router = model.router
    if isinstance(router, LinearRouter):
        params["router.weight"] = router.weight
        params["router.bias"] = router.bias
    elif isinstance(router, DeepRouter):
        for i, (w, b) in enumerate(router.layers):
            params[f"router.layer{i}.weight"] = w
            params[f"router.layer{i}.bias"] = b
    else:
        params["router.theta"] = router.params
    for i, expert in enumerate(model.experts):
        params[f"expert{i}.weight"] = expert.weight
        params[f"expert{i}.bias"] = expert.bias
    return params


def apply_parameters(model: HybridModel, updates: dict[str, np.ndarray]) -> None:
    """Write updated arrays back into the model, in place."""
    router = model.router
    if isinstance(router, LinearRouter):
        router.weight = updates["router.weight"]
        router.bias = updates["router.bias"]
    elif isinstance(router, DeepRouter):
        for i in range(len(router.layers)):
            router.layers[i] = (updates[f"router.layer{i}.weight"], updates[f"router.layer{i}.bias"])
    else:
        router.params = updates["router.theta"]
    for i, expert in enumerate(model.experts):
        expert.weight = updates[f"expert{i}.weight"]
        expert.bias = updates[f"expert{i}.bias"]


def clone_model(model: HybridModel) -> HybridModel:
    """Deep copy of all parameter arrays (circuit spec is shared, immutable)."""
    router = model.router
    if isinstance(router, LinearRouter):
        new_router: Router = LinearRouter(router.weight.copy(), router.bias.copy())
    elif isinstance(router, DeepRouter):
        new_router = DeepRouter([(w.copy(), b.copy()) for w, b in router.layers])
    else:
        new_router = QuantumRouter(router.spec, router.params.copy(), router.n_experts, router.mapping)
    experts = [LinearExpert(e.weight.copy(), e.bias.copy()) for e in model.experts]
    return HybridModel(router=new_router, experts=experts, d=model.d, n_classes=model.n_classes)


CHECKPOINT_FORMAT = "qmoe-checkpoint-v1"


def save_checkpoint(
    model: HybridModel,
    path,
    scaler: Scaler | None = None,
    seed_lineage: dict | None = None,
) -> None:
    """Write a self-describing JSON checkpoint; floats round-trip bit-exactly."""
    router = model.router
    if isinstance(router, LinearRouter):
        router_doc = {
            "kind": "linear",
            "weight": router.weight.tolist(),
            "bias": router.bias.tolist(),
        }
    elif isinstance(router, DeepRouter):
        router_doc = {
            "kind": "deep",
            "layers": [{"weight": w.tolist(), "bias": b.tolist()} for w, b in router.layers],
        }
    else:
        router_doc = {
            "kind": "quantum",
            "n_qubits": router.spec.n_qubits,
            "n_layers": router.spec.n_layers,
            "theta": router.params.tolist(),
            "n_experts": router.n_experts,
            "mapping": router.mapping,
        }
    doc = {
        "format": CHECKPOINT_FORMAT,
        "d": model.d,
        "n_classes": model.n_classes,
        "router": router_doc,
        "experts": [{"weight": e.weight.tolist(), "bias": e.bias.tolist()} for e in model.experts],
        "scaler": None if scaler is None else {"lo": scaler.lo.tolist(), "hi": scaler.hi.tolist()},
        "seed_lineage": seed_lineage or {},
    }
    with open(path, "w", encoding="utf-8") as f:
        json.dump(doc, f, indent=1)
        f.write("\n")


def load_checkpoint(path) -> tuple[HybridModel, Scaler | None, dict]:
    with open(path, "r", encoding="utf-8") as f:
        doc = json.load(f)
    if doc.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"not a model checkpoint: format={doc.get('format')!r}")
    rd = doc["router"]
    if rd["kind"] == "linear":
        router: Router = LinearRouter(weight=np.array(rd["weight"]), bias=np.array(rd["bias"]))
    elif rd["kind"] == "deep":
        router = DeepRouter(
            layers=[(np.array(l["weight"]), np.array(l["bias"])) for l in rd["layers"]]
        )
    elif rd["kind"] == "quantum":
        router = QuantumRouter(
            spec=CircuitSpec.layered(rd["n_qubits"], rd["n_layers"]),
            params=np.array(rd["theta"]),
            n_experts=rd["n_experts"],
            mapping=rd["mapping"],
        )
    else:
        raise ValueError(f"unknown router kind {rd['kind']!r} in checkpoint")
    experts = [LinearExpert(weight=np.array(e["weight"]), bias=np.array(e["bias"])) for e in doc["experts"]]
    model = HybridModel(router=router, experts=experts, d=doc["d"], n_classes=doc["n_classes"])
    scaler = None
    if doc.get("scaler") is not None:
        scaler = Scaler(lo=np.array(doc["scaler"]["lo"]), hi=np.array(doc["scaler"]["hi"]))
    return model, scaler, doc.get("seed_lineage", {})
