"""
Virtual Sensor Regressors
=========================
Map representative-sensor readings (inputs) to virtual-sensor readings
(outputs). Three model families, all fitted in numpy:

1. LBFR - linear basis function regression on [1 | x | one radial feature]
2. MLP  - rectifier network trained by mini-batch Adam on mean squared error
3. SVR  - linear epsilon-insensitive SVR per output, primal subgradient descent

Fitted models are immutable. `predict` dispatches on the model type and
`VirtualSensorModel` bundles a fit with the sensor names and normalization
it was trained under, serialized as a self-describing JSON container.
"""

import json
import logging
import time
from dataclasses import dataclass, field
from functools import singledispatch
from typing import Any, Dict, List, Literal, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, Field
from scipy.sparse.linalg import LinearOperator, cg

from dataset import NormParams, SensorDataset, apply_norm
from errors import RegressionError

logger = logging.getLogger("Regress")

Seed = Union[int, np.random.Generator, None]
ModelKind = Literal["lbfr", "mlp", "svr"]
MODEL_KINDS: Tuple[str, ...] = ("lbfr", "mlp", "svr")

# ============================================================================
# HYPERPARAMETERS
# ============================================================================

class LbfrParams(BaseModel):
    ridge: float = Field(default=1e-8, ge=0.0, description="Tikhonov weight lambda")
    solver: Literal["closed", "gradient"] = Field(default="closed")
    max_iter: int = Field(default=1000, ge=1, description="conjugate-gradient iteration cap")
    tol: float = Field(default=1e-14, gt=0.0, description="conjugate-gradient relative residual")


class AdamParams(BaseModel):
    learning_rate: float = Field(default=0.001, gt=0.0)
    beta1: float = Field(default=0.9, gt=0.0, lt=1.0)
    beta2: float = Field(default=0.999, gt=0.0, lt=1.0)
    eps: float = Field(default=1e-8, gt=0.0)
    batch_size: int = Field(default=256, ge=1)
    epochs: int = Field(default=100, ge=1)


class SvrParams(BaseModel):
    c: float = Field(default=1.0, gt=0.0, description="hinge penalty C")
    eps: float = Field(default=0.1, ge=0.0, description="tube half-width")
    steps: int = Field(default=5000, ge=1)
    learning_rate: float = Field(default=0.1, gt=0.0)
    decay: float = Field(default=1e-2, ge=0.0)
    batch_size: int = Field(default=32, ge=1)
    check_every: int = Field(default=50, ge=1, description="full-objective check period")


class RegressorSettings(BaseModel):
    """Everything `fit_regressor` needs for any kind."""

    lbfr: LbfrParams = Field(default_factory=LbfrParams)
    adam: AdamParams = Field(default_factory=AdamParams)
    hidden_layers: int = Field(default=10, ge=1)
    hidden_width: int = Field(default=50, ge=1)
    svr: SvrParams = Field(default_factory=SvrParams)

# ============================================================================
# SHARED CHECKS
# ============================================================================

def _as_matrix(a, name: str) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.ndim == 1:
        a = a[:, None]
    if a.ndim != 2:
        raise RegressionError(f"{name} must be 2-D, got shape {a.shape}")
    if not np.isfinite(a).all():
        raise RegressionError(f"{name} contains non-finite values")
    return a


def _check_xy(X, Y) -> Tuple[np.ndarray, np.ndarray]:
    X = _as_matrix(X, "X")
    Y = _as_matrix(Y, "Y")
    if X.shape[0] != Y.shape[0]:
        raise RegressionError(f"X has {X.shape[0]} rows but Y has {Y.shape[0]}")
    if X.shape[0] < 1:
        raise RegressionError("need at least one sample")
    return X, Y


def _check_inputs(X, n_inputs: int) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[None, :]
    if X.ndim != 2 or X.shape[1] != n_inputs:
        raise RegressionError(f"model expects {n_inputs} input columns, got shape {X.shape}")
    return X


def mse(y_pred, y_true) -> float:
    """Mean over all entries of the squared error."""
    y_pred = np.asarray(y_pred, dtype=float)
    y_true = np.asarray(y_true, dtype=float)
    if y_pred.shape != y_true.shape:
        raise RegressionError(f"shape mismatch: {y_pred.shape} vs {y_true.shape}")
    if y_pred.size == 0:
        raise RegressionError("mse of empty arrays")
    return float(np.mean((y_pred - y_true) ** 2))

# ============================================================================
# LBFR
# ============================================================================

@dataclass(frozen=True)
class LbfrModel:
    weights: np.ndarray  # (M + 2, n_outputs)
    center: np.ndarray
    width: float
    ridge: float

    @property
    def n_inputs(self) -> int:
        return self.center.size

    @property
    def n_outputs(self) -> int:
        return self.weights.shape[1]


def lbfr_features(X: np.ndarray, center: np.ndarray, width: float) -> np.ndarray:
    """Phi = [1 | X | exp(-||x - center||^2 / (2 width^2))]."""
    d2 = np.sum((X - center) ** 2, axis=1)
    radial = np.exp(-d2 / (2.0 * width * width))
    return np.column_stack([np.ones(X.shape[0]), X, radial])


def _ridge_cg(phi: np.ndarray, Y: np.ndarray, p: LbfrParams) -> np.ndarray:
    """Conjugate gradients on (Phi^T Phi + lambda I) W = Phi^T Y, one output at a time."""
    k = phi.shape[1]
    gram = LinearOperator((k, k), matvec=lambda w: phi.T @ (phi @ w) + p.ridge * w, dtype=float)
    rhs = phi.T @ Y
    weights = np.empty((k, Y.shape[1]))
    for j in range(Y.shape[1]):
        w, info = cg(gram, rhs[:, j], rtol=p.tol, atol=0.0, maxiter=p.max_iter)
        if info < 0:
            raise RegressionError(f"conjugate gradients broke down on output {j}")
        if info > 0:
            logger.warning(f"⚠️  CG hit {p.max_iter} iterations on output {j}")
        weights[:, j] = w
    return weights


def lbfr_fit(X, Y, ridge: float = 1e-8, solver: str = "closed", params: Optional[LbfrParams] = None) -> LbfrModel:
    """
    Ridge-regularized least squares on the M + 2 basis features.

    The radial feature is centred on the input mean with width equal to the
    mean distance of the rows to it (1 when every row sits on the centre).
    """
    X, Y = _check_xy(X, Y)
    p = params or LbfrParams(ridge=ridge, solver=solver)
    n, m = X.shape
    if n < m + 2:
        raise RegressionError(f"LBFR needs at least {m + 2} samples for {m} inputs, got {n}")

    center = X.mean(axis=0)
    width = float(np.mean(np.sqrt(np.sum((X - center) ** 2, axis=1))))
    if width == 0.0:
        width = 1.0
    phi = lbfr_features(X, center, width)

    if p.solver == "gradient":
        weights = _ridge_cg(phi, Y, p)
    else:
        # Augmented least squares is the ridge solution without forming Phi^T Phi.
        k = phi.shape[1]
        a = np.vstack([phi, np.sqrt(p.ridge) * np.eye(k)])
        b = np.vstack([Y, np.zeros((k, Y.shape[1]))])
        try:
            weights, *_ = np.linalg.lstsq(a, b, rcond=None)
        except np.linalg.LinAlgError as e:
            raise RegressionError(f"LBFR normal equations could not be solved: {e}") from None

    if not np.isfinite(weights).all():
        raise RegressionError("LBFR produced non-finite weights")
    return LbfrModel(weights=weights, center=center, width=width, ridge=p.ridge)

# ============================================================================
# MLP
# ============================================================================

@dataclass(frozen=True)
class MlpModel:
    weights: Tuple[np.ndarray, ...]
    biases: Tuple[np.ndarray, ...]
    loss_history: Tuple[float, ...] = field(default=())

    @property
    def layer_sizes(self) -> List[int]:
        return [self.weights[0].shape[0]] + [w.shape[1] for w in self.weights]

    @property
    def n_inputs(self) -> int:
        return self.weights[0].shape[0]

    @property
    def n_outputs(self) -> int:
        return self.weights[-1].shape[1]


def mlp_init(layer_sizes: Sequence[int], seed: Seed = None) -> MlpModel:
    """Xavier-normal weights (std sqrt(2 / (fan_in + fan_out))), zero biases."""
    if len(layer_sizes) < 2 or min(layer_sizes) < 1:
        raise RegressionError(f"invalid layer sizes {list(layer_sizes)}")
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(layer_sizes[:-1], layer_sizes[1:]):
        std = np.sqrt(2.0 / (fan_in + fan_out))
        weights.append(rng.normal(0.0, std, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return MlpModel(weights=tuple(weights), biases=tuple(biases))


def _forward(weights: Sequence[np.ndarray], biases: Sequence[np.ndarray], X: np.ndarray) -> List[np.ndarray]:
    """Activations of every layer, input first; rectifier hidden layers, identity output."""
    activations = [X]
    h = X
    last = len(weights) - 1
    for i, (w, b) in enumerate(zip(weights, biases)):
        z = h @ w + b
        h = z if i == last else np.maximum(z, 0.0)
        activations.append(h)
    return activations


def mlp_loss_and_gradients(
    weights: Sequence[np.ndarray],
    biases: Sequence[np.ndarray],
    X: np.ndarray,
    Y: np.ndarray,
) -> Tuple[float, List[np.ndarray], List[np.ndarray]]:
    """Mean squared error over all outputs and its backpropagated gradients."""
    activations = _forward(weights, biases, X)
    out = activations[-1]
    diff = out - Y
    loss = float(np.mean(diff * diff))

    delta = 2.0 * diff / diff.size
    grad_w: List[np.ndarray] = [None] * len(weights)
    grad_b: List[np.ndarray] = [None] * len(weights)
    for i in range(len(weights) - 1, -1, -1):
        grad_w[i] = activations[i].T @ delta
        grad_b[i] = delta.sum(axis=0)
        if i > 0:
            delta = (delta @ weights[i].T) * (activations[i] > 0.0)
    return loss, grad_w, grad_b


def mlp_fit(
    X,
    Y,
    adam: Optional[AdamParams] = None,
    seed: Seed = None,
    hidden_layers: int = 10,
    hidden_width: int = 50,
) -> MlpModel:
    """
    Mini-batch Adam on mean squared error for a fixed number of epochs.

    loss_history[0] is the full-data loss at initialization, then one entry
    per epoch. Deterministic for a given seed.
    """
    X, Y = _check_xy(X, Y)
    adam = adam or AdamParams()
    rng = np.random.default_rng(seed)
    sizes = [X.shape[1]] + [hidden_width] * hidden_layers + [Y.shape[1]]
    init = mlp_init(sizes, rng)
    weights = [w.copy() for w in init.weights]
    biases = [b.copy() for b in init.biases]

    params = weights + biases
    m1 = [np.zeros_like(p) for p in params]
    m2 = [np.zeros_like(p) for p in params]
    n = X.shape[0]
    batch = min(adam.batch_size, n)
    t = 0

    history = [mlp_loss_and_gradients(weights, biases, X, Y)[0]]
    for epoch in range(1, adam.epochs + 1):
        order = rng.permutation(n)
        for start in range(0, n, batch):
            idx = order[start:start + batch]
            _, gw, gb = mlp_loss_and_gradients(weights, biases, X[idx], Y[idx])
            t += 1
            correction1 = 1.0 - adam.beta1 ** t
            correction2 = 1.0 - adam.beta2 ** t
            for k, (p, g) in enumerate(zip(params, gw + gb)):
                m1[k] = adam.beta1 * m1[k] + (1.0 - adam.beta1) * g
                m2[k] = adam.beta2 * m2[k] + (1.0 - adam.beta2) * g * g
                p -= adam.learning_rate * (m1[k] / correction1) / (np.sqrt(m2[k] / correction2) + adam.eps)

        loss = mlp_loss_and_gradients(weights, biases, X, Y)[0]
        if not np.isfinite(loss):
            raise RegressionError(f"MLP training diverged at epoch {epoch} (loss {loss})")
        history.append(loss)
        logger.debug(f"epoch {epoch}: loss={loss:.6g}")

    return MlpModel(weights=tuple(weights), biases=tuple(biases), loss_history=tuple(history))

# ============================================================================
# SVR
# ============================================================================

@dataclass(frozen=True)
class SvrModel:
    w: np.ndarray
    b: float
    c: float = 1.0
    eps: float = 0.1

    @property
    def n_inputs(self) -> int:
        return self.w.size


@dataclass(frozen=True)
class SvrModelSet:
    """One independent SVR per output column."""

    models: Tuple[SvrModel, ...]

    @property
    def n_inputs(self) -> int:
        return self.models[0].n_inputs

    @property
    def n_outputs(self) -> int:
        return len(self.models)


def svr_objective(w: np.ndarray, b: float, X: np.ndarray, y: np.ndarray, c: float, eps: float) -> float:
    """1/2 ||w||^2 + C * sum max(0, |y - w.x - b| - eps)."""
    hinge = np.maximum(np.abs(y - X @ w - b) - eps, 0.0)
    return float(0.5 * np.dot(w, w) + c * hinge.sum())


def svr_fit(
    X,
    y,
    c: float = 1.0,
    eps: float = 0.1,
    steps: int = 5000,
    seed: Seed = None,
    params: Optional[SvrParams] = None,
) -> SvrModel:
    """
    Stochastic subgradient descent on the objective divided by n, step
    learning_rate / (1 + t * decay). Starts at w = 0, b = median(y) and returns
    the best iterate seen on the full objective.
    """
    X, Y = _check_xy(X, y)
    if Y.shape[1] != 1:
        raise RegressionError(f"svr_fit takes one output column, got {Y.shape[1]}")
    y = Y[:, 0]
    p = params or SvrParams(c=c, eps=eps, steps=steps)
    rng = np.random.default_rng(seed)
    n = X.shape[0]
    batch = min(p.batch_size, n)

    w = np.zeros(X.shape[1])
    b = float(np.median(y))
    best_w, best_b = w.copy(), b
    best = svr_objective(w, b, X, y, p.c, p.eps)

    for t in range(p.steps):
        idx = rng.choice(n, size=batch, replace=False) if batch < n else np.arange(n)
        r = y[idx] - X[idx] @ w - b
        active = np.abs(r) > p.eps
        s = np.sign(r) * active
        grad_w = w / n - p.c * (s @ X[idx]) / batch
        grad_b = -p.c * s.sum() / batch
        step = p.learning_rate / (1.0 + t * p.decay)
        w = w - step * grad_w
        b = b - step * grad_b
        if not (np.isfinite(w).all() and np.isfinite(b)):
            raise RegressionError(f"SVR iterate became non-finite at step {t}")
        if (t + 1) % p.check_every == 0 or t + 1 == p.steps:
            value = svr_objective(w, b, X, y, p.c, p.eps)
            if value < best:
                best, best_w, best_b = value, w.copy(), b

    return SvrModel(w=best_w, b=float(best_b), c=p.c, eps=p.eps)


def svr_fit_all(X, Y, params: Optional[SvrParams] = None, seed: Seed = None) -> SvrModelSet:
    """Independent SVR per output; child seeds drawn in output order."""
    X, Y = _check_xy(X, Y)
    p = params or SvrParams()
    rng = np.random.default_rng(seed)
    child_seeds = rng.integers(0, 2**62, size=Y.shape[1])
    models = tuple(svr_fit(X, Y[:, j], params=p, seed=int(child_seeds[j])) for j in range(Y.shape[1]))
    return SvrModelSet(models=models)

# ============================================================================
# PREDICTION
# ============================================================================

@singledispatch
def predict(model, X) -> np.ndarray:
    raise RegressionError(f"no predictor for {type(model).__name__}")


@predict.register
def _(model: LbfrModel, X) -> np.ndarray:
    X = _check_inputs(X, model.n_inputs)
    return lbfr_features(X, model.center, model.width) @ model.weights


@predict.register
def _(model: MlpModel, X) -> np.ndarray:
    X = _check_inputs(X, model.n_inputs)
    return _forward(model.weights, model.biases, X)[-1]


@predict.register
def _(model: SvrModel, X) -> np.ndarray:
    X = _check_inputs(X, model.n_inputs)
    return X @ model.w + model.b


@predict.register
def _(model: SvrModelSet, X) -> np.ndarray:
    X = _check_inputs(X, model.n_inputs)
    w = np.column_stack([m.w for m in model.models])
    return X @ w + np.array([m.b for m in model.models])

# ============================================================================
# SERIALIZATION
# ============================================================================

@singledispatch
def _params_of(model) -> Dict[str, Any]:
    raise RegressionError(f"cannot serialize {type(model).__name__}")


@_params_of.register
def _(model: LbfrModel) -> Dict[str, Any]:
    return {
        "weights": model.weights.tolist(),
        "center": model.center.tolist(),
        "width": model.width,
        "ridge": model.ridge,
    }


@_params_of.register
def _(model: MlpModel) -> Dict[str, Any]:
    return {
        "layer_sizes": model.layer_sizes,
        "weights": [w.tolist() for w in model.weights],
        "biases": [b.tolist() for b in model.biases],
    }


@_params_of.register
def _(model: SvrModelSet) -> Dict[str, Any]:
    return {
        "w": [m.w.tolist() for m in model.models],
        "b": [m.b for m in model.models],
        "c": model.models[0].c,
        "eps": model.models[0].eps,
    }


def _model_from_params(kind: str, params: Dict[str, Any]):
    try:
        if kind == "lbfr":
            return LbfrModel(
                weights=np.asarray(params["weights"], dtype=float),
                center=np.asarray(params["center"], dtype=float),
                width=float(params["width"]),
                ridge=float(params["ridge"]),
            )
        if kind == "mlp":
            return MlpModel(
                weights=tuple(np.asarray(w, dtype=float) for w in params["weights"]),
                biases=tuple(np.asarray(b, dtype=float) for b in params["biases"]),
            )
        if kind == "svr":
            c, eps = float(params["c"]), float(params["eps"])
            return SvrModelSet(models=tuple(
                SvrModel(w=np.asarray(w, dtype=float), b=float(b), c=c, eps=eps)
                for w, b in zip(params["w"], params["b"])
            ))
    except (KeyError, TypeError, ValueError) as e:
        raise RegressionError(f"malformed {kind} model parameters: {e}") from None
    raise RegressionError(f"unknown model kind '{kind}'")


@dataclass(frozen=True)
class VirtualSensorModel:
    """A fitted regressor plus the sensor names and scaling it was trained with."""

    kind: str
    inputs: Tuple[str, ...]
    outputs: Tuple[str, ...]
    model: Any
    norm_params: Optional[NormParams] = None
    fit_seconds: float = 0.0

    def predict(self, X) -> np.ndarray:
        return predict(self.model, X)

    def predict_dataset(self, d: SensorDataset, normalized: bool = True) -> np.ndarray:
        """Predict from the representative columns of d, normalizing raw data first if asked."""
        inputs = d.select(list(self.inputs))
        if not normalized:
            if self.norm_params is None:
                raise RegressionError("model carries no normalization parameters")
            inputs = apply_norm(inputs, self.norm_params)
        return self.predict(inputs.values)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "kind": self.kind,
            "dims": {"n_inputs": len(self.inputs), "n_outputs": len(self.outputs)},
            "inputs": list(self.inputs),
            "outputs": list(self.outputs),
            "fit_seconds": self.fit_seconds,
            "params": _params_of(self.model),
            "norm_params": self.norm_params.to_dict() if self.norm_params else None,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, payload: Dict[str, Any]) -> "VirtualSensorModel":
        try:
            kind = payload["kind"]
            inputs = tuple(payload["inputs"])
            outputs = tuple(payload["outputs"])
            dims = payload["dims"]
            if dims.get("n_inputs") != len(inputs) or dims.get("n_outputs") != len(outputs):
                raise RegressionError("model container dimensions disagree with its sensor lists")
            norm = payload.get("norm_params")
            return cls(
                kind=kind,
                inputs=inputs,
                outputs=outputs,
                model=_model_from_params(kind, payload.get("params", {})),
                norm_params=NormParams.from_dict(norm) if norm else None,
                fit_seconds=float(payload.get("fit_seconds", 0.0)),
            )
        except KeyError as e:
            raise RegressionError(f"model container missing field {e}") from None
        except (TypeError, ValueError, AttributeError) as e:
            raise RegressionError(f"malformed model container: {e}") from None

    @classmethod
    def from_json(cls, text: str) -> "VirtualSensorModel":
        try:
            payload = json.loads(text)
        except json.JSONDecodeError as e:
            raise RegressionError(f"model container is not valid JSON: {e}") from None
        return cls.from_dict(payload)

# ============================================================================
# ENTRY POINT
# ============================================================================

def fit_regressor(kind: str, X, Y, settings: Optional[RegressorSettings] = None, seed: Seed = None):
    """Fit one model of the given kind with its settings block."""
    settings = settings or RegressorSettings()
    if kind == "lbfr":
        return lbfr_fit(X, Y, params=settings.lbfr)
    if kind == "mlp":
        return mlp_fit(
            X, Y, adam=settings.adam, seed=seed,
            hidden_layers=settings.hidden_layers, hidden_width=settings.hidden_width,
        )
    if kind == "svr":
        return svr_fit_all(X, Y, params=settings.svr, seed=seed)
    raise RegressionError(f"unknown regressor kind '{kind}'; expected one of {MODEL_KINDS}")


def train_virtual_sensors(
    kind: str,
    train: SensorDataset,
    representatives: Sequence[str],
    settings: Optional[RegressorSettings] = None,
    seed: Seed = None,
    norm_params: Optional[NormParams] = None,
) -> VirtualSensorModel:
    """Fit `kind` from the representative columns of train to all other columns."""
    inputs = tuple(representatives)
    outputs = tuple(n for n in train.names if n not in set(inputs))
    if not outputs:
        raise RegressionError("every sensor is a representative; nothing to regress")
    X = train.select(list(inputs)).values
    Y = train.select(list(outputs)).values

    started = time.perf_counter()
    model = fit_regressor(kind, X, Y, settings, seed)
    elapsed = time.perf_counter() - started
    logger.info(f"🧠 Trained {kind}: {len(inputs)} -> {len(outputs)} sensors in {elapsed:.2f}s")
    return VirtualSensorModel(
        kind=kind, inputs=inputs, outputs=outputs, model=model, norm_params=norm_params, fit_seconds=elapsed,
    )
