"""One-shot view-set predictor: voxel + view-state features to per-view selection probabilities."""

from __future__ import annotations

import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.special import expit
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from viewplan.geometry import PointCloud

log = logging.getLogger(__name__)

EPS = 1e-7
THRESHOLD = 0.5
MODEL_MAGIC = b"VSPM"
MODEL_VERSION = 1
DEFAULT_HALF_EXTENT = 0.075
WEIGHT_NAMES = ("W_occ", "b_occ", "W_view", "b_view", "W_fc", "b_fc", "W_out", "b_out")


@dataclass(frozen=True, eq=False)
class FeatureTensor:
    occupancy: np.ndarray
    view_state: np.ndarray
    n_clamped: int = 0

    def __post_init__(self):
        occ = np.asarray(self.occupancy, dtype=np.uint8)
        if occ.ndim != 3 or len(set(occ.shape)) != 1:
            raise ValueError(f"occupancy must be a D x D x D grid, got shape {occ.shape}")
        if occ.max(initial=0) > 1:
            raise ValueError("occupancy entries must be 0 or 1")
        object.__setattr__(self, "occupancy", occ)
        object.__setattr__(self, "view_state", np.asarray(self.view_state, dtype=bool).reshape(-1))

    @property
    def D(self) -> int:
        return self.occupancy.shape[0]

    @property
    def n(self) -> int:
        return len(self.view_state)

    def as_row(self) -> np.ndarray:
        """Flattened occupancy followed by the view state, as one float row."""
        return np.concatenate([self.occupancy.reshape(-1), self.view_state]).astype(np.float64)


def featurize(
    refined: PointCloud,
    view_state,
    D: int = 32,
    half_extent: float = DEFAULT_HALF_EXTENT,
    origin=(0.0, 0.0, 0.0),
) -> FeatureTensor:
    """Quantize a cloud into a D^3 occupancy grid over the normalized object volume.

    The volume spans ``[-h, h]`` in x and y and ``[0, 2h]`` in z around
    ``origin``. Points outside it are clamped into the border cells and
    counted; a warning fires when more than 1% of them needed clamping.
    """
    if len(refined) == 0:
        raise ValueError("cannot featurize an empty cloud")
    if D < 1:
        raise ValueError(f"D must be positive, got {D}")
    lo = np.asarray(origin, dtype=np.float64) + np.array([-half_extent, -half_extent, 0.0])
    cell = 2.0 * half_extent / D
    idx = np.floor((refined.points - lo) / cell).astype(np.int64)
    outside = np.any((idx < 0) | (idx >= D), axis=1)
    n_clamped = int(outside.sum())
    if n_clamped > 0.01 * len(refined):
        log.warning("%d of %d points fall outside the feature volume and were clamped", n_clamped, len(refined))
    idx = np.clip(idx, 0, D - 1)
    occ = np.zeros((D, D, D), dtype=np.uint8)
    occ[idx[:, 0], idx[:, 1], idx[:, 2]] = 1
    return FeatureTensor(occ, np.array(view_state, dtype=bool, copy=True), n_clamped)


def sc_loss(pred, gt, lam: float) -> tuple[float, np.ndarray]:
    """Weighted binary cross-entropy over view slots and its gradient w.r.t. ``pred``.

    Positive slots carry weight ``lam`` and negative slots weight 1.
    ``pred`` is clamped to ``[EPS, 1 - EPS]``; the gradient is zero where
    clamping was active.
    """
    pred = np.asarray(pred, dtype=np.float64)
    y = np.asarray(gt, dtype=np.float64)
    if pred.shape != y.shape:
        raise ValueError(f"pred shape {pred.shape} does not match gt shape {y.shape}")
    n = pred.shape[-1]
    p = np.clip(pred, EPS, 1.0 - EPS)
    w = np.where(y > 0.5, lam, 1.0)
    ll = y * np.log(p) + (1.0 - y) * np.log1p(-p)
    loss = -np.sum(w * ll, axis=-1) / n
    grad = -w * (y / p - (1.0 - y) / (1.0 - p)) / n
    grad = np.where((pred < EPS) | (pred > 1.0 - EPS), 0.0, grad)
    return (float(loss) if np.ndim(loss) == 0 else loss), grad


def micro_prf(pred_mask: np.ndarray, gt_mask: np.ndarray) -> tuple[float, float, float]:
    """Precision, recall and F1 pooled over every view slot; empty denominators give 0."""
    pred_mask = np.asarray(pred_mask, dtype=bool)
    gt_mask = np.asarray(gt_mask, dtype=bool)
    tp = int(np.sum(pred_mask & gt_mask))
    fp = int(np.sum(pred_mask & ~gt_mask))
    fn = int(np.sum(~pred_mask & gt_mask))
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return precision, recall, f1


@dataclass
class TrainReport:
    epochs: list = field(default_factory=list)

    @property
    def final(self) -> dict:
        return self.epochs[-1]

    @property
    def best(self) -> dict:
        """Epoch with the highest validation F1; the earliest wins ties."""
        return max(self.epochs, key=lambda e: (e["f1"], -e["epoch"]))

    def write_csv(self, path) -> None:
        cols = ("epoch", "train_loss", "val_loss", "precision", "recall", "f1")
        lines = [",".join(cols)]
        for e in self.epochs:
            lines.append(",".join([str(e["epoch"])] + [repr(float(e[c])) for c in cols[1:]]))
        Path(path).write_text("\n".join(lines) + "\n")


class ViewSetPredictor(BaseEstimator):
    """Multi-label view selector trained with the weighted set-covering loss.

    Rows of ``X`` are ``FeatureTensor.as_row()`` vectors: the flattened
    D^3 occupancy followed by the length-n view state. ``Y`` holds the
    binary label masks. Occupancy and view state are encoded separately,
    summed elementwise, passed through one hidden layer and mapped to n
    logits. Training is plain mini-batch SGD at a fixed learning rate.
    """

    def __init__(
        self,
        lam: float = 1.25,
        hidden: int = 64,
        epochs: int = 100,
        lr: float = 0.05,
        batch_size: int = 16,
        val_fraction: float = 0.2,
        seed: int = 0,
    ):
        self.lam = lam
        self.hidden = hidden
        self.epochs = epochs
        self.lr = lr
        self.batch_size = batch_size
        self.val_fraction = val_fraction
        self.seed = seed

    # network

    def _init_weights(self, d_occ: int, n: int, rng: np.random.Generator) -> dict:
        h = self.hidden

        def he(fan_in, shape):
            return rng.normal(0.0, np.sqrt(2.0 / fan_in), size=shape)

        return {
            "W_occ": he(d_occ, (d_occ, h)) * 0.25,
            "b_occ": np.zeros(h),
            "W_view": he(n, (n, h)),
            "b_view": np.zeros(h),
            "W_fc": he(h, (h, h)),
            "b_fc": np.zeros(h),
            "W_out": rng.normal(0.0, np.sqrt(1.0 / h), size=(h, n)),
            "b_out": np.zeros(n),
        }

    @staticmethod
    def _forward(w: dict, occ: np.ndarray, vs: np.ndarray):
        a1 = occ @ w["W_occ"] + w["b_occ"]
        a2 = vs @ w["W_view"] + w["b_view"]
        s = np.maximum(a1, 0.0) + np.maximum(a2, 0.0)
        a3 = s @ w["W_fc"] + w["b_fc"]
        h3 = np.maximum(a3, 0.0)
        logits = h3 @ w["W_out"] + w["b_out"]
        return logits, (a1, a2, s, a3, h3)

    @staticmethod
    def _backward(w: dict, occ, vs, cache, dlogits) -> dict:
        a1, a2, s, a3, h3 = cache
        g = {"W_out": h3.T @ dlogits, "b_out": dlogits.sum(axis=0)}
        dh3 = dlogits @ w["W_out"].T
        da3 = dh3 * (a3 > 0)
        g["W_fc"] = s.T @ da3
        g["b_fc"] = da3.sum(axis=0)
        ds = da3 @ w["W_fc"].T
        da1 = ds * (a1 > 0)
        da2 = ds * (a2 > 0)
        g["W_occ"] = occ.T @ da1
        g["b_occ"] = da1.sum(axis=0)
        g["W_view"] = vs.T @ da2
        g["b_view"] = da2.sum(axis=0)
        return g

    def _split_x(self, X: np.ndarray):
        d_occ = self.D_**3
        if X.shape[1] != d_occ + self.n_views_:
            raise ValueError(
                f"feature width {X.shape[1]} does not match the model (D={self.D_}, n={self.n_views_})"
            )
        return X[:, :d_occ], X[:, d_occ:]

    def _mean_loss(self, X: np.ndarray, Y: np.ndarray) -> float:
        loss, _ = sc_loss(self._proba(X), Y, self.lam)
        return float(np.mean(loss))

    def _proba(self, X: np.ndarray) -> np.ndarray:
        occ, vs = self._split_x(X)
        logits, _ = self._forward(self.weights_, occ, vs)
        return expit(logits)

    # public API

    def fit(self, X, Y):
        X = check_array(X, dtype=np.float64)
        Y = check_array(Y, dtype=np.float64)
        if len(X) != len(Y):
            raise ValueError(f"X has {len(X)} rows but Y has {len(Y)}")
        n = Y.shape[1]
        d_occ = X.shape[1] - n
        D = int(round(d_occ ** (1.0 / 3.0)))
        if d_occ < 1 or D**3 != d_occ:
            raise ValueError(f"feature width {X.shape[1]} minus n={n} is not a cube")
        self.D_, self.n_views_ = D, n
        rng = np.random.default_rng(self.seed)
        order = rng.permutation(len(X))
        n_val = int(round(self.val_fraction * len(X)))
        if n_val == 0 or n_val == len(X):
            train_idx = val_idx = np.sort(order)
        else:
            train_idx, val_idx = np.sort(order[n_val:]), np.sort(order[:n_val])
        self.train_index_, self.val_index_ = train_idx, val_idx
        w = self._init_weights(d_occ, n, rng)
        self.weights_ = w
        report = TrainReport()
        for epoch in range(1, self.epochs + 1):
            perm = train_idx[rng.permutation(len(train_idx))]
            for start in range(0, len(perm), self.batch_size):
                b = perm[start : start + self.batch_size]
                occ, vs = self._split_x(X[b])
                y = Y[b]
                logits, cache = self._forward(w, occ, vs)
                p = expit(logits)
                # d(loss)/d(logit) of the weighted cross-entropy, averaged over the batch
                wt = np.where(y > 0.5, self.lam, 1.0)
                dlogits = wt * (p - y) / (n * len(b))
                grads = self._backward(w, occ, vs, cache, dlogits)
                for k in WEIGHT_NAMES:
                    w[k] -= self.lr * grads[k]
            p_val = self._proba(X[val_idx])
            prec, rec, f1 = micro_prf(p_val > THRESHOLD, Y[val_idx] > 0.5)
            report.epochs.append(
                {
                    "epoch": epoch,
                    "train_loss": self._mean_loss(X[train_idx], Y[train_idx]),
                    "val_loss": float(np.mean(sc_loss(p_val, Y[val_idx], self.lam)[0])),
                    "precision": prec,
                    "recall": rec,
                    "f1": f1,
                }
            )
        self.report_ = report
        return self

    def predict_proba(self, X) -> np.ndarray:
        check_is_fitted(self, "weights_")
        return self._proba(check_array(X, dtype=np.float64))

    def predict(self, X) -> np.ndarray:
        """Boolean view masks: a view is selected when its probability is strictly above 0.5."""
        return self.predict_proba(X) > THRESHOLD

    def score(self, X, Y) -> float:
        """Micro-averaged F1."""
        return micro_prf(self.predict(X), np.asarray(Y) > 0.5)[2]

    @classmethod
    def from_weights(cls, D: int, n: int, weights: dict, **params) -> "ViewSetPredictor":
        model = cls(**params)
        model.D_, model.n_views_ = D, n
        shapes = _weight_shapes(D, n, model.hidden)
        model.weights_ = {}
        for k in WEIGHT_NAMES:
            arr = np.asarray(weights[k], dtype=np.float64)
            if arr.shape != shapes[k]:
                raise ValueError(f"{k} has shape {arr.shape}, expected {shapes[k]}")
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{k} has non-finite entries")
            model.weights_[k] = arr.copy()
        return model

    # persistence

    def save(self, path) -> None:
        check_is_fitted(self, "weights_")
        head = MODEL_MAGIC + struct.pack(
            "<IIIIdq", MODEL_VERSION, self.D_, self.n_views_, self.hidden, float(self.lam), int(self.seed)
        )
        body = b"".join(np.ascontiguousarray(self.weights_[k], dtype="<f8").tobytes() for k in WEIGHT_NAMES)
        Path(path).write_bytes(head + body)

    @classmethod
    def load(cls, path) -> "ViewSetPredictor":
        data = Path(path).read_bytes()
        if data[:4] != MODEL_MAGIC:
            raise ValueError(f"{path}: not a view-set predictor file")
        fmt = "<IIIIdq"
        size = struct.calcsize(fmt)
        if len(data) < 4 + size:
            raise ValueError(f"{path}: truncated header")
        version, D, n, hidden, lam, seed = struct.unpack(fmt, data[4 : 4 + size])
        if version != MODEL_VERSION:
            raise ValueError(f"{path}: unsupported model version {version}")
        shapes = _weight_shapes(D, n, hidden)
        offset = 4 + size
        weights = {}
        for k in WEIGHT_NAMES:
            count = int(np.prod(shapes[k]))
            if offset + 8 * count > len(data):
                raise ValueError(f"{path}: truncated weights")
            weights[k] = np.frombuffer(data, dtype="<f8", count=count, offset=offset).reshape(shapes[k])
            offset += 8 * count
        if offset != len(data):
            raise ValueError(f"{path}: {len(data) - offset} trailing bytes")
        return cls.from_weights(D, n, weights, lam=lam, hidden=hidden, seed=seed)


def _weight_shapes(D: int, n: int, h: int) -> dict:
    d = D**3
    return {
        "W_occ": (d, h),
        "b_occ": (h,),
        "W_view": (n, h),
        "b_view": (h,),
        "W_fc": (h, h),
        "b_fc": (h,),
        "W_out": (h, n),
        "b_out": (n,),
    }


def stack_features(features: Sequence[FeatureTensor]) -> np.ndarray:
    if not features:
        raise ValueError("no features given")
    return np.vstack([f.as_row() for f in features])


def predict(model: ViewSetPredictor, feat: FeatureTensor) -> tuple[np.ndarray, np.ndarray]:
    """Selected-view mask and per-view probabilities for one feature tensor."""
    check_is_fitted(model, "weights_")
    if feat.D != model.D_ or feat.n != model.n_views_:
        raise ValueError(f"feature dims (D={feat.D}, n={feat.n}) do not match model (D={model.D_}, n={model.n_views_})")
    proba = model.predict_proba(feat.as_row()[None, :])[0]
    return proba > THRESHOLD, proba


def train(
    dataset: Sequence[tuple[FeatureTensor, np.ndarray]],
    lam: float = 1.25,
    epochs: int = 100,
    lr: float = 0.05,
    seed: int = 0,
    **params,
) -> tuple[ViewSetPredictor, TrainReport]:
    if not dataset:
        raise ValueError("training needs at least one sample")
    X = stack_features([f for f, _ in dataset])
    Y = np.vstack([np.asarray(y, dtype=np.float64) for _, y in dataset])
    model = ViewSetPredictor(lam=lam, epochs=epochs, lr=lr, seed=seed, **params).fit(X, Y)
    return model, model.report_
