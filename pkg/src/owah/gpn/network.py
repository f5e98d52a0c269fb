"""The goal-prediction network and its hand-rolled training math.

A deliberately small model: per-row bucket embeddings summed into one
vector, one ReLU layer, and an independent softmax head per vocabulary row
over possible goal counts.  Everything is float64 numpy with exact
analytic gradients (verified against finite differences in the tests), so
training runs the same everywhere with no framework dependency.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .encoding import NUM_BUCKETS

EMBED_DIM = 100
HIDDEN_DIM = 128
LEARNING_RATE = 0.0009
BATCH_SIZE = 256

PARAM_NAMES = ("embed", "w1", "b1", "w2", "b2")


class GoalPredictionNet:
    """Maps per-row count-change buckets to per-row goal-count distributions."""

    def __init__(
        self,
        entries: tuple,
        num_buckets: int = NUM_BUCKETS,
        embed_dim: int = EMBED_DIM,
        hidden_dim: int = HIDDEN_DIM,
        seed: int = 0,
    ):
        self.entries = tuple(entries)
        self.p = len(self.entries)
        self.c = num_buckets
        self.d = embed_dim
        self.h = hidden_dim
        rng = np.random.default_rng(seed)
        self.params = {
            "embed": rng.normal(0.0, 0.1, size=(self.p, self.c, self.d)),
            "w1": rng.normal(0.0, np.sqrt(2.0 / self.d), size=(self.h, self.d)),
            "b1": np.zeros(self.h),
            # heads start tiny so every count distribution opens near uniform
            "w2": rng.normal(0.0, 0.01, size=(self.p, self.c, self.h)),
            "b2": np.zeros((self.p, self.c)),
        }
        self._row_offsets = np.arange(self.p) * self.c

    # -- forward -------------------------------------------------------------

    def _gather_matrix(self, buckets: np.ndarray) -> np.ndarray:
        """One-hot selector S of shape (B, p*c): S @ flat_embed sums the
        chosen bucket embedding of every row."""
        B = buckets.shape[0]
        idx = self._row_offsets[None, :] + buckets
        s = np.zeros((B, self.p * self.c))
        s[np.arange(B)[:, None], idx] = 1.0
        return s

    def forward(self, buckets: np.ndarray) -> dict:
        """Probabilities and intermediates for a batch of bucket rows.

        buckets: int array (B, p).  Returns dict with "probs" (B, p, c).
        """
        if buckets.ndim != 2 or buckets.shape[1] != self.p:
            raise ValueError(f"expected (B, {self.p}) buckets, got {buckets.shape}")
        s = self._gather_matrix(buckets)
        x = s @ self.params["embed"].reshape(self.p * self.c, self.d)
        z1 = x @ self.params["w1"].T + self.params["b1"]
        a1 = np.maximum(z1, 0.0)
        w2r = self.params["w2"].reshape(self.p * self.c, self.h)
        logits = (a1 @ w2r.T).reshape(-1, self.p, self.c) + self.params["b2"]
        shifted = logits - logits.max(axis=2, keepdims=True)
        e = np.exp(shifted)
        probs = e / e.sum(axis=2, keepdims=True)
        return {"s": s, "x": x, "z1": z1, "a1": a1, "probs": probs}

    def predict_probs(self, buckets: np.ndarray) -> np.ndarray:
        """Head distributions for a single bucket vector, shape (p, c)."""
        return self.forward(buckets[None, :])["probs"][0]

    # -- loss and exact gradients ---------------------------------------------

    def loss_and_grads(
        self, buckets: np.ndarray, targets: np.ndarray
    ) -> tuple[float, dict[str, np.ndarray]]:
        """Mean-over-batch summed per-row cross entropy, with gradients."""
        cache = self.forward(buckets)
        B = buckets.shape[0]
        probs = cache["probs"]
        rows = np.arange(self.p)
        picked = probs[np.arange(B)[:, None], rows[None, :], targets]
        loss = float(-np.log(np.maximum(picked, 1e-300)).sum(axis=1).mean())

        dlogits = probs.copy()
        dlogits[np.arange(B)[:, None], rows[None, :], targets] -= 1.0
        dlogits /= B

        a1, z1, x, s = cache["a1"], cache["z1"], cache["x"], cache["s"]
        dl_flat = dlogits.reshape(B, self.p * self.c)
        w2r = self.params["w2"].reshape(self.p * self.c, self.h)
        grads = {
            "w2": (dl_flat.T @ a1).reshape(self.p, self.c, self.h),
            "b2": dlogits.sum(axis=0),
        }
        da1 = dl_flat @ w2r
        dz1 = da1 * (z1 > 0.0)
        grads["w1"] = dz1.T @ x
        grads["b1"] = dz1.sum(axis=0)
        dx = dz1 @ self.params["w1"]
        grads["embed"] = (s.T @ dx).reshape(self.p, self.c, self.d)
        return loss, grads

    def loss(self, buckets: np.ndarray, targets: np.ndarray) -> float:
        cache = self.forward(buckets)
        B = buckets.shape[0]
        picked = cache["probs"][
            np.arange(B)[:, None], np.arange(self.p)[None, :], targets
        ]
        return float(-np.log(np.maximum(picked, 1e-300)).sum(axis=1).mean())


@dataclass
class AdamState:
    """Per-parameter first/second moment accumulators."""

    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def step(self, net: GoalPredictionNet, grads: dict, lr: float = LEARNING_RATE) -> None:
        if not self.m:
            for k, p in net.params.items():
                self.m[k] = np.zeros_like(p)
                self.v[k] = np.zeros_like(p)
        self.t += 1
        b1c = 1.0 - self.beta1**self.t
        b2c = 1.0 - self.beta2**self.t
        for k, g in grads.items():
            self.m[k] = self.beta1 * self.m[k] + (1.0 - self.beta1) * g
            self.v[k] = self.beta2 * self.v[k] + (1.0 - self.beta2) * (g * g)
            mhat = self.m[k] / b1c
            vhat = self.v[k] / b2c
            net.params[k] -= lr * mhat / (np.sqrt(vhat) + self.eps)
