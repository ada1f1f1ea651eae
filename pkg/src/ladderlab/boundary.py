"""Linear SVM with a learnable attention layer over latent features.

The attention layer is a bias-free single-channel 1-D convolution over the
latent vector, zero-initialized so attention starts uniform:

    alpha = tanh(conv(z));  beta = softmax(alpha);  z_att = beta * z

The SVM scores g(z) = w . (beta(z) * z) + b and is trained jointly with the
attention kernel by subgradient SGD on hinge loss plus an L2 penalty on w.
The unit normal d = w / ||w|| guides latent perturbations.
"""

from dataclasses import dataclass, field

import numpy as np

from . import ops, rng
from .checkpoint import load_entries, save_entries
from .errors import CollapseError, ContractError, DegeneracyError, DimensionError
from .optim import SgdConfig, new_velocity, sgd_step
from .tensor import Tape, Tensor, backward


class AttentionLayer:
    """Length-preserving conv over the latent positions."""

    def __init__(self, kernel_size=3):
        if kernel_size % 2 != 1:
            raise ContractError(f"attention kernel size must be odd, got {kernel_size}")
        self.kernel = Tensor(np.zeros(kernel_size, dtype=np.float32), requires_grad=True)

    def forward(self, z: Tensor) -> Tensor:
        alpha = ops.tanh(ops.conv1d_same(z, self.kernel))
        return ops.softmax(alpha, axis=1)


@dataclass(frozen=True)
class SvmConfig:
    sgd: SgdConfig = field(
        default_factory=lambda: SgdConfig(learning_rate=0.01, batch_size=64, epochs=200)
    )
    lam: float = 1e-3
    kernel_size: int = 3
    budget: int = 400  # total latents used for fitting, split per class


class AttentionSvm:
    def __init__(self, attention: AttentionLayer, w: np.ndarray, b: float, class_pair):
        self.attention = attention
        self.w = np.ascontiguousarray(w, dtype=np.float32)
        self.b = np.float32(b)
        self.class_pair = tuple(class_pair)
        norm = float(np.linalg.norm(self.w))
        if norm < 1e-8:
            raise CollapseError(f"svm weight norm {norm:.3e} below collapse threshold")
        self.d = (self.w / norm).astype(np.float32)

    @property
    def latent_dim(self):
        return self.w.shape[0]

    def beta(self, z_np):
        """Attention weights for latents (N, F) or a single (F,) vector."""
        z_np = np.asarray(z_np, dtype=np.float32)
        squeeze = z_np.ndim == 1
        if squeeze:
            z_np = z_np[None, :]
        if z_np.shape[1] != self.latent_dim:
            raise DimensionError(f"latent length {z_np.shape[1]}, svm has {self.latent_dim}")
        out = self.attention.forward(Tensor(z_np)).data
        return out[0] if squeeze else out

    def margin(self, z_np):
        """g = w.(beta(z)*z) + b; sign(g) picks the class of class_pair."""
        z_np = np.asarray(z_np, dtype=np.float32)
        squeeze = z_np.ndim == 1
        if squeeze:
            z_np = z_np[None, :]
        beta = self.beta(z_np)
        g = (beta * z_np) @ self.w + self.b
        return float(g[0]) if squeeze else g

    def label_sign(self, class_id):
        if class_id == self.class_pair[0]:
            return -1.0
        if class_id == self.class_pair[1]:
            return +1.0
        raise ContractError(f"class {class_id} not in svm pair {self.class_pair}")

    def oriented_for_target(self, target_class) -> "AttentionSvm":
        """View of this SVM whose positive side is the given target class."""
        if target_class == self.class_pair[1]:
            return self
        if target_class != self.class_pair[0]:
            raise ContractError(f"class {target_class} not in svm pair {self.class_pair}")
        flipped = AttentionSvm(self.attention, -self.w, -float(self.b), self.class_pair[::-1])
        return flipped

    def save(self, path):
        save_entries(
            path,
            {
                "attention.kernel": self.attention.kernel.data,
                "w": self.w,
                "b": np.array([self.b], dtype=np.float32),
                "class_pair": np.array(self.class_pair, dtype=np.float32),
            },
        )

    @classmethod
    def load(cls, path) -> "AttentionSvm":
        entries = load_entries(path)
        att = AttentionLayer(kernel_size=len(entries["attention.kernel"]))
        att.kernel.data = entries["attention.kernel"].copy()
        pair = tuple(int(v) for v in entries["class_pair"])
        return cls(att, entries["w"], float(entries["b"][0]), pair)


def attention_forward(attention: AttentionLayer, z_np):
    """Attention weights beta for latents; rows sum to 1 and stay positive."""
    z_np = np.asarray(z_np, dtype=np.float32)
    squeeze = z_np.ndim == 1
    if squeeze:
        z_np = z_np[None, :]
    beta = attention.forward(Tensor(z_np)).data
    return beta[0] if squeeze else beta


def train_attention_svm(latents, labels, cfg: SvmConfig, seed, class_pair=(0, 1)) -> AttentionSvm:
    """Joint subgradient SGD over (attention kernel, w, b) on hinge loss.

    `labels` are +-1; the +1 class is class_pair[1]. Weights and bias start
    at zero, which makes training exactly antisymmetric under a label flip.
    """
    Z = np.ascontiguousarray(latents, dtype=np.float32)
    y = np.asarray(labels, dtype=np.float32)
    if Z.ndim != 2 or y.shape != (Z.shape[0],):
        raise DimensionError(f"latents {Z.shape}, labels {y.shape}")
    if not (np.any(y > 0) and np.any(y < 0)):
        raise DegeneracyError("svm training needs both classes present")

    n, F = Z.shape
    attention = AttentionLayer(cfg.kernel_size)
    w = Tensor(np.zeros((F, 1), dtype=np.float32), requires_grad=True)
    b = Tensor(np.zeros(1, dtype=np.float32), requires_grad=True)
    params = [attention.kernel, w, b]
    velocity = new_velocity(params)
    stream = rng.named_stream(seed, "train.svm")

    for _ in range(cfg.sgd.epochs):
        perm = stream.permutation(n)
        for start in range(0, n, cfg.sgd.batch_size):
            idx = perm[start : start + cfg.sgd.batch_size]
            with Tape() as tape:
                tape.watch(*params)
                z_t = Tensor(Z[idx])
                beta = attention.forward(z_t)
                margins = ops.reshape(ops.add(ops.matmul(ops.mul(beta, z_t), w), b), (len(idx),))
                loss = ops.add(ops.hinge(margins, y[idx]), ops.scale(ops.l2(w), cfg.lam))
            backward(tape, loss)
            sgd_step(params, [p.grad for p in params], cfg.sgd, velocity)

    return AttentionSvm(attention, w.data.reshape(-1), float(b.data[0]), class_pair)


def svm_margin(svm: AttentionSvm, z_np):
    return svm.margin(z_np)


def fit_pair_svm(classifier, ds, class_pair, cfg: SvmConfig, seed) -> AttentionSvm:
    """Fit an SVM on the latents of two classes, cfg.budget latents total."""
    from .data import per_class_subset

    a, bcls = class_pair
    if a == bcls:
        raise ContractError(f"class pair must be distinct, got {class_pair}")
    sub = ds.restrict_classes(class_pair)
    per_class = cfg.budget // 2
    counts = {c: int((sub.y == c).sum()) for c in class_pair}
    per_class = min(per_class, min(counts.values()))
    if per_class < 1:
        raise DegeneracyError(f"no samples for pair {class_pair}")
    pick = []
    stream = rng.named_stream(seed, f"svm.pick.{a}.{bcls}")
    for c in class_pair:
        pool = np.nonzero(sub.y == c)[0]
        pick.append(np.sort(stream.choice(pool, size=per_class, replace=False)))
    sub = sub.select(np.concatenate(pick))
    latents = classifier.latent(sub.x)
    y = np.where(sub.y == bcls, 1.0, -1.0).astype(np.float32)
    return train_attention_svm(latents, y, cfg, seed, class_pair=(a, bcls))
