"""Classifier with exposed latent features, and the latent-to-input generator.

The classifier's latent vector z is exactly the input to its final linear
layer; the generator maps z back to the input space through an upsampling
decoder that ends in a sigmoid, so outputs stay in [0,1].
"""

from collections import OrderedDict

import numpy as np

from . import ops, rng
from .checkpoint import load_entries, save_entries
from .data import Dataset
from .errors import ContractError, DimensionError, NumericError
from .optim import SgdConfig, new_velocity, sgd_step
from .tensor import Tape, Tensor, backward


def _glorot(stream, shape, fan_in, fan_out):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return stream.uniform(-limit, limit, size=shape).astype(np.float32)


class Linear:
    def __init__(self, n_in, n_out, stream):
        self.w = Tensor(_glorot(stream, (n_in, n_out), n_in, n_out), requires_grad=True)
        self.b = Tensor(np.zeros(n_out, dtype=np.float32), requires_grad=True)

    def __call__(self, t):
        return ops.add(ops.matmul(t, self.w), self.b)

    def params(self):
        return [self.w, self.b]


class Conv:
    def __init__(self, c_in, c_out, k, stream, stride=1, padding=0):
        fan_in, fan_out = c_in * k * k, c_out * k * k
        self.w = Tensor(_glorot(stream, (c_out, c_in, k, k), fan_in, fan_out), requires_grad=True)
        self.b = Tensor(np.zeros(c_out, dtype=np.float32), requires_grad=True)
        self.stride, self.padding = stride, padding

    def __call__(self, t):
        return ops.add(ops.conv2d(t, self.w, stride=self.stride, padding=self.padding), self.b)

    def params(self):
        return [self.w, self.b]


class ConvTranspose:
    def __init__(self, c_in, c_out, k, stream, stride=1, padding=0):
        fan_in, fan_out = c_in * k * k, c_out * k * k
        self.w = Tensor(_glorot(stream, (c_in, c_out, k, k), fan_in, fan_out), requires_grad=True)
        self.b = Tensor(np.zeros(c_out, dtype=np.float32), requires_grad=True)
        self.stride, self.padding = stride, padding

    def __call__(self, t):
        return ops.add(
            ops.conv_transpose2d(t, self.w, stride=self.stride, padding=self.padding), self.b
        )

    def params(self):
        return [self.w, self.b]


class Relu:
    def __call__(self, t):
        return ops.relu(t)

    def params(self):
        return []


class Sigmoid:
    def __call__(self, t):
        return ops.sigmoid(t)

    def params(self):
        return []


class MaxPool:
    def __init__(self, k=2):
        self.k = k

    def __call__(self, t):
        return ops.maxpool2d(t, self.k)

    def params(self):
        return []


class Reshape:
    """Reshape per sample; the leading batch dimension is preserved."""

    def __init__(self, shape):
        self.shape = tuple(shape)

    def __call__(self, t):
        return ops.reshape(t, (t.shape[0],) + self.shape)

    def params(self):
        return []


class Flatten:
    def __call__(self, t):
        return ops.reshape(t, (t.shape[0], int(np.prod(t.shape[1:]))))

    def params(self):
        return []


def _stack_params(layers):
    out = []
    for layer in layers:
        out.extend(layer.params())
    return out


def _stack_entries(layers, prefix):
    entries = OrderedDict()
    for i, layer in enumerate(layers):
        for j, p in enumerate(layer.params()):
            entries[f"{prefix}.{i}.{j}"] = p.data
    return entries


def _load_stack(layers, prefix, entries):
    for i, layer in enumerate(layers):
        for j, p in enumerate(layer.params()):
            arr = entries[f"{prefix}.{i}.{j}"]
            if arr.shape != p.data.shape:
                raise DimensionError(
                    f"checkpoint entry {prefix}.{i}.{j}: {arr.shape} vs {p.data.shape}"
                )
            p.data = np.ascontiguousarray(arr, dtype=np.float32)


class Classifier:
    """Feature stack -> latent z -> final linear head -> logits."""

    def __init__(self, features, head, input_shape, class_count, profile):
        self.features = features
        self.head = head
        self.input_shape = tuple(input_shape)
        self.class_count = class_count
        self.profile = profile
        self.latent_dim = head.w.shape[0]

    def forward(self, x: Tensor):
        if tuple(x.shape[1:]) != self.input_shape:
            raise DimensionError(f"classifier expects {self.input_shape}, got {x.shape[1:]}")
        z = x
        for layer in self.features:
            z = layer(z)
        return self.head(z), z

    def params(self):
        return _stack_params(self.features) + self.head.params()

    def logits_latents(self, x_np):
        logits, z = self.forward(Tensor(x_np))
        return logits.data, z.data

    def predict(self, x_np):
        logits, _ = self.logits_latents(x_np)
        return logits.argmax(axis=1)

    def latent(self, x_np):
        return self.logits_latents(x_np)[1]

    def snapshot(self):
        return [p.data.copy() for p in self.params()]

    def state_entries(self):
        entries = _stack_entries(self.features, "features")
        entries.update(_stack_entries([self.head], "head"))
        return entries

    def save(self, path):
        save_entries(path, self.state_entries())

    def load(self, path):
        entries = load_entries(path)
        _load_stack(self.features, "features", entries)
        _load_stack([self.head], "head", entries)


class Generator:
    """Decoder from latent vectors to the classifier's input space."""

    def __init__(self, layers, latent_dim, output_shape, profile, p=2):
        if p not in (1, 2):
            raise ContractError(f"norm exponent p must be 1 or 2, got {p}")
        self.layers = layers
        self.latent_dim = latent_dim
        self.output_shape = tuple(output_shape)
        self.profile = profile
        self.p = p

    def forward(self, z: Tensor):
        if z.data.ndim != 2 or z.shape[1] != self.latent_dim:
            raise DimensionError(f"generator expects (N, {self.latent_dim}), got {z.shape}")
        t = z
        for layer in self.layers:
            t = layer(t)
        return t

    def params(self):
        return _stack_params(self.layers)

    def generate(self, z_np):
        z_np = np.asarray(z_np, dtype=np.float32)
        squeeze = z_np.ndim == 1
        if squeeze:
            z_np = z_np[None, :]
        out = self.forward(Tensor(z_np)).data
        return out[0] if squeeze else out

    def state_entries(self):
        return _stack_entries(self.layers, "layers")

    def save(self, path):
        save_entries(path, self.state_entries())

    def load(self, path):
        _load_stack(self.layers, "layers", load_entries(path))


def build_classifier(profile, input_shape, class_count, seed, latent_dim=None, init_tag="classifier"):
    input_shape = tuple(input_shape)
    s = lambda i: rng.named_stream(seed, f"init.{init_tag}.{i}")
    if profile == "mlp":
        (dim,) = input_shape
        F = latent_dim or 8
        features = [Linear(dim, F, s(0))]
        head = Linear(F, class_count, s(1))
    elif profile == "desk_cnn":
        c, h, w = input_shape
        F = latent_dim or 32
        features = [
            Conv(c, 8, 3, s(0), padding=1), Relu(), MaxPool(2),
            Conv(8, 16, 3, s(1), padding=1), Relu(), MaxPool(2),
            Flatten(),
            Linear(16 * (h // 4) * (w // 4), F, s(2)),
        ]
        head = Linear(F, class_count, s(3))
    elif profile == "lenet500":
        c, h, w = input_shape
        F = latent_dim or 500
        features = [
            Conv(c, 8, 3, s(0), padding=1), Relu(), MaxPool(2),
            Conv(8, 16, 3, s(1), padding=1), Relu(), MaxPool(2),
            Flatten(),
            Linear(16 * (h // 4) * (w // 4), F, s(2)),
        ]
        head = Linear(F, class_count, s(3))
    else:
        raise ContractError(f"unknown classifier profile {profile!r}")
    return Classifier(features, head, input_shape, class_count, profile)


def build_generator(profile, latent_dim, output_shape, seed, p=2):
    output_shape = tuple(output_shape)
    s = lambda i: rng.named_stream(seed, f"init.generator.{i}")
    if profile == "mlp":
        (dim,) = output_shape
        layers = [Linear(latent_dim, 64, s(0)), Relu(), Linear(64, dim, s(1)), Sigmoid()]
    elif profile == "deconv8":
        c, h, w = output_shape
        if (h, w) != (8, 8):
            raise ContractError(f"deconv8 emits 8x8 images, asked for {h}x{w}")
        layers = [
            Linear(latent_dim, 64 * 2 * 2, s(0)), Relu(), Reshape((64, 2, 2)),
            ConvTranspose(64, 32, 2, s(1), stride=2), Relu(),
            ConvTranspose(32, 16, 2, s(2), stride=2), Relu(),
            Conv(16, c, 1, s(3)), Sigmoid(),
        ]
    elif profile == "deconv28":
        c, h, w = output_shape
        if (h, w) != (28, 28):
            raise ContractError(f"deconv28 emits 28x28 images, asked for {h}x{w}")
        layers = [
            Linear(latent_dim, 32 * 7 * 7, s(0)), Relu(), Reshape((32, 7, 7)),
            ConvTranspose(32, 16, 2, s(1), stride=2), Relu(),
            ConvTranspose(16, 8, 2, s(2), stride=2), Relu(),
            Conv(8, c, 1, s(3)), Sigmoid(),
        ]
    else:
        raise ContractError(f"unknown generator profile {profile!r}")
    return Generator(layers, latent_dim, output_shape, profile, p=p)


def default_classifier_profile(input_shape):
    if len(input_shape) == 1:
        return "mlp"
    if input_shape[-2:] == (8, 8):
        return "desk_cnn"
    return "lenet500"


def default_generator_profile(input_shape):
    if len(input_shape) == 1:
        return "mlp"
    if input_shape[-2:] == (8, 8):
        return "deconv8"
    return "deconv28"


def epoch_batches(stream, n, batch_size):
    perm = stream.permutation(n)
    for start in range(0, n, batch_size):
        yield perm[start : start + batch_size]


def train_classifier(model: Classifier, ds: Dataset, cfg: SgdConfig, seed):
    """Minibatch cross-entropy SGD; returns per-epoch mean loss history."""
    stream = rng.named_stream(seed, "train.classifier")
    params = model.params()
    velocity = new_velocity(params)
    history = []
    for epoch in range(cfg.epochs):
        total, batches = 0.0, 0
        for batch in epoch_batches(stream, len(ds), cfg.batch_size):
            try:
                with Tape() as tape:
                    tape.watch(*params)
                    logits, _ = model.forward(Tensor(ds.x[batch]))
                    loss = ops.cross_entropy_logits(logits, ds.y[batch])
                backward(tape, loss)
            except NumericError as exc:
                raise NumericError(f"classifier training diverged at epoch {epoch}: {exc}")
            sgd_step(params, [p.grad for p in params], cfg, velocity)
            total += loss.item()
            batches += 1
        history.append(total / batches)
    return history


def reconstruction_loss(gen: Generator, x_hat: Tensor, x_ref: Tensor):
    """Per-pixel L_p reconstruction loss (p from the generator)."""
    if gen.p == 2:
        return ops.mse(x_hat, x_ref)
    return ops.scale(ops.l1(ops.sub(x_hat, x_ref)), 1.0 / x_ref.size)


def train_generator(gen: Generator, ds: Dataset, classifier: Classifier, cfg: SgdConfig, seed):
    """Fit the decoder on (latent, input) pairs; classifier stays frozen.

    Latents are extracted once up front with no tape active, so no gradient
    can reach the classifier.
    """
    if gen.latent_dim != classifier.latent_dim:
        raise DimensionError(
            f"generator latent {gen.latent_dim} vs classifier latent {classifier.latent_dim}"
        )
    latents = classifier.latent(ds.x)
    stream = rng.named_stream(seed, "train.generator")
    params = gen.params()
    velocity = new_velocity(params)
    history = []
    for epoch in range(cfg.epochs):
        total, batches = 0.0, 0
        for batch in epoch_batches(stream, len(ds), cfg.batch_size):
            try:
                with Tape() as tape:
                    tape.watch(*params)
                    x_hat = gen.forward(Tensor(latents[batch]))
                    loss = reconstruction_loss(gen, x_hat, Tensor(ds.x[batch]))
                backward(tape, loss)
            except NumericError as exc:
                raise NumericError(f"generator training diverged at epoch {epoch}: {exc}")
            sgd_step(params, [p.grad for p in params], cfg, velocity)
            total += loss.item()
            batches += 1
        history.append(total / batches)
    return history


def reconstruction_mse(gen: Generator, classifier: Classifier, ds: Dataset):
    """Mean per-pixel squared error of G(phi(x)) against x."""
    x_hat = gen.generate(classifier.latent(ds.x))
    return float(np.mean((x_hat - ds.x) ** 2))
