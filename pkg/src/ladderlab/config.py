"""Experiment configuration: flat key=value text with section prefixes.

Example::

    data.kind=digits8
    model.epochs=30
    advtrain.alpha_mix=0.5
    seeds.root=42

Seeds must be explicit (there is no wall-clock fallback), and every
referenced path must resolve at load time. The config hash identifies a
canonicalized rendering of the key/value pairs and is stamped into every
artifact manifest; stages refuse to write into a directory whose manifest
carries a different hash.
"""

import hashlib
import os

from . import __version__
from .attacks import AttackConfig
from .errors import ConfigurationError
from .kernels import BACKEND
from .optim import SgdConfig

_PATH_KEYS = ("data.images", "data.labels", "data.test_images", "data.test_labels")

DEFAULTS = {
    "data.kind": "digits8",
    "data.class_count": "3",
    "data.per_class": "120",
    "data.dim": "2",
    "data.separation": "6.0",
    "data.test_fraction": "0.25",
    "data.train_per_class": "50",
    "data.test_per_class": "20",
    "data.downsample": "0",
    "model.profile": "auto",
    "model.latent_dim": "32",
    "model.lr": "0.05",
    "model.momentum": "0.5",
    "model.weight_decay": "0.0",
    "model.batch_size": "32",
    "model.epochs": "30",
    "generator.profile": "auto",
    "generator.p": "2",
    "generator.lr": "0.2",
    "generator.momentum": "0.9",
    "generator.weight_decay": "0.0001",
    "generator.batch_size": "32",
    "generator.epochs": "200",
    "svm.budget": "400",
    "svm.lr": "0.01",
    "svm.momentum": "0.0",
    "svm.weight_decay": "0.0",
    "svm.batch_size": "64",
    "svm.epochs": "200",
    "svm.lam": "0.001",
    "svm.kernel_size": "3",
    "svm.pairs": "0-1",
    "perturb.variant": "normal",
    "perturb.epsilons": "0.1,2.0,5.0,7.0,10.0,15.0,20.0",
    "perturb.noise_scale": "1.0",
    "gen_adv.budget": "700",
    "gen_adv.policy": "all",
    "advtrain.alpha_mix": "0.5",
    "advtrain.lr": "0.05",
    "advtrain.momentum": "0.5",
    "advtrain.weight_decay": "0.0",
    "advtrain.batch_size": "32",
    "advtrain.epochs": "30",
    "advtrain.regularizer": "none",
    "advtrain.trades_lambda": "1.0",
    "advtrain.fine_tune": "0",
    "attack.fgsm.epsilon": "0.3",
    "attack.pgd.epsilon": "0.3",
    "attack.pgd.step": "0.1",
    "attack.pgd.iters": "10",
    "attack.jsma.theta": "1.0",
    "attack.jsma.max_fraction": "0.14",
    "eval.attacks": "fgsm",
    "eval.ladder_budget": "40",
    "sweep.epsilons": "0.1,2.0,5.0,7.0,10.0,15.0,20.0",
    "sweep.per_class": "10",
}


def worker_count(requested=1):
    """Requested worker count capped by the LADDER_THREADS environment var."""
    cap = os.environ.get("LADDER_THREADS")
    if cap is None:
        return max(1, requested)
    try:
        cap = int(cap)
    except ValueError:
        raise ConfigurationError(f"LADDER_THREADS must be an integer, got {cap!r}")
    return max(1, min(requested, cap))


class ExperimentConfig:
    def __init__(self, entries: dict, base_dir="."):
        self.entries = dict(DEFAULTS)
        self.entries.update({k: str(v) for k, v in entries.items()})
        if "seeds.root" not in self.entries:
            raise ConfigurationError("config must set seeds.root explicitly")
        self.base_dir = base_dir
        for key in _PATH_KEYS:
            if key in self.entries:
                path = self.resolve_path(self.entries[key])
                if not os.path.exists(path):
                    raise ConfigurationError(f"{key} does not resolve: {path}")

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        entries = {}
        try:
            with open(path, encoding="utf-8") as f:
                for lineno, line in enumerate(f, 1):
                    line = line.strip()
                    if not line or line.startswith("#"):
                        continue
                    if "=" not in line:
                        raise ConfigurationError(f"{path}:{lineno}: expected key=value")
                    key, value = line.split("=", 1)
                    entries[key.strip()] = value.strip()
        except OSError as exc:
            raise ConfigurationError(f"cannot read config {path}: {exc}")
        return cls(entries, base_dir=os.path.dirname(os.path.abspath(path)))

    def resolve_path(self, value):
        return value if os.path.isabs(value) else os.path.join(self.base_dir, value)

    def get(self, key):
        if key not in self.entries:
            raise ConfigurationError(f"missing config key {key}")
        return self.entries[key]

    def get_int(self, key):
        return int(self.get(key))

    def get_float(self, key):
        return float(self.get(key))

    def get_bool(self, key):
        return self.get(key).lower() in ("1", "true", "yes")

    def get_floats(self, key):
        return tuple(float(v) for v in self.get(key).split(",") if v.strip())

    def get_list(self, key):
        return [v.strip() for v in self.get(key).split(",") if v.strip()]

    @property
    def seed(self):
        return self.get_int("seeds.root")

    def override_seed(self, seed):
        self.entries["seeds.root"] = str(int(seed))

    def sgd(self, section) -> SgdConfig:
        return SgdConfig(
            learning_rate=self.get_float(f"{section}.lr"),
            momentum=self.get_float(f"{section}.momentum"),
            weight_decay=self.get_float(f"{section}.weight_decay"),
            batch_size=self.get_int(f"{section}.batch_size"),
            epochs=self.get_int(f"{section}.epochs"),
        )

    def attack_config(self, kind) -> AttackConfig:
        if kind == "fgsm":
            return AttackConfig(kind="fgsm", epsilon=self.get_float("attack.fgsm.epsilon"))
        if kind == "pgd":
            return AttackConfig(
                kind="pgd",
                epsilon=self.get_float("attack.pgd.epsilon"),
                step=self.get_float("attack.pgd.step"),
                iters=self.get_int("attack.pgd.iters"),
            )
        if kind == "jsma":
            return AttackConfig(
                kind="jsma",
                theta=self.get_float("attack.jsma.theta"),
                max_fraction=self.get_float("attack.jsma.max_fraction"),
                targeted=True,
            )
        raise ConfigurationError(f"unknown attack kind {kind!r}")

    def canonical_text(self):
        return "\n".join(f"{k}={self.entries[k]}" for k in sorted(self.entries)) + "\n"

    @property
    def config_hash(self):
        return hashlib.sha256(self.canonical_text().encode("utf-8")).hexdigest()[:16]

    def manifest_entries(self):
        return {
            "config_hash": self.config_hash,
            "seeds.root": self.seed,
            "version": __version__,
            "kernels": BACKEND,
        }
