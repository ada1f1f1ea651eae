"""Boundary-guided adversarial example generation.

Latents are displaced along the SVM boundary normal, re-weighted by the
sample's attention vector:

    normal:     z' = z + eps * (beta * d)
    cavRandom:  z' = z + eps * (beta * (d + delta)),  delta ~ N(0, s^2 I)
    random:     z' = z + eps * (beta * gamma),        gamma ~ N(0, s^2 I)

Perturbed latents go through the trained generator; a generated sample is
flagged `flipped` when the classifier's prediction disagrees with the source
sample's ground-truth label.

The crossing analysis freezes beta at the unperturbed latent and works on
the linearized margin g~(eps) = w . (beta * (z + eps d)) + b, whose slope
w . (beta * d) is strictly positive, so the analytic root below is exact
for that model.
"""

import csv
import os
from dataclasses import dataclass, field

import numpy as np

from . import rng
from .boundary import AttentionSvm, SvmConfig, fit_pair_svm
from .data import Dataset
from .errors import (
    BudgetError,
    ContractError,
    DegeneracyError,
    DimensionError,
    YieldShortfallError,
)

VARIANTS = ("normal", "cavRandom", "random")
SWEEP_EPSILONS = (0.1, 2.0, 5.0, 7.0, 10.0, 15.0, 20.0)


@dataclass(frozen=True)
class PerturbationSpec:
    variant: str = "normal"
    epsilons: tuple = SWEEP_EPSILONS
    noise_scale: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ContractError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        eps = tuple(float(e) for e in self.epsilons)
        if any(e < 0 for e in eps):
            raise ContractError(f"epsilons must be non-negative: {eps}")
        if any(a >= b for a, b in zip(eps, eps[1:])):
            raise ContractError(f"epsilons must be strictly ascending: {eps}")
        if self.noise_scale < 0:
            raise ContractError(f"noise_scale must be non-negative, got {self.noise_scale}")
        object.__setattr__(self, "epsilons", eps)


@dataclass
class GeneratedExample:
    x_hat: np.ndarray
    source_index: int
    epsilon: float
    variant: str
    y_true: int
    y_pred: int
    flipped: bool
    class_pair: tuple


def _as_vec(name, v, F=None):
    v = np.ascontiguousarray(v, dtype=np.float32)
    if v.ndim != 1 or (F is not None and v.shape[0] != F):
        raise DimensionError(f"{name}: expected length-{F} vector, got shape {v.shape}")
    return v


def perturb_latent(z, beta, d, eps, variant="normal", noise_scale=1.0, seed=0, noise=None):
    """Perturbed latent z' for one sample; `noise` overrides the drawn delta/gamma."""
    z = _as_vec("z", z)
    beta = _as_vec("beta", beta, z.shape[0])
    d = _as_vec("d", d, z.shape[0])
    if eps < 0:
        raise ContractError(f"eps must be non-negative, got {eps}")
    eps = np.float32(eps)
    if variant == "normal":
        return z + eps * (beta * d)
    if noise is None:
        stream = rng.named_stream(seed, f"perturb.{variant}")
        noise = stream.normal(0.0, 1.0, size=z.shape[0]).astype(np.float32) * np.float32(noise_scale)
    else:
        noise = _as_vec("noise", noise, z.shape[0])
    if variant == "cavRandom":
        return z + eps * (beta * (d + noise))
    if variant == "random":
        return z + eps * (beta * noise)
    raise ContractError(f"unknown variant {variant!r}")


def frozen_margin(svm: AttentionSvm, z, eps, beta0=None):
    """Linearized margin g~(eps) with beta frozen at the unperturbed latent."""
    z = _as_vec("z", z, svm.latent_dim)
    if beta0 is None:
        beta0 = svm.beta(z)
    return float((beta0 * (z + np.float32(eps) * svm.d)) @ svm.w + svm.b)


def crossing_epsilon(svm: AttentionSvm, z):
    """Analytic root of the frozen-beta margin; None when already positive.

    eps* = -g(z) / (w . (beta * d)). A boundary point (g == 0) returns 0.
    """
    z = _as_vec("z", z, svm.latent_dim)
    beta0 = svm.beta(z)
    g = float((beta0 * z) @ svm.w + svm.b)
    slope = float((beta0 * svm.d) @ svm.w)
    if slope <= 1e-12:
        raise DegeneracyError(f"frozen-beta margin slope {slope:.3e} not positive")
    eps_star = -g / slope
    if eps_star < 0:
        return None
    return eps_star


def generate_adversarial(classifier, gen, svm: AttentionSvm, sample, spec: PerturbationSpec,
                         source_index=-1):
    """All GeneratedExample records for one source sample over spec.epsilons."""
    x, y_true = sample
    if y_true not in svm.class_pair:
        raise ContractError(f"sample label {y_true} not in svm pair {svm.class_pair}")
    target = svm.class_pair[0] if y_true == svm.class_pair[1] else svm.class_pair[1]
    oriented = svm.oriented_for_target(target)

    z = classifier.latent(np.asarray(x, dtype=np.float32)[None, ...])[0]
    beta0 = oriented.beta(z)
    noise = None
    if spec.variant != "normal":
        stream = rng.split(spec.seed, f"perturb.{spec.variant}", source_index)
        noise = stream.normal(0.0, 1.0, size=z.shape[0]).astype(np.float32) * np.float32(
            spec.noise_scale
        )

    records = []
    for eps in spec.epsilons:
        z_prime = perturb_latent(
            z, beta0, oriented.d, eps, spec.variant, spec.noise_scale, spec.seed, noise=noise
        )
        x_hat = gen.generate(z_prime)
        y_pred = int(classifier.predict(x_hat[None, ...])[0])
        records.append(
            GeneratedExample(
                x_hat=x_hat,
                source_index=source_index,
                epsilon=float(eps),
                variant=spec.variant,
                y_true=int(y_true),
                y_pred=y_pred,
                flipped=y_pred != int(y_true),
                class_pair=(int(y_true), int(target)),
            )
        )
    return records


class SvmBank:
    """Lazily fitted cache of pairwise attention SVMs over one dataset."""

    def __init__(self, classifier, ds: Dataset, cfg: SvmConfig, seed):
        self.classifier = classifier
        self.ds = ds
        self.cfg = cfg
        self.seed = seed
        self._cache = {}

    def get(self, class_a, class_b) -> AttentionSvm:
        if class_a == class_b:
            raise ContractError(f"need two distinct classes, got {class_a}")
        key = (min(class_a, class_b), max(class_a, class_b))
        if key not in self._cache:
            self._cache[key] = fit_pair_svm(self.classifier, self.ds, key, self.cfg, self.seed)
        return self._cache[key]


@dataclass
class AdvDataset(Dataset):
    """Generated dataset plus provenance needed for pairing and export."""

    source_index: np.ndarray = None
    epsilon: np.ndarray = None
    y_pred: np.ndarray = None
    flipped: np.ndarray = None
    source_x: np.ndarray = None
    variant: str = "normal"


def _interleaved_sources(ds: Dataset, per_class, seed):
    """Round-robin over classes of per-class shuffled source indices."""
    stream = rng.named_stream(seed, "advgen.sources")
    pools = []
    for c in range(ds.class_count):
        pool = np.nonzero(ds.y == c)[0]
        pools.append(stream.permutation(pool)[:per_class])
    order = []
    for i in range(max(len(p) for p in pools)):
        for pool in pools:
            if i < len(pool):
                order.append(int(pool[i]))
    return order


def build_adv_dataset(classifier, gen, svm_bank: SvmBank, ds: Dataset, budget,
                      spec: PerturbationSpec, policy="all") -> AdvDataset:
    """Generate latent-boundary adversarial examples labeled with y_true.

    policy="all" keeps every generated record (non-flipped reconstructions
    act as augmentation); "flipped_only" keeps label-flipping records and
    raises YieldShortfallError when the budget cannot be met.
    """
    if policy not in ("all", "flipped_only"):
        raise ContractError(f"policy must be 'all' or 'flipped_only', got {policy!r}")
    if budget < 1:
        raise ContractError(f"budget must be positive, got {budget}")
    n_eps = len(spec.epsilons)
    class_counts = [int((ds.y == c).sum()) for c in range(ds.class_count)]

    if policy == "all":
        needed_sources = -(-budget // n_eps)
        per_class = -(-needed_sources // ds.class_count)
        if per_class > min(class_counts):
            raise BudgetError(
                f"budget {budget} needs {per_class} sources/class, "
                f"smallest class has {min(class_counts)}"
            )
    else:
        per_class = min(class_counts)

    target_stream = rng.named_stream(spec.seed, "advgen.targets")
    kept = []
    for src in _interleaved_sources(ds, per_class, spec.seed):
        y_true = int(ds.y[src])
        others = [c for c in range(ds.class_count) if c != y_true]
        target = int(others[target_stream.integers(0, len(others))])
        svm = svm_bank.get(y_true, target)
        records = generate_adversarial(classifier, gen, svm, ds[src], spec, source_index=src)
        for rec in records:
            if policy == "flipped_only" and not rec.flipped:
                continue
            kept.append(rec)
        if len(kept) >= budget:
            break

    if len(kept) < budget:
        raise YieldShortfallError(
            f"generated {len(kept)} of {budget} requested examples", achieved=len(kept)
        )
    kept = kept[:budget]

    return AdvDataset(
        x=np.stack([r.x_hat for r in kept]),
        y=np.array([r.y_true for r in kept], dtype=np.int64),
        class_count=ds.class_count,
        split="adv",
        meta={"policy": policy, "variant": spec.variant},
        source_index=np.array([r.source_index for r in kept], dtype=np.int64),
        epsilon=np.array([r.epsilon for r in kept], dtype=np.float32),
        y_pred=np.array([r.y_pred for r in kept], dtype=np.int64),
        flipped=np.array([r.flipped for r in kept], dtype=bool),
        source_x=np.stack([ds.x[r.source_index] for r in kept]),
        variant=spec.variant,
    )


def save_adv_dataset(out_dir, adv: AdvDataset, extra_manifest=None):
    """Container for the images plus a CSV of labels/flip flags."""
    from .checkpoint import save_entries
    from .data import write_manifest

    os.makedirs(out_dir, exist_ok=True)
    save_entries(
        os.path.join(out_dir, "adv_images.ckpt"),
        {"images": adv.x, "labels": adv.y.astype(np.float32)},
    )
    with open(os.path.join(out_dir, "adv_records.csv"), "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["source_index", "epsilon", "variant", "y_true", "y_pred", "flipped"])
        for i in range(len(adv)):
            writer.writerow(
                [
                    int(adv.source_index[i]),
                    repr(float(adv.epsilon[i])),
                    adv.variant,
                    int(adv.y[i]),
                    int(adv.y_pred[i]),
                    int(adv.flipped[i]),
                ]
            )
    manifest = {
        "records": len(adv),
        "variant": adv.variant,
        "policy": adv.meta.get("policy", "all"),
        "class_count": adv.class_count,
    }
    if extra_manifest:
        manifest.update(extra_manifest)
    write_manifest(os.path.join(out_dir, "adv_manifest.txt"), manifest)


def load_adv_dataset(out_dir, source_ds: Dataset) -> AdvDataset:
    """Rebuild an AdvDataset from its persisted artifacts.

    Source pairing is reconstructed through the stored source indices, so
    `source_ds` must be the dataset generation ran on.
    """
    from .checkpoint import load_entries
    from .data import read_manifest

    entries = load_entries(os.path.join(out_dir, "adv_images.ckpt"))
    manifest = read_manifest(os.path.join(out_dir, "adv_manifest.txt"))
    rows = []
    with open(os.path.join(out_dir, "adv_records.csv"), newline="") as f:
        for rec in csv.DictReader(f):
            rows.append(rec)
    source_index = np.array([int(r["source_index"]) for r in rows], dtype=np.int64)
    return AdvDataset(
        x=entries["images"],
        y=entries["labels"].astype(np.int64),
        class_count=int(manifest["class_count"]),
        split="adv",
        meta={"policy": manifest.get("policy", "all"), "variant": manifest.get("variant")},
        source_index=source_index,
        epsilon=np.array([float(r["epsilon"]) for r in rows], dtype=np.float32),
        y_pred=np.array([int(r["y_pred"]) for r in rows], dtype=np.int64),
        flipped=np.array([bool(int(r["flipped"])) for r in rows], dtype=bool),
        source_x=source_ds.x[source_index].copy(),
        variant=manifest.get("variant", "normal"),
    )
