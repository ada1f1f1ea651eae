"""End-to-end stage orchestration over one experiment config.

Stages: load data -> train vanilla classifier -> train generator -> fit
pairwise SVMs (lazily) -> generate boundary-guided examples -> adversarial
training -> attack sets and evaluation. Every stage draws its randomness
from the config's root seed through its own named stream, so stages can be
re-run in isolation and whole runs are reproducible byte for byte.
"""

import os

import numpy as np

from . import models
from .attacks import attack_dataset
from .advtrain import AdvTrainConfig, adversarial_train
from .boundary import SvmConfig
from .checkpoint import load_entries, save_entries
from .config import ExperimentConfig
from .data import (
    Dataset,
    downsample_28_to_8,
    load_digits8,
    load_idx,
    read_manifest,
    split_dataset,
    synth_blobs,
    write_manifest,
)
from .errors import ConfigurationError
from .evaluation import accuracy
from .genadv import AdvDataset, PerturbationSpec, SvmBank, build_adv_dataset

LADDER_COLUMN = "ladder"


class Pipeline:
    def __init__(self, cfg: ExperimentConfig):
        self.cfg = cfg
        self._train_ds = None
        self._test_ds = None
        self._vanilla = None
        self._generator = None
        self._bank = None
        self._reference_attack_set = None

    # ---- data ----

    def datasets(self):
        if self._train_ds is None:
            cfg = self.cfg
            kind = cfg.get("data.kind")
            if kind == "digits8":
                self._train_ds, self._test_ds = load_digits8(
                    cfg.seed,
                    train_per_class=cfg.get_int("data.train_per_class"),
                    test_per_class=cfg.get_int("data.test_per_class"),
                )
            elif kind == "blobs":
                full = synth_blobs(
                    cfg.get_int("data.class_count"),
                    cfg.get_int("data.per_class"),
                    cfg.get_int("data.dim"),
                    cfg.get_float("data.separation"),
                    cfg.seed,
                )
                self._train_ds, self._test_ds = split_dataset(
                    full, cfg.get_float("data.test_fraction"), cfg.seed
                )
            elif kind == "idx":
                train = load_idx(
                    cfg.resolve_path(cfg.get("data.images")),
                    cfg.resolve_path(cfg.get("data.labels")),
                )
                test = load_idx(
                    cfg.resolve_path(cfg.get("data.test_images")),
                    cfg.resolve_path(cfg.get("data.test_labels")),
                )
                if cfg.get_bool("data.downsample"):
                    train = Dataset(downsample_28_to_8(train.x), train.y, train.class_count, "train")
                    test = Dataset(downsample_28_to_8(test.x), test.y, test.class_count, "test")
                self._train_ds, self._test_ds = train, test
            else:
                raise ConfigurationError(f"unknown data.kind {kind!r}")
        return self._train_ds, self._test_ds

    # ---- models ----

    def classifier_profile(self, input_shape):
        profile = self.cfg.get("model.profile")
        return models.default_classifier_profile(input_shape) if profile == "auto" else profile

    def generator_profile(self, input_shape):
        profile = self.cfg.get("generator.profile")
        return models.default_generator_profile(input_shape) if profile == "auto" else profile

    def build_vanilla(self, init_tag="classifier"):
        train_ds, _ = self.datasets()
        return models.build_classifier(
            self.classifier_profile(train_ds.input_shape),
            train_ds.input_shape,
            train_ds.class_count,
            self.cfg.seed,
            latent_dim=self.cfg.get_int("model.latent_dim"),
            init_tag=init_tag,
        )

    def vanilla(self):
        if self._vanilla is None:
            train_ds, _ = self.datasets()
            model = self.build_vanilla()
            history = models.train_classifier(model, train_ds, self.cfg.sgd("model"), self.cfg.seed)
            self._vanilla = (model, history)
        return self._vanilla

    def generator(self):
        if self._generator is None:
            train_ds, _ = self.datasets()
            clf, _ = self.vanilla()
            gen = models.build_generator(
                self.generator_profile(train_ds.input_shape),
                clf.latent_dim,
                train_ds.input_shape,
                self.cfg.seed,
                p=self.cfg.get_int("generator.p"),
            )
            history = models.train_generator(
                gen, train_ds, clf, self.cfg.sgd("generator"), self.cfg.seed
            )
            self._generator = (gen, history)
        return self._generator

    def svm_config(self) -> SvmConfig:
        return SvmConfig(
            sgd=self.cfg.sgd("svm"),
            lam=self.cfg.get_float("svm.lam"),
            kernel_size=self.cfg.get_int("svm.kernel_size"),
            budget=self.cfg.get_int("svm.budget"),
        )

    def svm_bank(self) -> SvmBank:
        if self._bank is None:
            train_ds, _ = self.datasets()
            clf, _ = self.vanilla()
            self._bank = SvmBank(clf, train_ds, self.svm_config(), self.cfg.seed)
        return self._bank

    # ---- generation and adversarial training ----

    def perturbation_spec(self, epsilons=None) -> PerturbationSpec:
        return PerturbationSpec(
            variant=self.cfg.get("perturb.variant"),
            epsilons=tuple(epsilons) if epsilons else self.cfg.get_floats("perturb.epsilons"),
            noise_scale=self.cfg.get_float("perturb.noise_scale"),
            seed=self.cfg.seed,
        )

    def build_adv(self, budget=None, spec=None, policy=None, source_ds=None) -> AdvDataset:
        train_ds, _ = self.datasets()
        clf, _ = self.vanilla()
        gen, _ = self.generator()
        return build_adv_dataset(
            clf,
            gen,
            self.svm_bank(),
            source_ds if source_ds is not None else train_ds,
            budget if budget is not None else self.cfg.get_int("gen_adv.budget"),
            spec if spec is not None else self.perturbation_spec(),
            policy=policy or self.cfg.get("gen_adv.policy"),
        )

    def advtrain_config(self) -> AdvTrainConfig:
        return AdvTrainConfig(
            sgd=self.cfg.sgd("advtrain"),
            alpha_mix=self.cfg.get_float("advtrain.alpha_mix"),
            regularizer=self.cfg.get("advtrain.regularizer"),
            trades_lambda=self.cfg.get_float("advtrain.trades_lambda"),
            fine_tune=self.cfg.get_bool("advtrain.fine_tune"),
        )

    def adv_train(self, adv_ds):
        """Mixed-loss retraining of an independently initialized model.

        Matches the model-sharing protocol: defences are retrained from
        scratch (their own init stream) while attack sets stay pinned to the
        shared vanilla model. fine_tune starts from the vanilla weights
        instead.
        """
        train_ds, _ = self.datasets()
        cfg = self.advtrain_config()
        model = self.build_vanilla(init_tag="advtrain")
        if cfg.fine_tune:
            vanilla, _ = self.vanilla()
            for p, q in zip(model.params(), vanilla.params()):
                p.data = q.data.copy()
        history = adversarial_train(model, train_ds, adv_ds, cfg, self.cfg.seed)
        return model, history

    # ---- evaluation ----

    def reference_attack_set(self) -> Dataset:
        """Black-box FGSM set generated once against the vanilla model."""
        if self._reference_attack_set is None:
            _, test_ds = self.datasets()
            clf, _ = self.vanilla()
            self._reference_attack_set = attack_dataset(
                clf, test_ds, self.cfg.attack_config("fgsm"), seed=self.cfg.seed
            )
        return self._reference_attack_set

    def attack_sets(self, kinds) -> dict:
        _, test_ds = self.datasets()
        clf, _ = self.vanilla()
        out = {}
        for kind in kinds:
            if kind == LADDER_COLUMN:
                out[kind] = self.build_adv(
                    budget=self.cfg.get_int("eval.ladder_budget"),
                    policy="flipped_only",
                    source_ds=test_ds,
                )
            else:
                out[kind] = attack_dataset(
                    clf, test_ds, self.cfg.attack_config(kind), seed=self.cfg.seed
                )
        return out

    def train_at_epsilon(self, eps, budget):
        """One sweep point: regenerate at a single epsilon, retrain, measure."""
        _, test_ds = self.datasets()
        spec = self.perturbation_spec(epsilons=(float(eps),))
        adv = self.build_adv(budget=budget, spec=spec)
        model, _ = self.adv_train(adv)
        return accuracy(model, test_ds), accuracy(model, self.reference_attack_set())


# ---- artifact save/load helpers used by the CLI ----

def save_classifier(out_dir, name, clf):
    clf.save(os.path.join(out_dir, f"{name}.ckpt"))
    write_manifest(
        os.path.join(out_dir, f"{name}_manifest.txt"),
        {
            "profile": clf.profile,
            "latent_dim": clf.latent_dim,
            "class_count": clf.class_count,
            "input_shape": ",".join(str(d) for d in clf.input_shape),
        },
    )


def load_classifier(out_dir, name):
    manifest = read_manifest(os.path.join(out_dir, f"{name}_manifest.txt"))
    input_shape = tuple(int(v) for v in manifest["input_shape"].split(","))
    clf = models.build_classifier(
        manifest["profile"],
        input_shape,
        int(manifest["class_count"]),
        seed=0,
        latent_dim=int(manifest["latent_dim"]),
    )
    clf.load(os.path.join(out_dir, f"{name}.ckpt"))
    return clf


def save_generator(out_dir, name, gen):
    gen.save(os.path.join(out_dir, f"{name}.ckpt"))
    write_manifest(
        os.path.join(out_dir, f"{name}_manifest.txt"),
        {
            "profile": gen.profile,
            "latent_dim": gen.latent_dim,
            "p": gen.p,
            "output_shape": ",".join(str(d) for d in gen.output_shape),
        },
    )


def load_generator(out_dir, name):
    manifest = read_manifest(os.path.join(out_dir, f"{name}_manifest.txt"))
    output_shape = tuple(int(v) for v in manifest["output_shape"].split(","))
    gen = models.build_generator(
        manifest["profile"],
        int(manifest["latent_dim"]),
        output_shape,
        seed=0,
        p=int(manifest["p"]),
    )
    gen.load(os.path.join(out_dir, f"{name}.ckpt"))
    return gen


def save_eval_dataset(path, ds: Dataset):
    save_entries(path, {"images": ds.x, "labels": ds.y.astype(np.float32)})


def load_eval_dataset(path, class_count, split="test") -> Dataset:
    entries = load_entries(path)
    return Dataset(entries["images"], entries["labels"].astype(np.int64), class_count, split)
