"""Command-line entry point.

Subcommands: train, fit-svm, gen-adv, attack, adv-train, eval, sweep,
report. Each writes its artifacts under --out and stamps a manifest with
the config hash; reruns with a different config in the same directory are
refused, and `report` refuses to merge runs with mixed hashes.

Exit codes: 0 success, 1 stage failure (one machine-readable line on
stderr), 2 usage error.
"""

import argparse
import csv
import os
import sys

import numpy as np

from .config import ExperimentConfig, worker_count
from .data import read_manifest, write_manifest
from .errors import ConfigurationError, LadderError
from .evaluation import (
    average_rank,
    epsilon_sweep,
    rank_to_csv,
    robustness_matrix,
    table_to_csv,
)
from .genadv import load_adv_dataset, save_adv_dataset
from .pipeline import (
    LADDER_COLUMN,
    Pipeline,
    load_classifier,
    load_eval_dataset,
    load_generator,
    save_classifier,
    save_eval_dataset,
    save_generator,
)

PROFILE_OVERRIDES = {
    "desk": {},
    "full": {
        "model.profile": "lenet500",
        "model.latent_dim": "500",
        "generator.profile": "deconv28",
    },
}


def _load_config(args) -> ExperimentConfig:
    cfg = ExperimentConfig.load(args.config)
    if args.profile:
        cfg.entries.update(PROFILE_OVERRIDES[args.profile])
    if args.seed is not None:
        cfg.override_seed(args.seed)
    return cfg


def _prepare_out(args, cfg) -> str:
    out = args.out
    os.makedirs(out, exist_ok=True)
    manifest_path = os.path.join(out, "manifest.txt")
    if os.path.exists(manifest_path):
        existing = read_manifest(manifest_path)
        if existing.get("config_hash") != cfg.config_hash:
            raise ConfigurationError(
                f"{out} belongs to config {existing.get('config_hash')}, "
                f"refusing to mix with {cfg.config_hash}"
            )
    else:
        write_manifest(manifest_path, cfg.manifest_entries())
    return out


def _write_loss_csv(path, history):
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["epoch", "loss"])
        for i, v in enumerate(history):
            writer.writerow([i, repr(float(v))])


def _pipeline_with_artifacts(cfg, out) -> Pipeline:
    """Pipeline that reuses models already checkpointed in the run dir."""
    pipe = Pipeline(cfg)
    if os.path.exists(os.path.join(out, "classifier.ckpt")):
        pipe._vanilla = (load_classifier(out, "classifier"), None)
    if os.path.exists(os.path.join(out, "generator.ckpt")):
        pipe._generator = (load_generator(out, "generator"), None)
    return pipe


def cmd_train(args):
    cfg = _load_config(args)
    out = _prepare_out(args, cfg)
    pipe = Pipeline(cfg)
    train_ds, test_ds = pipe.datasets()
    write_manifest(
        os.path.join(out, "dataset_manifest.txt"),
        {
            "kind": cfg.get("data.kind"),
            "split": "train+test",
            "class_count": train_ds.class_count,
            "train_size": len(train_ds),
            "test_size": len(test_ds),
        },
    )
    clf, history = pipe.vanilla()
    save_classifier(out, "classifier", clf)
    _write_loss_csv(os.path.join(out, "train_losses.csv"), history)
    gen, ghistory = pipe.generator()
    save_generator(out, "generator", gen)
    _write_loss_csv(os.path.join(out, "generator_losses.csv"), ghistory)
    return 0


def cmd_fit_svm(args):
    cfg = _load_config(args)
    out = _prepare_out(args, cfg)
    pipe = _pipeline_with_artifacts(cfg, out)
    bank = pipe.svm_bank()
    pairs_value = cfg.get("svm.pairs")
    train_ds, _ = pipe.datasets()
    if pairs_value == "all":
        pairs = [
            (a, b)
            for a in range(train_ds.class_count)
            for b in range(a + 1, train_ds.class_count)
        ]
    else:
        pairs = []
        for token in pairs_value.split(","):
            a, b = token.strip().split("-")
            pairs.append((int(a), int(b)))
    for a, b in pairs:
        svm = bank.get(a, b)
        svm.save(os.path.join(out, f"svm_{a}_{b}.ckpt"))
    return 0


def cmd_gen_adv(args):
    cfg = _load_config(args)
    out = _prepare_out(args, cfg)
    pipe = _pipeline_with_artifacts(cfg, out)
    adv = pipe.build_adv()
    save_adv_dataset(out, adv, extra_manifest={"config_hash": cfg.config_hash, "seed": cfg.seed})
    return 0


def cmd_attack(args):
    cfg = _load_config(args)
    out = _prepare_out(args, cfg)
    pipe = _pipeline_with_artifacts(cfg, out)
    kinds = cfg.get_list("eval.attacks")
    sets = pipe.attack_sets(kinds)
    for kind, ds in sets.items():
        save_eval_dataset(os.path.join(out, f"attack_{kind}.ckpt"), ds)
    return 0


def cmd_adv_train(args):
    cfg = _load_config(args)
    out = _prepare_out(args, cfg)
    pipe = _pipeline_with_artifacts(cfg, out)
    train_ds, _ = pipe.datasets()
    adv_path = os.path.join(out, "adv_images.ckpt")
    if os.path.exists(adv_path):
        adv = load_adv_dataset(out, train_ds)
    else:
        adv = pipe.build_adv()
    model, history = pipe.adv_train(adv)
    save_classifier(out, "ladder_classifier", model)
    with open(os.path.join(out, "advtrain_log.csv"), "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["epoch", "clean_loss", "adv_loss", "mixed_loss"])
        for i, (c, a, m) in enumerate(history):
            writer.writerow([i, repr(float(c)), repr(float(a)), repr(float(m))])
    return 0


def cmd_eval(args):
    cfg = _load_config(args)
    out = _prepare_out(args, cfg)
    pipe = _pipeline_with_artifacts(cfg, out)
    _, test_ds = pipe.datasets()
    clf, _ = pipe.vanilla()
    model_rows = [("vanilla", clf, None)]
    if os.path.exists(os.path.join(out, "ladder_classifier.ckpt")):
        model_rows.append(("ladder", load_classifier(out, "ladder_classifier"), LADDER_COLUMN))

    from .evaluation import accuracy

    with open(os.path.join(out, "accuracy.csv"), "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["model", "clean_accuracy"])
        for name, model, _tr in model_rows:
            writer.writerow([name, repr(accuracy(model, test_ds))])

    kinds = cfg.get_list("eval.attacks")
    sets = {}
    for kind in kinds:
        path = os.path.join(out, f"attack_{kind}.ckpt")
        if os.path.exists(path):
            sets[kind] = load_eval_dataset(path, test_ds.class_count)
    if sets:
        table = robustness_matrix(model_rows, sorted(sets), test_ds, sets)
        table_to_csv(table, os.path.join(out, "robustness.csv"))
        try:
            report = average_rank(table)
        except LadderError as exc:
            print(f"note: rank skipped ({exc})", file=sys.stderr)
        else:
            rank_to_csv(report, table, os.path.join(out, "rank.csv"))
    return 0


def cmd_sweep(args):
    cfg = _load_config(args)
    out = _prepare_out(args, cfg)
    pipe = _pipeline_with_artifacts(cfg, out)
    train_ds, _ = pipe.datasets()
    budget = cfg.get_int("sweep.per_class") * train_ds.class_count
    epsilon_sweep(
        pipe,
        cfg.get_floats("sweep.epsilons"),
        budget,
        out_csv=os.path.join(out, "sweep.csv"),
        out_svg=os.path.join(out, "sweep.svg"),
    )
    return 0


def cmd_report(args):
    os.makedirs(args.out, exist_ok=True)
    hashes = {}
    for run in args.runs:
        manifest = read_manifest(os.path.join(run, "manifest.txt"))
        hashes[run] = manifest.get("config_hash")
    if len(set(hashes.values())) > 1:
        raise ConfigurationError(f"mixed config hashes across runs: {hashes}")
    rows = []
    for run in args.runs:
        acc_path = os.path.join(run, "accuracy.csv")
        rank_path = os.path.join(run, "rank.csv")
        ranks = {}
        if os.path.exists(rank_path):
            with open(rank_path, newline="") as f:
                for rec in csv.DictReader(f):
                    ranks[rec["defence"]] = rec["avg_rank"]
        if os.path.exists(acc_path):
            with open(acc_path, newline="") as f:
                for rec in csv.DictReader(f):
                    rows.append(
                        (run, rec["model"], rec["clean_accuracy"], ranks.get(rec["model"], ""))
                    )
    with open(os.path.join(args.out, "report.csv"), "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["run", "model", "clean_accuracy", "avg_rank"])
        writer.writerows(rows)
    return 0


COMMANDS = {
    "train": cmd_train,
    "fit-svm": cmd_fit_svm,
    "gen-adv": cmd_gen_adv,
    "attack": cmd_attack,
    "adv-train": cmd_adv_train,
    "eval": cmd_eval,
    "sweep": cmd_sweep,
    "report": cmd_report,
}


def build_parser():
    parser = argparse.ArgumentParser(
        prog="ladderlab",
        description="latent boundary-guided adversarial training laboratory",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--out", required=True, help="artifact directory")
        if name == "report":
            p.add_argument("runs", nargs="+", help="run directories to aggregate")
        else:
            p.add_argument("--config", required=True, help="key=value config file")
            p.add_argument("--profile", choices=sorted(PROFILE_OVERRIDES), default=None)
            p.add_argument("--seed", type=int, default=None, help="override seeds.root")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    np.seterr(all="ignore")
    worker_count()  # validates LADDER_THREADS early
    try:
        return COMMANDS[args.command](args)
    except LadderError as exc:
        print(
            f"error: stage={args.command} kind={type(exc).__name__} msg={exc}",
            file=sys.stderr,
        )
        return 1


if __name__ == "__main__":
    sys.exit(main())
