"""Command-line orchestration of the three-stage training procedure.

Subcommands: synth, pretrain, init-gmm, train, eval, embed. Every command is
deterministic given --seed and its config; the effective configuration is
written next to the outputs. Exit code 0 means the command completed; all
failures carry a one-line cause on stderr.
"""
from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import autoencoder, data_io, gmm, joint, metrics
from .config import RunConfig, config_text, merge_config, parse_config_file
from .numerics import SeededRng, pca_project_2d


def _load_dataset(cfg: RunConfig) -> data_io.Dataset:
    if not cfg.data:
        raise ValueError("no dataset given (use --data)")
    fmt = cfg.data_format
    if fmt == "auto":
        lower = cfg.data.lower()
        if lower.endswith(".csv"):
            fmt = "csv"
        elif "idx" in lower or "ubyte" in lower:
            fmt = "idx"
        else:
            raise ValueError(
                f"cannot infer format of {cfg.data}; pass --format csv|idx"
            )
    if fmt == "csv":
        return data_io.load_csv(cfg.data, has_labels=not cfg.unlabeled,
                                delimiter=cfg.delimiter)
    if fmt == "idx":
        return data_io.load_idx(cfg.data, cfg.labels or None)
    raise ValueError(f"unknown data format {fmt!r}")


def _out_path(cfg: RunConfig, name):
    os.makedirs(cfg.out, exist_ok=True)
    return os.path.join(cfg.out, name)


def _write_effective_config(cfg: RunConfig, command):
    with open(_out_path(cfg, f"{command}.config"), "w", encoding="utf-8") as f:
        f.write(config_text(cfg))


def _joint_config(cfg: RunConfig) -> joint.JointConfig:
    return joint.JointConfig(
        eta=cfg.eta,
        neighbor_fraction=cfg.neighbor_fraction,
        learning_rate=cfg.lr,
        lr_step_factor=cfg.lr_step_factor,
        lr_step_every=cfg.lr_step_every,
        batch_size=cfg.batch_size,
        epochs=cfg.epochs,
        seed=cfg.seed,
        separability_mode=cfg.separability_mode,
    )


# run-specific plumbing kept out of checkpoints so that runs differing only
# in file locations stay byte-identical
_SNAPSHOT_EXCLUDE = {"data", "labels", "out", "checkpoint"}


def _snapshot(cfg: RunConfig, **extra):
    snap = {}
    for line in config_text(cfg).splitlines():
        key, _, value = line.partition("=")
        if key not in _SNAPSHOT_EXCLUDE:
            snap[key] = value
    snap.update({k: str(v) for k, v in extra.items()})
    return snap


def cmd_synth(cfg: RunConfig):
    rng = SeededRng(cfg.seed)
    ds, _truth = data_io.synth_gmm(cfg.clusters, cfg.dim, cfg.n,
                                   cfg.separation, rng)
    path = _out_path(cfg, "data.csv")
    with open(path, "w", encoding="utf-8") as f:
        for i in range(ds.n):
            cells = [f"{v:.17g}" for v in ds.samples[i]]
            cells.append(str(int(ds.labels[i])))
            f.write(",".join(cells) + "\n")
    _write_effective_config(cfg, "synth")
    print(f"wrote {path}: {ds.n} samples, dim {ds.dim}, "
          f"{cfg.clusters} components")
    return 0


def cmd_pretrain(cfg: RunConfig):
    ds = _load_dataset(cfg)
    rng = SeededRng(cfg.seed)
    shape = [ds.dim, *cfg.hidden, cfg.rep_dim]
    spec = autoencoder.CorruptionSpec(cfg.corruption)
    pre_cfg = autoencoder.TrainConfig(cfg.pretrain_lr, cfg.pretrain_epochs,
                                      cfg.batch_size)
    enc, dec, pre_losses = autoencoder.pretrain_layerwise(ds, shape, spec,
                                                          pre_cfg, rng)
    fine_cfg = autoencoder.TrainConfig(cfg.pretrain_lr, cfg.finetune_epochs,
                                       cfg.batch_size)
    enc, dec, fine_losses = autoencoder.finetune(enc, dec, ds, fine_cfg, rng)

    loss_path = _out_path(cfg, "pretrain_loss.csv")
    with open(loss_path, "w", encoding="utf-8") as f:
        f.write("phase,stage,epoch,loss\n")
        for row in pre_losses:
            f.write(f"pretrain,{row['stage']},{row['epoch']},{row['loss']!r}\n")
        for epoch, loss in enumerate(fine_losses, start=1):
            f.write(f"finetune,0,{epoch},{loss!r}\n")

    ckpt_path = _out_path(cfg, "encoder.ckpt")
    data_io.save_checkpoint(
        data_io.Checkpoint(enc, dec, None, _snapshot(cfg)), ckpt_path)
    _write_effective_config(cfg, "pretrain")
    final = autoencoder.mean_reconstruction_loss(enc, dec, ds.samples)
    print(f"wrote {ckpt_path}; final mean reconstruction loss {final:.6g}")
    return 0


def cmd_init_gmm(cfg: RunConfig):
    if not cfg.checkpoint:
        raise ValueError("init-gmm needs --checkpoint from the pretrain step")
    ckpt = data_io.load_checkpoint(cfg.checkpoint)
    ds = _load_dataset(cfg)
    rng = SeededRng(cfg.seed)
    reps = autoencoder.encode(ckpt.encoder, ds.samples)
    if cfg.gmm_init == "kmeans":
        init = gmm.kmeans_init(reps, cfg.clusters, rng)
    elif cfg.gmm_init == "random":
        init = gmm.random_init(reps, cfg.clusters, rng)
    else:
        raise ValueError(f"unknown gmm_init {cfg.gmm_init!r}")
    init_ll = gmm.log_likelihood(init, reps)
    result = gmm.em_fit(reps, cfg.clusters, init, max_iters=cfg.em_max_iters,
                        tol=cfg.em_tol, rng=rng)

    trace_path = _out_path(cfg, "em_loglik.csv")
    with open(trace_path, "w", encoding="utf-8") as f:
        f.write("iteration,loglik\n")
        for i, ll in enumerate(result.log_likelihood_trace):
            f.write(f"{i},{ll!r}\n")

    ckpt_path = _out_path(cfg, "model.ckpt")
    data_io.save_checkpoint(
        data_io.Checkpoint(ckpt.encoder, ckpt.decoder, result.params,
                           _snapshot(cfg)), ckpt_path)
    _write_effective_config(cfg, "init-gmm")
    final_ll = result.log_likelihood_trace[-1] if result.log_likelihood_trace \
        else init_ll
    print(f"wrote {ckpt_path}; EM log-likelihood {final_ll:.6g} "
          f"({cfg.gmm_init} init {init_ll:.6g}, "
          f"{'converged' if result.converged else 'max iterations'})")
    return 0


def cmd_train(cfg: RunConfig):
    if not cfg.checkpoint:
        raise ValueError("train needs --checkpoint from the init-gmm step")
    ckpt = data_io.load_checkpoint(cfg.checkpoint)
    if ckpt.gmm is None:
        raise ValueError(
            f"{cfg.checkpoint} has no mixture parameters; run init-gmm first"
        )
    ds = _load_dataset(cfg)
    jcfg = _joint_config(cfg)
    start_epoch = int(ckpt.config.get("joint_epochs_done", "0"))
    if start_epoch > jcfg.epochs:
        raise ValueError(
            f"checkpoint already trained for {start_epoch} epochs, "
            f"more than the requested {jcfg.epochs}"
        )

    callback = None
    if cfg.embed_every > 0:
        def callback(epoch, enc, params, _cfg=cfg, _ds=ds):
            if epoch % _cfg.embed_every == 0:
                reps = autoencoder.encode(enc, _ds.samples)
                proj = reps if reps.shape[1] == 2 else pca_project_2d(reps)
                data_io.emit_embedding_csv(
                    proj, _ds.labels, _out_path(_cfg, f"embedding_epoch{epoch}.csv"))

    enc, params, history = joint.train(ckpt.encoder, ckpt.gmm, ds, jcfg,
                                       start_epoch=start_epoch,
                                       epoch_callback=callback)

    history_path = _out_path(cfg, "history.csv")
    mode = "deepgmm (eta=0)" if jcfg.eta == 0 else f"joint (eta={jcfg.eta})"
    with open(history_path, "w", encoding="utf-8") as f:
        f.write(f"# mode: {mode}\n")
        f.write("epoch,mean_objective,mean_loglik,separability,learning_rate\n")
        for row in history:
            f.write(f"{row['epoch']},{row['mean_objective']!r},"
                    f"{row['mean_loglik']!r},{row['separability']!r},"
                    f"{row['learning_rate']!r}\n")

    ckpt_path = _out_path(cfg, "trained.ckpt")
    data_io.save_checkpoint(
        data_io.Checkpoint(enc, ckpt.decoder, params,
                           _snapshot(cfg, joint_epochs_done=jcfg.epochs)),
        ckpt_path)
    _write_effective_config(cfg, "train")
    if history:
        print(f"wrote {ckpt_path}; mean objective "
              f"{history[0]['mean_objective']:.6g} -> "
              f"{history[-1]['mean_objective']:.6g}")
    else:
        print(f"wrote {ckpt_path}; no epochs to run")
    return 0


def _compact_labels(labels):
    """Relabel to consecutive ids over the non-empty clusters."""
    present = np.unique(labels)
    lookup = {int(c): i for i, c in enumerate(present)}
    return np.array([lookup[int(v)] for v in labels], dtype=np.int64), len(present)


def cmd_eval(cfg: RunConfig):
    if not cfg.checkpoint:
        raise ValueError("eval needs --checkpoint of a trained model")
    ckpt = data_io.load_checkpoint(cfg.checkpoint)
    if ckpt.gmm is None:
        raise ValueError(f"{cfg.checkpoint} has no mixture parameters")
    ds = _load_dataset(cfg)
    pred = joint.assign(ckpt.encoder, ckpt.gmm, ds)
    reps = autoencoder.encode(ckpt.encoder, ds.samples)

    compact, n_used = _compact_labels(pred)
    if n_used >= 2:
        ch = metrics.ch_score(reps, metrics.Partition(compact, n_used))
    else:
        print("notice: a single non-empty cluster; CH score undefined")
        ch = float("nan")

    report = {}
    if ds.labels is not None:
        pred_part = metrics.Partition(pred, ckpt.gmm.n_components)
        truth_part = metrics.Partition.from_labels(ds.labels)
        report["acc"] = metrics.clustering_accuracy(pred_part, truth_part)
        report["nmi"] = metrics.nmi(pred_part, truth_part)
        counts = metrics.confusion_matrix(pred_part, truth_part)
        with open(_out_path(cfg, "confusion.csv"), "w", encoding="utf-8") as f:
            for row in counts:
                f.write(",".join(str(int(v)) for v in row) + "\n")
    else:
        print("notice: dataset has no labels; skipping acc and nmi")
    report["ch"] = ch

    report_path = _out_path(cfg, "metrics.txt")
    with open(report_path, "w", encoding="utf-8") as f:
        for key, value in report.items():
            f.write(f"{key}={value!r}\n")
    _write_effective_config(cfg, "eval")
    for key, value in report.items():
        print(f"{key}={value:.6g}")
    return 0


def cmd_embed(cfg: RunConfig):
    if not cfg.checkpoint:
        raise ValueError("embed needs --checkpoint with a trained encoder")
    ckpt = data_io.load_checkpoint(cfg.checkpoint)
    ds = _load_dataset(cfg)
    reps = autoencoder.encode(ckpt.encoder, ds.samples)
    proj = reps if reps.shape[1] == 2 else pca_project_2d(reps)
    path = _out_path(cfg, "embedding.csv")
    data_io.emit_embedding_csv(proj, ds.labels, path)
    _write_effective_config(cfg, "embed")
    print(f"wrote {path}: {ds.n} rows")
    return 0


COMMANDS = {
    "synth": cmd_synth,
    "pretrain": cmd_pretrain,
    "init-gmm": cmd_init_gmm,
    "train": cmd_train,
    "eval": cmd_eval,
    "embed": cmd_embed,
}


def build_parser():
    parser = argparse.ArgumentParser(
        prog="deepgmm",
        description="Joint autoencoder / Gaussian-mixture clustering",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="flat key=value config file")
        p.add_argument("--seed", type=int)
        p.add_argument("--data", help="dataset path (csv or idx)")
        p.add_argument("--labels", help="idx label file path")
        p.add_argument("--out", help="output directory")
        p.add_argument("--eta", type=float)
        p.add_argument("--epochs", type=int)
        p.add_argument("--batch-size", dest="batch_size", type=int)
        p.add_argument("--lr", type=float)
        p.add_argument("--clusters", type=int)
        p.add_argument("--checkpoint")
        p.add_argument("--format", dest="data_format", choices=["auto", "csv", "idx"])
        p.add_argument("--unlabeled", action="store_const", const=True)
        p.add_argument("--delimiter")
        p.add_argument("--hidden", help="comma-separated hidden layer sizes")
        p.add_argument("--rep-dim", dest="rep_dim", type=int)
        p.add_argument("--corruption", type=float)
        p.add_argument("--pretrain-epochs", dest="pretrain_epochs", type=int)
        p.add_argument("--finetune-epochs", dest="finetune_epochs", type=int)
        p.add_argument("--pretrain-lr", dest="pretrain_lr", type=float)
        p.add_argument("--gmm-init", dest="gmm_init",
                       choices=["kmeans", "random"])
        p.add_argument("--em-max-iters", dest="em_max_iters", type=int)
        p.add_argument("--em-tol", dest="em_tol", type=float)
        p.add_argument("--neighbor-fraction", dest="neighbor_fraction", type=float)
        p.add_argument("--lr-step-factor", dest="lr_step_factor", type=float)
        p.add_argument("--lr-step-every", dest="lr_step_every", type=int)
        p.add_argument("--separability-mode", dest="separability_mode",
                       choices=["per_step", "per_sample"])
        p.add_argument("--embed-every", dest="embed_every", type=int)
        p.add_argument("--dim", type=int)
        p.add_argument("--n", type=int)
        p.add_argument("--separation", type=float)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    flag_values = {k: v for k, v in vars(args).items()
                   if k not in ("command", "config")}
    try:
        file_values = parse_config_file(args.config) if args.config else {}
        cfg = merge_config(file_values, flag_values)
        return COMMANDS[args.command](cfg)
    except (ValueError, OSError, joint.NumericalDivergence) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
