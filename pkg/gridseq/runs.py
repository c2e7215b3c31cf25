"""
Permission is hereby granted, free of charge, to any person obtaining a copy
of this software and associated documentation files (the "Software"), to deal
in the Software without restriction, including without limitation the rights
to use, copy, modify, merge, publish, distribute, sublicense, and/or sell
copies of the Software, and to permit persons to whom the Software is
furnished to do so, subject to the following conditions:

The above copyright notice and this permission notice shall be included in all
copies or substantial portions of the Software.

THE SOFTWARE IS PROVIDED "AS IS", WITHOUT WARRANTY OF ANY KIND, EXPRESS OR
IMPLIED, INCLUDING BUT NOT LIMITED TO THE WARRANTIES OF MERCHANTABILITY,
FITNESS FOR A PARTICULAR PURPOSE AND NONINFRINGEMENT. IN NO EVENT SHALL THE
AUTHORS OR COPYRIGHT HOLDERS BE LIABLE FOR ANY CLAIM, DAMAGES OR OTHER
LIABILITY, WHETHER IN AN ACTION OF CONTRACT, TORT OR OTHERWISE, ARISING FROM,
OUT OF OR IN CONNECTION WITH THE SOFTWARE OR THE USE OR OTHER DEALINGS IN THE
SOFTWARE.
"""

import argparse
import csv
import json
import logging
import os
import sys

from . import datafiles, experiments
from .checkpoint import load_checkpoint, save_checkpoint
from .config import load_config
from .errors import EXIT_CONFIG, EXIT_OK, ConfigError, GridSeqError
from .evaluation import config_fingerprint, trajectory_errors
from .model import FreezeMask
from .powersystem import load_system_spec
from .rollout import as_trajectory
from .simulator import STABLE, critical_clearing_time, generate_dataset
from .training import (HardCaseSet, TrainingLog, schs_train,
    surrogate_pretrain, teaf_train)


logger = logging.getLogger(__name__)

LOG_FORMAT = "%(asctime)s %(name)s %(levelname)s %(message)s"

# random streams of the generated sets
MAIN_STREAM = 0
HARDER_STREAM = 1
TARGET_STREAM = 2


def data_path(cfg, name):
    return cfg.path("data", name+".traj")


def set_system(cfg, name):
    """The system a generated set was simulated on."""
    return cfg.target_system if name.startswith("target") else cfg.system


def read_set(cfg, name):
    """A generated set with the inertia of its system attached."""
    path = data_path(cfg, name)
    if not os.path.exists(path):
        raise ConfigError("dataset %s not found; run generate first" % path)
    spec = load_system_spec(set_system(cfg, name))
    return datafiles.read_trajectories(path, inertia=spec.H)


def _set_summary(trajs, path):
    n_stable = sum(t.label == STABLE for t in trajs)
    return {"file": os.path.basename(path), "count": len(trajs),
        "stable": n_stable, "unstable": len(trajs) - n_stable}


def _write_csv(path, header, rows):
    with open(path, 'w', newline='') as f:
        writer = csv.writer(f)
        writer.writerow(header)
        writer.writerows(rows)


def _write_json(path, doc):
    with open(path, 'w') as f:
        json.dump(doc, f, indent=1, sort_keys=True)


def _load_model(cfg, path):
    (params, mask, config) = load_checkpoint(path)
    expected = cfg.model_config()
    for key in ("L_seq", "L_pred", "L_p", "S"):
        if getattr(config, key) != getattr(expected, key):
            raise ConfigError("checkpoint %s has %s=%s but the config asks "
                "for %s" % (path, key, getattr(config, key),
                getattr(expected, key)))
    return (params, mask)


def _report_size(params, mask, stage):
    logger.info("%s: %d parameters, %d trainable (%.2f%%)", stage,
        params.count(), params.count(mask.trainable_names()),
        100*params.trainable_fraction(mask))
    return {"parameters": params.count(),
        "trainable_fraction": params.trainable_fraction(mask)}


def cmd_generate(cfg, args):
    """Simulate the source, harder-contingency and target-system sets."""
    os.makedirs(cfg.path("data"), exist_ok=True)
    sim = cfg.simulation_config()
    spec = load_system_spec(cfg.system)
    trajs = generate_dataset(spec, cfg.n_scenarios, [cfg.seed, MAIN_STREAM],
        1, sim)
    if not trajs:
        raise ConfigError("no feasible scenario on %s" % cfg.system)
    manifest = {"seed": cfg.seed, "system": spec.name, "sets": {}}
    sets = dict(zip(("train", "val", "test"),
        experiments.split_dataset(trajs, cfg.split, cfg.seed)))

    if cfg.harder_order > 1 and cfg.harder_scenarios > 0:
        if cfg.harder_order <= len(spec.fault_lines()):
            sets["harder"] = generate_dataset(spec, cfg.harder_scenarios,
                [cfg.seed, HARDER_STREAM], cfg.harder_order, sim)
        else:
            logger.warning("%s has fewer than %d fault lines; no harder set",
                spec.name, cfg.harder_order)

    if cfg.target_system:
        target = load_system_spec(cfg.target_system)
        target_trajs = generate_dataset(target, cfg.target_scenarios,
            [cfg.seed, TARGET_STREAM], 1, sim)
        manifest["target_system"] = target.name
        sets.update(zip(("target_train", "target_val", "target_test"),
            experiments.split_dataset(target_trajs, cfg.split, cfg.seed)))

    for (name, members) in sorted(sets.items()):
        path = data_path(cfg, name)
        datafiles.write_trajectories(members, path)
        manifest["sets"][name] = _set_summary(members, path)
        logger.info("%s: %d trajectories", name, len(members))

    first = trajs[0].scenario
    manifest["first_scenario"] = {"lines": list(first.lines),
        "load_scale": first.load_scale, "duration": first.duration,
        "cct": critical_clearing_time(spec, first, sim)}
    _write_json(cfg.path("data", "manifest.json"), manifest)


def cmd_pretrain(cfg, args):
    """Surrogate pre-training of every array."""
    os.makedirs(cfg.out, exist_ok=True)
    config = cfg.model_config()
    log = TrainingLog(cfg.path("pretrain.jsonl"))
    params = surrogate_pretrain(config, cfg.pretrain_config(), cfg.seed, log)
    mask = FreezeMask.all_trainable(params.names())
    meta = _report_size(params, mask, "pretrain")
    meta["stage"] = "pretrain"
    save_checkpoint(params, mask, args.checkpoint_out or
        cfg.path("pretrain.ckpt"), meta)


def cmd_finetune_teaf(cfg, args):
    """Teacher forcing from the pre-trained checkpoint, then hard-case
    mining."""
    (params, mask) = _load_model(cfg, args.checkpoint or
        cfg.path("pretrain.ckpt"))
    mask = experiments.training_mask(params, cfg.profile, cfg.freeze)
    meta = _report_size(params, mask, "teaf")
    (params, hard) = teaf_train(params, mask, read_set(cfg, "train"),
        read_set(cfg, "val"), cfg.teaf_config(),
        TrainingLog(cfg.path("teaf.jsonl")))
    meta["stage"] = "teaf"
    save_checkpoint(params, mask, args.checkpoint_out or
        cfg.path("teaf.ckpt"), meta)
    _write_json(cfg.path("hard_cases.json"), hard.to_dict())


def cmd_finetune_schs(cfg, args):
    """Scheduled sampling on the hard cases mined by finetune-teaf."""
    (params, mask) = _load_model(cfg, args.checkpoint or
        cfg.path("teaf.ckpt"))
    hard_path = cfg.path("hard_cases.json")
    if not os.path.exists(hard_path):
        raise ConfigError("%s not found; run finetune-teaf first" %
            hard_path)
    with open(hard_path) as f:
        hard = HardCaseSet.from_dict(json.load(f))
    meta = _report_size(params, mask, "schs")
    params = schs_train(params, mask, hard.select(read_set(cfg, "train")),
        cfg.schs_config(), TrainingLog(cfg.path("schs.jsonl")))
    meta["stage"] = "schs"
    save_checkpoint(params, mask, args.checkpoint_out or
        cfg.path("schs.ckpt"), meta)


def cmd_evaluate(cfg, args):
    """Rollout metrics on every available test set."""
    path = args.checkpoint or cfg.path("schs.ckpt")
    (params, mask) = _load_model(cfg, path)
    os.makedirs(cfg.path("eval"), exist_ok=True)
    fingerprint = config_fingerprint(cfg.to_dict())
    for name in ("test", "harder", "target_test"):
        if not os.path.exists(data_path(cfg, name)):
            continue
        trajs = read_set(cfg, name)
        (report, results) = experiments.evaluate(params, trajs, fingerprint)
        report.write_json(cfg.path("eval", name+".json"))
        report.write_csv(cfg.path("eval", name+".csv"))
        _write_csv(cfg.path("eval", name+"_trajectories.csv"),
            ["trajectory", "category", "MAE", "MSE"],
            trajectory_errors(results, trajs, params.config.L_seq))
        if args.export_predictions:
            predicted = [as_trajectory(r, t, params.config.L_seq)
                for (r, t) in zip(results, trajs)]
            datafiles.write_trajectories(predicted,
                cfg.path("eval", name+"_pred.traj"))
            datafiles.export_csv(predicted,
                cfg.path("eval", name+"_pred.csv"))
        h = report["H"]
        if h is None:
            logger.info("%s: no trajectories", name)
        else:
            logger.info("%s: MAE_H %.4g MSE_H %.4g over %d trajectories",
                name, h["MAE"], h["MSE"], h["count"])


def cmd_ablate(cfg, args):
    """Variant grid over seeds, optionally with the pre-training benefit
    comparison."""
    (pretrained, mask) = _load_model(cfg, args.checkpoint or
        cfg.path("pretrain.ckpt"))
    (train, val, test) = (read_set(cfg, "train"), read_set(cfg, "val"),
        read_set(cfg, "test"))
    rows = experiments.ablate(cfg, pretrained, train, val, test)
    _write_csv(cfg.path("ablate.csv"), ["variant", "MAE_H", "MSE_H"], rows)
    if args.benefit:
        rows = experiments.pretrain_benefit(cfg, train, val,
            cfg.diagnose_windows)
        _write_csv(cfg.path("pretrain_benefit.csv"), ["seed",
            "val_mse_pretrained", "val_mse_random",
            "similarity_pretrained", "similarity_random"], rows)


def cmd_fewshot(cfg, args):
    """Few-shot curve on the target system."""
    (source, mask) = _load_model(cfg, args.checkpoint or
        cfg.path("schs.ckpt"))
    rows = experiments.fewshot(cfg, source, read_set(cfg, "target_train"),
        read_set(cfg, "target_val"), read_set(cfg, "target_test"))
    _write_csv(cfg.path("fewshot.csv"), ["fraction", "MAE_H", "MSE_H"], rows)


def cmd_diagnose(cfg, args):
    """Representation diagnostics, optionally against a second
    checkpoint."""
    out = cfg.path("diagnose")
    os.makedirs(out, exist_ok=True)
    trajs = datafiles.read_trajectories(args.dataset or
        data_path(cfg, "test"))
    threshold = cfg.threshold if args.threshold is None else args.threshold
    checkpoints = [("a", args.checkpoint or cfg.path("schs.ckpt"))]
    if args.compare:
        checkpoints.append(("b", args.compare))
    summaries = []
    for (tag, path) in checkpoints:
        (params, mask) = _load_model(cfg, path)
        (summary, records, features) = experiments.diagnose(params, trajs,
            threshold, cfg.diagnose_windows)
        summary["checkpoint"] = path
        summary["trainable_fraction"] = params.trainable_fraction(mask)
        summaries.append(summary)
        _write_json(os.path.join(out, "summary_%s.json" % tag), summary)
        _write_csv(os.path.join(out, "records_%s.csv" % tag),
            list(records[0].keys()), [list(r.values()) for r in records])
        d = params.config.d
        _write_csv(os.path.join(out, "features_%s.csv" % tag),
            ["trajectory", "channel", "patch"] +
            ["f%d" % i for i in range(d)], features)
    if len(summaries) == 2:
        keys = [k for k in summaries[0] if k != "checkpoint"]
        _write_csv(os.path.join(out, "compare.csv"), ["metric", "a", "b"],
            [[k, summaries[0][k], summaries[1][k]] for k in keys])


COMMANDS = {
    "generate": cmd_generate,
    "pretrain": cmd_pretrain,
    "finetune-teaf": cmd_finetune_teaf,
    "finetune-schs": cmd_finetune_schs,
    "evaluate": cmd_evaluate,
    "ablate": cmd_ablate,
    "fewshot": cmd_fewshot,
    "diagnose": cmd_diagnose,
}


def build_parser():
    parser = argparse.ArgumentParser(prog="gridseq",
        description="Transient-dynamics forecasting experiments.")
    parser.add_argument('command', choices=sorted(COMMANDS))
    parser.add_argument('--config', default=None)
    parser.add_argument('--seed', type=int, default=None)
    parser.add_argument('--out', default=None)
    parser.add_argument('--profile', choices=["desk", "full", "enc"],
        default=None)
    parser.add_argument('--log-level', default="INFO")
    parser.add_argument('--checkpoint', default=None)
    parser.add_argument('--checkpoint-out', default=None)
    parser.add_argument('--compare', default=None)
    parser.add_argument('--dataset', default=None)
    parser.add_argument('--threshold', type=float, default=None)
    parser.add_argument('--benefit', action='store_true')
    parser.add_argument('--export-predictions', action='store_true')
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code == 0 else EXIT_CONFIG
    logging.basicConfig(level=getattr(logging, args.log_level.upper(),
        logging.INFO), format=LOG_FORMAT)
    try:
        cfg = load_config(args.config, seed=args.seed, out=args.out,
            profile=args.profile)
        COMMANDS[args.command](cfg, args)
    except GridSeqError as e:
        logger.error("%s failed: %s", args.command, e)
        return e.exit_code
    except (IOError, OSError) as e:
        logger.error("%s failed: %s", args.command, e)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == '__main__':
    sys.exit(main())
