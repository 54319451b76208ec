# Copyright 2025 VenkatSambath
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.
"""
Command-line driver for the two-phase compression pipeline.

    train-teacher      baseline ViT on the grating task        -> teacher.mvc, teacher_metrics.csv
    compress           shared + multiplexed student from it    -> student_init.mvc, param_report.json
    distill            weight distillation of the student      -> student.mvc, distill_metrics.csv
    eval               top-1 accuracy of a checkpoint          -> stdout JSON
    diagnose-cka       per-layer CKA against a reference       -> cka.csv
    diagnose-gradnorm  per-layer gradient norms, one epoch     -> gradnorm.csv (+ stdout JSON)
    report-params      parameter accounting of a config        -> stdout JSON
    experiment         WS vs WS+MUX over several seeds         -> experiment.json
"""
import argparse
import logging
import os

from pydantic import ValidationError

from errors import VitMuxError

logger = logging.getLogger(__name__)

COMMANDS = (
    "train-teacher",
    "compress",
    "distill",
    "eval",
    "diagnose-cka",
    "diagnose-gradnorm",
    "report-params",
    "experiment",
)


class Outputs:
    """Output paths of one command; files it created are removed if the command fails."""

    def __init__(self, out_dir: str):
        self.out_dir = out_dir
        self._fresh: list[str] = []

    def path(self, name: str, override: str | None = None) -> str:
        path = override or os.path.join(self.out_dir, name)
        if not os.path.exists(path):
            self._fresh.append(path)
        return path

    def discard(self) -> None:
        for path in self._fresh:
            if os.path.exists(path):
                os.remove(path)
                logger.info("removed partial output %s", path)


def build_parser() -> argparse.ArgumentParser:
    from cli.run_config import add_override_flags

    parser = argparse.ArgumentParser(prog="vitmux", description="Weight multiplexing for small vision transformers")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", default=None, help="run config YAML (default: config.yaml)")
        add_override_flags(p)
        if name in ("compress", "distill", "diagnose-gradnorm", "experiment"):
            p.add_argument("--teacher", default=None, help="teacher checkpoint (default: <out_dir>/teacher.mvc)")
        if name in ("distill", "diagnose-gradnorm"):
            p.add_argument("--student", default=None, help="student checkpoint (default: <out_dir>/student_init.mvc)")
        if name in ("eval", "diagnose-cka"):
            p.add_argument("--checkpoint", required=True)
        if name == "diagnose-cka":
            p.add_argument("--reference", required=True, help="checkpoint the layers are compared against")
        if name in ("distill", "diagnose-gradnorm"):
            p.add_argument("--trace-layers", action="store_true", help="also log per-layer gradient norms")
        if name == "experiment":
            p.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
        p.add_argument("--out", default=None, help="explicit path for the main output file")
    return parser


def _run_config(args):
    from cli.run_config import load_run_config, overrides_from_args

    return load_run_config(args.config, overrides_from_args(args))


def _with_model(run_cfg, model_cfg):
    return run_cfg.model_copy(update={"model": model_cfg})


def cmd_train_teacher(args, run_cfg, out: Outputs) -> None:
    from cli.checkpoint import save_checkpoint
    from cli.dataset import make_splits
    from cli.reports import write_csv
    from distill.trainer import train_classifier
    from transformer.model import build_vit

    ckpt_path = out.path("teacher.mvc", args.out)
    metrics_path = out.path("teacher_metrics.csv")
    train, test = make_splits(run_cfg)
    model = build_vit(run_cfg.model, seed=run_cfg.optim.seed)
    model, metrics = train_classifier(model, train, test, run_cfg.optim)
    save_checkpoint(model, run_cfg, ckpt_path)
    write_csv(metrics, metrics_path)


def cmd_compress(args, run_cfg, out: Outputs) -> None:
    from cli.checkpoint import read_checkpoint, save_checkpoint
    from cli.reports import to_json, write_json
    from multiplex.compact import build_compact_model
    from multiplex.report import param_report

    teacher = read_checkpoint(args.teacher or os.path.join(out.out_dir, "teacher.mvc"))
    run_cfg = _with_model(run_cfg, teacher.model.cfg)
    plan = run_cfg.sharing_plan()
    student = build_compact_model(
        run_cfg.model, plan, run_cfg.transforms, teacher=teacher.model, seed=run_cfg.optim.seed
    )
    report = param_report(student)
    save_checkpoint(student, run_cfg, out.path("student_init.mvc", args.out))
    write_json(report, out.path("param_report.json"))
    print(to_json(report))


def cmd_distill(args, run_cfg, out: Outputs) -> None:
    from cli.checkpoint import read_checkpoint, save_checkpoint
    from cli.dataset import make_splits
    from cli.reports import write_csv
    from distill.trainer import train_distill

    teacher = read_checkpoint(args.teacher or os.path.join(out.out_dir, "teacher.mvc"))
    student = read_checkpoint(args.student or os.path.join(out.out_dir, "student_init.mvc"))
    ckpt_path = out.path("student.mvc", args.out)
    metrics_path = out.path("distill_metrics.csv")
    run_cfg = _with_model(run_cfg, student.model.cfg)
    train, test = make_splits(run_cfg)
    model, metrics = train_distill(
        student.model, teacher.model, train, test, run_cfg.optim, run_cfg.distill, trace_layers=args.trace_layers
    )
    save_checkpoint(model, run_cfg, ckpt_path, metadata=student.metadata)
    write_csv(metrics, metrics_path)


def cmd_eval(args, run_cfg, out: Outputs) -> None:
    from cli.checkpoint import read_checkpoint
    from cli.dataset import make_splits
    from cli.reports import to_json
    from distill.trainer import evaluate

    ckpt = read_checkpoint(args.checkpoint)
    _, test = make_splits(_with_model(run_cfg, ckpt.model.cfg))
    print(to_json({"top1": evaluate(ckpt.model, test)}))


def cmd_diagnose_cka(args, run_cfg, out: Outputs) -> None:
    import pandas as pd

    from cli.checkpoint import read_checkpoint
    from cli.dataset import probe_batch
    from cli.reports import write_csv
    from diagnostics.cka import layer_similarity

    reference = read_checkpoint(args.reference)
    model = read_checkpoint(args.checkpoint)
    probe = probe_batch(_with_model(run_cfg, reference.model.cfg))
    curve = layer_similarity(reference.model, model.model, probe)
    write_csv(pd.DataFrame(curve.rows(), columns=["layer", "cka", "activation"]), out.path("cka.csv", args.out))


def cmd_diagnose_gradnorm(args, run_cfg, out: Outputs) -> None:
    import math

    from cli.checkpoint import read_checkpoint
    from cli.dataset import make_splits
    from cli.experiment import first_epoch_spread
    from cli.reports import to_json, write_csv
    from distill.trainer import train_distill

    teacher = read_checkpoint(args.teacher or os.path.join(out.out_dir, "teacher.mvc"))
    student = read_checkpoint(args.student or os.path.join(out.out_dir, "student_init.mvc"))
    run_cfg = _with_model(run_cfg, student.model.cfg)
    train, _ = make_splits(run_cfg)
    optim = run_cfg.optim.model_copy(update={"epochs": max(1, run_cfg.optim.epochs)})
    steps = math.ceil(len(train.labels) / optim.batch_size)
    _, metrics = train_distill(
        student.model, teacher.model, train, None, optim, run_cfg.distill, trace_layers=True, max_steps=steps
    )
    columns = ["step"] + [c for c in metrics.columns if c.startswith("grad_norm_l")]
    write_csv(metrics[columns], out.path("gradnorm.csv", args.out))
    print(to_json({"mean_spread": first_epoch_spread(metrics)}))


def cmd_report_params(args, run_cfg, out: Outputs) -> None:
    from cli.reports import to_json
    from multiplex.compact import compact_layout
    from multiplex.report import param_report

    plan = run_cfg.sharing_plan()
    print(to_json(param_report(compact_layout(run_cfg.model, plan, run_cfg.transforms), plan)))


def cmd_experiment(args, run_cfg, out: Outputs) -> None:
    from cli.checkpoint import read_checkpoint
    from cli.dataset import make_splits, probe_batch
    from cli.experiment import run_experiment
    from cli.reports import write_json
    from distill.trainer import train_classifier
    from transformer.model import build_vit

    if args.teacher:
        teacher = read_checkpoint(args.teacher).model
        run_cfg = _with_model(run_cfg, teacher.cfg)
    else:
        teacher = None
    train, test = make_splits(run_cfg)
    if teacher is None:
        teacher, _ = train_classifier(build_vit(run_cfg.model, seed=run_cfg.optim.seed), train, test, run_cfg.optim)
    summary = run_experiment(run_cfg, teacher, train, test, probe_batch(run_cfg), args.seeds)
    write_json(summary, out.path("experiment.json", args.out))


HANDLERS = {
    "train-teacher": cmd_train_teacher,
    "compress": cmd_compress,
    "distill": cmd_distill,
    "eval": cmd_eval,
    "diagnose-cka": cmd_diagnose_cka,
    "diagnose-gradnorm": cmd_diagnose_gradnorm,
    "report-params": cmd_report_params,
    "experiment": cmd_experiment,
}


def run(argv: list[str] | None = None) -> int:
    """Parse argv, run one command, return the process exit status."""
    args = build_parser().parse_args(argv)
    out = None
    try:
        run_cfg = _run_config(args)
        out = Outputs(run_cfg.output.out_dir)
        logger.info("%s (out_dir=%s)", args.command, out.out_dir)
        HANDLERS[args.command](args, run_cfg, out)
    except (VitMuxError, ValidationError, OSError) as exc:
        logger.error("%s failed: %s", args.command, exc)
        if out is not None:
            out.discard()
        return 1
    return 0