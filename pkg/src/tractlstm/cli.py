"""Command-line interface: ``tractlstm inspect|prune|synth|train|eval|report|replay``.

Exit codes: 0 success, 1 usage/config error, 2 data/parse error,
3 numerical failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import platform
import sys
import tempfile
import time
from contextlib import nullcontext

import numpy as np

from . import __version__
from . import config as configmod
from .errors import BadConfig, NonFiniteGradient, TractError
from .harness.data import PROTOCOLS, Dataset, split_train_val
from .harness.protocols import ProtocolRunner, evaluate_models
from .harness.report import (format_report, history_csv, reports_from_json, reports_to_json,
                             summary_csv, summary_table)
from .harness.training import train
from .nn import checkpoint
from .pruning import prune_fiber
from .synth import CLASS_NAMES, cohort_configs, generate_brain
from .trk_io import (Tractogram, attach_labels, read_labels, read_trk, sidecar_path, write_labels,
                     write_trk)

log = logging.getLogger("tractlstm")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class Run:
    """Collects what a command consumed and produced for its manifest."""

    def __init__(self, command: str, argv: list[str]):
        self.command = command
        self.argv = list(argv)
        self.inputs: dict[str, str] = {}
        self.outputs: list[str] = []
        self.config: dict = {}
        self.seed = None
        self.started = time.time()

    def read(self, path: str) -> bytes:
        with open(path, "rb") as fh:
            data = fh.read()
        self.inputs[path] = hashlib.sha256(data).hexdigest()
        return data

    def write(self, path: str, data: bytes | str) -> None:
        if isinstance(data, str):
            data = data.encode("utf-8")
        d = os.path.dirname(path)
        if d:
            os.makedirs(d, exist_ok=True)
        with open(path, "wb") as fh:
            fh.write(data)
        self.outputs.append(path)

    def manifest(self) -> dict:
        return dict(command=self.command, argv=self.argv, config=self.config, seed=self.seed,
                    inputs=self.inputs, outputs=self.outputs, tool_version=__version__,
                    python=platform.python_version(), numpy=np.__version__,
                    duration_s=round(time.time() - self.started, 3))

    def save_manifest(self, path: str) -> None:
        text = json.dumps(self.manifest(), indent=1, sort_keys=True) + "\n"
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)


# -- helpers -----------------------------------------------------------------

def _load_tractogram(run: Run, trk: str, labels: str | None = None, need_labels: bool = False):
    t = read_trk(run.read(trk))
    lbl = labels or sidecar_path(trk)
    if os.path.exists(lbl):
        t = attach_labels(t, read_labels(run.read(lbl).decode("ascii")))
        return t, lbl
    if need_labels or labels:
        raise FileNotFoundError(f"label file {lbl} not found")
    return t, None


def _load_config(run: Run, args):
    if args.config:
        run.read(args.config)
    train_cfg, synth_cfg, extra = configmod.load(args.config, args.set or [])
    run.config = configmod.as_dict(train_cfg, synth_cfg, extra)
    return train_cfg, synth_cfg, extra


def _datasets(run: Run, paths: list[str], cfg, prepruned: bool) -> list[Dataset]:
    out = []
    keep = 1.0 if prepruned else cfg.keep_fraction
    for k, p in enumerate(paths):
        t, _ = _load_tractogram(run, p, need_labels=True)
        brain_id = os.path.splitext(os.path.basename(p))[0]
        out.append(Dataset.from_tractogram(t, t.labels, brain_id, k, keep, cfg.max_len))
    return out


# -- commands ----------------------------------------------------------------

def cmd_inspect(args, run: Run) -> None:
    t, lbl = _load_tractogram(run, args.trk, args.labels)
    h = t.header
    counts = np.array([len(f) for f in t.fibers]) if t.fibers else np.zeros(1, dtype=int)
    lines = [
        f"file          {args.trk}",
        f"magic         {h.magic!r}",
        f"dim           {h.dim}",
        f"voxel_size    {h.voxel_size}",
        f"origin        {h.origin}",
        f"n_scalars     {h.n_scalars}",
        f"n_properties  {h.n_properties}",
        f"voxel_order   {h.voxel_order.decode('latin1')}",
        f"n_count       {h.n_count}",
        f"version       {h.version}",
        f"hdr_size      {h.hdr_size}",
        f"fibers        {len(t)}",
        f"points min    {int(counts.min())}",
        f"points mean   {float(counts.mean()):.2f}",
        f"points max    {int(counts.max())}",
    ]
    if lbl:
        lines.append(f"labels        {lbl}")
        per_class = np.bincount(np.array(t.labels, dtype=int), minlength=9)
        for c, n in enumerate(per_class):
            lines.append(f"class {c} {CLASS_NAMES[c]:<20} {int(n)}")
    print("\n".join(lines))


def cmd_prune(args, run: Run) -> None:
    if not 0.0 < args.keep_fraction <= 1.0:
        raise BadConfig(f"keep_fraction must lie in (0, 1], got {args.keep_fraction}")
    run.config = {"keep_fraction": args.keep_fraction}
    t, lbl = _load_tractogram(run, args.input, args.labels)
    fibers = [prune_fiber(f, args.keep_fraction) if len(f) >= 2 else f for f in t.fibers]
    run.write(args.output, write_trk(Tractogram(t.header, fibers)))
    if lbl:
        run.write(sidecar_path(args.output), write_labels(t.labels))


def cmd_synth(args, run: Run) -> None:
    _, synth_cfg, extra = _load_config(run, args)
    n = args.brains or extra["n_brains"]
    run.seed = synth_cfg.seed
    for cfg in cohort_configs(synth_cfg, n, synth_cfg.seed):
        t, labels = generate_brain(cfg)
        base = os.path.join(args.out_dir, cfg.brain_id)
        run.write(base + ".trk", write_trk(t))
        run.write(base + ".lbl", write_labels(labels))


def cmd_train(args, run: Run) -> None:
    cfg, _, _ = _load_config(run, args)
    level = args.level or cfg.level
    run.seed = cfg.seed
    datasets = _datasets(run, args.data, cfg, args.prepruned)
    splits = [split_train_val(d, cfg) for d in datasets]
    tr = Dataset.concat([s[0] for s in splits], "train")
    va = Dataset.concat([s[1] for s in splits], "val")
    if level == "micro":
        tr, va = tr.white(), va.white()
    params, history = train(cfg, tr, va, level)
    meta = dict(level=level, brains=[d.brain_id for d in datasets], config=run.config)
    run.write(args.out, checkpoint.dumps(params, meta))
    run.write(args.out + ".history.csv", history_csv(history))


def cmd_eval(args, run: Run) -> None:
    cfg, _, _ = _load_config(run, args)
    run.seed = cfg.seed
    datasets = _datasets(run, args.data, cfg, args.prepruned)
    if bool(args.macro) != bool(args.micro):
        raise BadConfig("--macro and --micro must be given together")
    if args.macro:
        macro, _ = checkpoint.loads(run.read(args.macro))
        micro, _ = checkpoint.loads(run.read(args.micro))
        reports = _eval_fixed(args.protocol, datasets, cfg, macro, micro)
    else:
        reports = ProtocolRunner(datasets, cfg).run(args.protocol)
    base = os.path.join(args.out_dir, f"eval_{args.protocol}")
    run.write(base + ".json", reports_to_json(reports))
    run.write(base + ".txt", format_report(reports))
    run.write(base + ".summary.csv", summary_csv(reports))
    for r in reports:
        if r.history:
            run.write(f"{base}.history.{r.brain}.{r.level}.csv", history_csv(r.history))


def _eval_fixed(protocol, datasets, cfg, macro, micro):
    """Evaluate given checkpoints on the test fibers a protocol would hold out."""
    out = []
    if protocol == "intra":
        for d in datasets:
            out += evaluate_models(macro, micro, split_train_val(d, cfg)[2], "intra", d.brain_id,
                                   batch_size=cfg.eval_batch_size)
    elif protocol == "inter":
        for d in datasets:
            out += evaluate_models(macro, micro, d, "inter", d.brain_id, batch_size=cfg.eval_batch_size)
    else:
        _, _, test = ProtocolRunner(datasets, cfg).merged_split()
        out += evaluate_models(macro, micro, test, "merged", "merged", batch_size=cfg.eval_batch_size)
    return out


def cmd_report(args, run: Run) -> None:
    reports = []
    for p in args.reports:
        reports += reports_from_json(run.read(p).decode("utf-8"))
    run.write(args.out, summary_table(reports))
    run.write(os.path.splitext(args.out)[0] + ".csv", summary_csv(reports))


def cmd_replay(args, run: Run) -> int:
    """Re-run a recorded command with the exact resolved configuration it used."""
    with open(args.manifest, encoding="utf-8") as fh:
        manifest = json.load(fh)
    argv = _strip_config_args(manifest["argv"])
    cfg = manifest.get("config") or {}
    if manifest["command"] not in CONFIGURED:
        return main(manifest["argv"])
    with tempfile.NamedTemporaryFile("w", suffix=".cfg", delete=False) as fh:
        for k, v in cfg.items():
            fh.write(f"{k} = {', '.join(map(str, v)) if isinstance(v, list) else v}\n")
        path = fh.name
    try:
        return main(argv + ["--config", path])
    finally:
        os.unlink(path)


def _strip_config_args(argv: list[str]) -> list[str]:
    out, skip = [], False
    for a in argv:
        if skip:
            skip = False
            continue
        if a in ("--config", "--set"):
            skip = True
            continue
        if a.startswith("--config=") or a.startswith("--set="):
            continue
        out.append(a)
    return out


# -- argument parsing ----------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="tractlstm", description=__doc__.split("\n")[0])
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    p.add_argument("--threads", type=int, default=1, help="BLAS threads (default 1, bit-reproducible)")
    sub = p.add_subparsers(dest="command", required=True)

    def with_config(sp):
        sp.add_argument("--config", help="flat key = value config file")
        sp.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one config key")

    def with_manifest(sp):
        sp.add_argument("--manifest", help="where to write the run manifest")

    sp = sub.add_parser("inspect", help="print header fields and fiber statistics")
    sp.add_argument("trk")
    sp.add_argument("--labels", help="label sidecar (default: <trk>.lbl if present)")
    sp.add_argument("--manifest", help="also write a run manifest here")

    sp = sub.add_parser("prune", help="keep each fiber's highest-curvature points")
    sp.add_argument("input")
    sp.add_argument("output")
    sp.add_argument("--keep-fraction", type=float, default=0.75)
    sp.add_argument("--labels", help="label sidecar (default: <input>.lbl if present)")
    with_manifest(sp)

    sp = sub.add_parser("synth", help="generate a synthetic labelled cohort")
    sp.add_argument("--out-dir", required=True)
    sp.add_argument("--brains", type=int, help="number of brains (overrides synth.n_brains)")
    with_config(sp)
    with_manifest(sp)

    sp = sub.add_parser("train", help="train a macro or micro model")
    sp.add_argument("--data", nargs="+", required=True, help=".trk files with .lbl sidecars")
    sp.add_argument("--level", choices=("macro", "micro"))
    sp.add_argument("--out", required=True, help="checkpoint path")
    sp.add_argument("--prepruned", action="store_true", help="inputs are already pruned")
    with_config(sp)
    with_manifest(sp)

    sp = sub.add_parser("eval", help="run an evaluation protocol")
    sp.add_argument("--protocol", choices=PROTOCOLS, required=True)
    sp.add_argument("--data", nargs="+", required=True)
    sp.add_argument("--macro", help="macro checkpoint (skip training)")
    sp.add_argument("--micro", help="micro checkpoint (skip training)")
    sp.add_argument("--out-dir", required=True)
    sp.add_argument("--prepruned", action="store_true")
    with_config(sp)
    with_manifest(sp)

    sp = sub.add_parser("report", help="merge evaluation outputs into one summary table")
    sp.add_argument("reports", nargs="+", help="eval_*.json files")
    sp.add_argument("--out", required=True)
    with_manifest(sp)

    sp = sub.add_parser("replay", help="re-run the command recorded in a manifest")
    sp.add_argument("manifest")
    return p


CONFIGURED = ("synth", "train", "eval")
COMMANDS = {"inspect": cmd_inspect, "prune": cmd_prune, "synth": cmd_synth, "train": cmd_train,
            "eval": cmd_eval, "report": cmd_report}


def _default_manifest(args) -> str | None:
    if getattr(args, "manifest", None):
        return args.manifest
    if args.command == "prune":
        return args.output + ".manifest.json"
    if args.command in ("synth", "eval"):
        return os.path.join(args.out_dir, f"{args.command}.manifest.json")
    if args.command in ("train", "report"):
        return args.out + ".manifest.json"
    return None


def _thread_limit(n: int):
    try:
        from threadpoolctl import threadpool_limits
    except ImportError:  # pragma: no cover
        return nullcontext()
    return threadpool_limits(limits=n)


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s: %(message)s")
    if args.command == "replay":
        try:
            return cmd_replay(args, None)
        except (OSError, ValueError, KeyError) as exc:
            print(f"error: cannot replay {args.manifest}: {exc}", file=sys.stderr)
            return EXIT_DATA
    run = Run(args.command, argv)
    try:
        with _thread_limit(args.threads):
            COMMANDS[args.command](args, run)
    except BadConfig as exc:
        for problem in exc.problems:
            print(f"config error: {problem}", file=sys.stderr)
        return EXIT_USAGE
    except NonFiniteGradient as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (TractError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    path = _default_manifest(args)
    if path:
        run.save_manifest(path)
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
