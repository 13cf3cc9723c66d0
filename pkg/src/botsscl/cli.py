"""``botsscl`` command-line entry point.

Every command writes a JSON report under ``--out`` that embeds the effective
config. Failures print a JSON error report on stderr and exit nonzero
(2 for configuration/parse errors, 1 otherwise).
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import subprocess
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import _backend
from .adversarial import attack_campaign, select_attack_samples
from .checkpoint import dumps, load_checkpoint, save_checkpoint
from .config import SWEEP_AXES, RunConfig, load_config
from .dataset import (
    SyntheticConfig,
    generate_synthetic,
    load_dataset,
    make_lobo_pair,
    save_dataset,
    split_dataset,
)
from .errors import BotSSCLError, ConfigurationError, ParseError
from .evaluation import evaluate, fit_pipeline, grad_check, lobo
from .model import LOSSES, init_model
from .schema import FeatureSchema

log = logging.getLogger("botsscl")

COMMANDS = ("gen-data", "train", "eval", "lobo", "attack", "sweep", "gradcheck", "export-embeddings")


def build_id():
    """``git describe`` of the source tree, or ``unknown`` outside a checkout."""
    try:
        out = subprocess.run(
            ["git", "describe", "--always", "--dirty", "--tags"],
            cwd=Path(__file__).resolve().parent,
            capture_output=True,
            text=True,
            timeout=5,
        )
        if out.returncode == 0 and out.stdout.strip():
            return out.stdout.strip()
    except (OSError, subprocess.SubprocessError):
        pass
    return "unknown"


class Run:
    def __init__(self, cfg: RunConfig, normalized: bool):
        self.cfg = cfg
        self.normalized = normalized
        self.out = Path(cfg.out)
        self.out.mkdir(parents=True, exist_ok=True)

    def report(self, name, command, body, path=None):
        doc = {
            "command": command,
            "build": build_id(),
            "backend": _backend.BACKEND,
            "seed": self.cfg.seed,
            "config": self.cfg.to_dict(),
            "normalized": self.normalized,
            **body,
        }
        if not self.normalized:
            doc["created_unix"] = time.time()
        path = Path(path) if path is not None else self.out / name
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(dumps(doc))
        log.info("wrote %s", path)
        return path

    def seconds(self, t):
        return 0.0 if self.normalized else t

    # data ---------------------------------------------------------------
    def synthetic_config(self):
        s = self.cfg.synthetic
        return SyntheticConfig(s.n_per_class, s.class_separation, self.cfg.seed, self.cfg.schema())

    def dataset(self):
        if self.cfg.paths.data:
            return load_dataset(self.cfg.paths.data)
        return generate_synthetic(self.synthetic_config())

    def target(self):
        if self.cfg.paths.target:
            return load_dataset(self.cfg.paths.target)
        s = self.cfg.synthetic
        return make_lobo_pair(self.synthetic_config(), s.shift, s.covariance_mix)[1]

    def split(self, ds):
        return split_dataset(ds, self.cfg.data.test_fraction, self.cfg.seed)

    def fit(self, train_ds, train_cfg=None, aug_cfg=None):
        t0 = time.perf_counter()
        pipe, hist = fit_pipeline(
            train_ds,
            train_cfg or self.cfg.train_config(),
            aug_cfg or self.cfg.augmentation_config(),
            self.cfg.probe_config(),
        )
        return pipe, hist, time.perf_counter() - t0


def cmd_gen_data(run: Run, args):
    s = run.cfg.synthetic
    a, b = make_lobo_pair(run.synthetic_config(), s.shift, s.covariance_mix)
    pa, pb = run.out / "data.csv", run.out / "data_target.csv"
    save_dataset(a, pa)
    save_dataset(b, pb)
    run.report(
        "gen_data_report.json",
        "gen-data",
        {"files": [str(pa), str(pb)], "rows": [len(a), len(b)], "width": a.width},
    )


def cmd_train(run: Run, args):
    ds = run.dataset()
    train_ds, _ = run.split(ds)
    pipe, hist, secs = run.fit(train_ds)
    ck = save_checkpoint(
        run.cfg.checkpoint_path,
        ds.schema,
        pipe,
        run.cfg.train_config(),
        run.cfg.augmentation_config(),
        run.cfg.probe_config(),
        hist,
        run.cfg.seed,
    )
    run.report(
        "train_report.json",
        "train",
        {
            "checkpoint": str(ck),
            "history": hist.to_dict(run.normalized),
            "train_rows": len(train_ds),
            "wall_clock_seconds": run.seconds(secs),
            "probe": {"epochs": pipe.probe.epochs, "converged": pipe.probe.converged},
        },
    )


def _checkpoint_and_split(run: Run):
    ck = load_checkpoint(run.cfg.checkpoint_path)
    ds = run.dataset()
    ck.check_schema(ds.schema)
    return ck, ds, run.split(ds)


def cmd_eval(run: Run, args):
    ck, _, (_, test_ds) = _checkpoint_and_split(run)
    rep = evaluate(ck.pipeline, test_ds)
    run.report(
        "eval_report.json",
        "eval",
        {
            "checkpoint": str(run.cfg.checkpoint_path),
            "params_fingerprint": ck.params.fingerprint(),
            "test_rows": len(test_ds),
            "metrics": rep.to_dict(),
        },
    )


def cmd_lobo(run: Run, args):
    a, b = run.dataset(), run.target()
    tc, ac, pc = run.cfg.train_config(), run.cfg.augmentation_config(), run.cfg.probe_config()
    frac, seed = run.cfg.data.test_fraction, run.cfg.seed
    results = {}
    for name, (src, dst) in {
        "within_a": (a, a),
        "a_to_b": (a, b),
        "within_b": (b, b),
        "b_to_a": (b, a),
    }.items():
        results[name] = lobo(src, dst, tc, ac, pc, frac, seed).to_dict()
    run.report(
        "lobo_report.json",
        "lobo",
        {
            "results": results,
            "macro_f1": {k: v["macro"]["f1"] for k, v in results.items()},
        },
    )


def cmd_attack(run: Run, args):
    ck, _, (_, test_ds) = _checkpoint_and_split(run)
    spec = run.cfg.attack_spec()
    idx = select_attack_samples(ck.pipeline, test_ds.rows, run.cfg.attack.n_each, run.cfg.seed)
    sub = test_ds.subset(idx)
    rep = attack_campaign(ck.pipeline, sub.rows, spec, ck.schema, ids=sub.ids)
    run.report("attack_report.json", "attack", {"attack": rep.to_dict(run.normalized)})


def cmd_sweep(run: Run, args):
    axis = args.axis
    if axis not in SWEEP_AXES:
        raise ConfigurationError(f"axis must be one of {SWEEP_AXES}", field="--axis")
    values = getattr(run.cfg.sweep, axis)
    if not values:
        raise ConfigurationError("sweep list is empty", field=f"sweep.{axis}")
    ds = run.dataset()
    train_ds, test_ds = run.split(ds)
    points = []
    for v in values:
        tc, ac = run.cfg.train_config(), run.cfg.augmentation_config()
        try:
            if axis == "corruption_rate":
                ac = replace(ac, corruption_rate=float(v))
            else:
                tc = replace(tc, **{axis: v})
        except ConfigurationError as exc:
            raise ConfigurationError(str(exc), field=f"sweep.{axis}") from None
        pipe, hist, secs = run.fit(train_ds, tc, ac)
        rep = evaluate(pipe, test_ds)
        path = run.report(
            f"sweep/{axis}={v}/eval_report.json",
            "sweep",
            {
                "axis": axis,
                "value": v,
                "metrics": rep.to_dict(),
                "final_loss": hist.losses[-1] if hist.losses else None,
                "wall_clock_seconds": run.seconds(secs),
            },
        )
        points.append({"value": v, "macro_f1": rep.macro["f1"], "report": str(path)})
    run.report("sweep_report.json", "sweep", {"axis": axis, "points": points})


def cmd_gradcheck(run: Run, args):
    g = run.cfg.gradcheck
    w = g.category_width
    schema = FeatureSchema(
        [f"u{i}" for i in range(w)], w, [f"t{i}" for i in range(w)], [f"p{i}" for i in range(w)]
    )
    rng = np.random.default_rng([run.cfg.seed, 0x6C])
    left = rng.standard_normal((g.n_pairs, schema.total_width))
    right = left + 0.3 * rng.standard_normal(left.shape)
    labels = np.arange(g.n_pairs) % 2
    results = {}
    for i, kind in enumerate(LOSSES):
        params = init_model(schema.widths, g.d, g.out_dim, seed=run.cfg.seed + i)
        worst, per = grad_check(
            kind, params, (left, right, labels), g.eps, g.temperature, per_tensor=True
        )
        results[kind] = {"max_relative_error": worst, "per_tensor": per}
    worst = max(r["max_relative_error"] for r in results.values())
    passed = worst <= g.tolerance
    run.report(
        "gradcheck_report.json",
        "gradcheck",
        {"max_relative_error": worst, "tolerance": g.tolerance, "passed": passed, "losses": results},
    )
    return 0 if passed else 1


def cmd_export_embeddings(run: Run, args):
    ck = load_checkpoint(run.cfg.checkpoint_path)
    ds = run.dataset()
    ck.check_schema(ds.schema)
    h = ck.pipeline.embed_raw(ds.rows)
    path = run.out / "embeddings.csv"
    with path.open("w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["id", *[f"h_{j}" for j in range(h.shape[1])], "label"])
        for i, row in enumerate(h):
            lab = "" if ds.labels is None else int(ds.labels[i])
            wr.writerow([ds.ids[i], *[repr(float(v)) for v in row], lab])
    run.report("export_report.json", "export-embeddings", {"file": str(path), "rows": len(h)})


HANDLERS = {
    "gen-data": cmd_gen_data,
    "train": cmd_train,
    "eval": cmd_eval,
    "lobo": cmd_lobo,
    "attack": cmd_attack,
    "sweep": cmd_sweep,
    "gradcheck": cmd_gradcheck,
    "export-embeddings": cmd_export_embeddings,
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigurationError(message, field="argv")


def make_parser():
    p = _Parser(prog="botsscl", description="Contrastive bot-detection pipeline.")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", help="TOML run configuration")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="dotted override, repeatable (e.g. train.epochs=10)")
    p.add_argument("--seed", type=int, help="global seed")
    p.add_argument("--out", help="output directory")
    p.add_argument("--axis", help="sweep axis: " + ", ".join(SWEEP_AXES))
    p.add_argument("--normalized", action="store_true",
                   help="zero wall-clock fields and omit timestamps")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def _error_report(exc, code):
    body = {"error": type(exc).__name__, "message": str(exc), "exit_code": code}
    if getattr(exc, "field", None) is not None:
        body["field"] = exc.field
    if isinstance(exc, ParseError):
        body["row"], body["column"] = exc.row, exc.column
    print(json.dumps(body, sort_keys=True), file=sys.stderr)
    return code


def main(argv=None):
    try:
        args = make_parser().parse_args(argv)
        logging.basicConfig(
            level=logging.INFO if args.verbose else logging.WARNING,
            format="%(levelname)s %(name)s: %(message)s",
        )
        cfg = load_config(args.config, args.set, args.seed, args.out)
        if args.command == "sweep" and not args.axis:
            raise ConfigurationError("sweep needs --axis", field="--axis")
        code = HANDLERS[args.command](Run(cfg, args.normalized), args)
        return code or 0
    except (ConfigurationError, ParseError) as exc:
        return _error_report(exc, 2)
    except (BotSSCLError, OSError) as exc:
        return _error_report(exc, 1)


if __name__ == "__main__":
    sys.exit(main())
