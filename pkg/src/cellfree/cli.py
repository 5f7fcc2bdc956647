"""Command-line front end: ``load-sweep``, ``compare`` and ``describe-config``.

Precedence is defaults < config file < command-line flags. Every run writes
``manifest.json`` next to its CSV/JSON outputs; passing that manifest back as
``--config`` replays the same recipe and reproduces the outputs byte for byte
(the manifest itself differs only in its timestamps).

Output schemas
--------------
load-sweep
    ``sum_throughput.csv``: K, tau_p, layout, sum_throughput
    ``ue_throughput.csv``: K, tau_p, layout, ue, covered, throughput
compare (one label per run, e.g. ``hfs_V1000`` or ``random``)
    ``throughput_<label>.csv``: layout, ue, covered, throughput
    ``queues_<label>_layout<i>.csv`` (``--trace-queues``, hfs/pfs only): slot, q0 .. q{K-1}
    ``summary.json``: per label sum, sum-log, percentiles, zero counts, slots
"""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import json
import logging
import shutil
import sys
from pathlib import Path

from . import __version__
from .config import ConfigError, SimConfig, dump_toml, from_mapping, load_config
from .engine import ExperimentResult, run_experiment
from .metrics import summarize_experiment
from .scheduler import Policy

log = logging.getLogger("cellfree")

EXIT_OK, EXIT_CONFIG, EXIT_IO = 0, 2, 3

# load sweeps average over many more drops than scheduler comparisons
SWEEP_LAYOUTS = 50
DEFAULT_POLICIES = "hfs,pfs,random,round_robin,max_sum_rate"
DEFAULT_V = "100,1000,10000"


def _int_list(text: str) -> list[int]:
    try:
        out = [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if not out:
        raise argparse.ArgumentTypeError("list must not be empty")
    return out


def _float_list(text: str) -> list[float]:
    try:
        out = [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None
    if not out:
        raise argparse.ArgumentTypeError("list must not be empty")
    return out


def _policy_list(text: str) -> list[Policy]:
    try:
        out = [Policy.parse(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None
    if not out:
        raise argparse.ArgumentTypeError("list must not be empty")
    return list(dict.fromkeys(out))


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="flat TOML config file or a run manifest (.json)")
    common.add_argument("--seed", type=int, help="base seed")
    common.add_argument("--layouts", type=int, help="number of independent layouts")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override any config key (repeatable)")
    common.add_argument("-v", "--verbose", action="store_true")

    run = argparse.ArgumentParser(add_help=False)
    run.add_argument("--out", type=Path, required=True, help="output directory")
    run.add_argument("--force", action="store_true", help="write into a non-empty output directory")
    run.add_argument("--workers", type=int, default=1, help="worker processes for layouts")

    parser = argparse.ArgumentParser(prog="cellfree", description="Cell-free massive MIMO uplink scheduling simulator")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    sweep = sub.add_parser("load-sweep", parents=[common, run], help="all-active sum throughput versus K")
    sweep.add_argument("--k-values", type=_int_list, help="comma-separated K values (K_act = K_tot = K)")
    sweep.add_argument("--tau-p-values", type=_int_list, help="comma-separated pilot lengths")

    cmp_ = sub.add_parser("compare", parents=[common, run], help="compare scheduling policies")
    cmp_.add_argument("--policies", type=_policy_list, help=f"comma-separated, default {DEFAULT_POLICIES}")
    cmp_.add_argument("--v-values", type=_float_list, help=f"V values for hfs/pfs, default {DEFAULT_V}")
    cmp_.add_argument("--trace-queues", action="store_true", help="write per-slot queue traces")

    sub.add_parser("describe-config", parents=[common], help="print the effective config as TOML")
    return parser


def _parse_set(items: list[str]) -> dict:
    out = {}
    for item in items:
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        text = value.strip()
        if text.lower() in ("true", "false"):
            out[key.strip()] = text.lower() == "true"
        else:
            out[key.strip()] = text
    return out


def _read_recipe(path: Path | None) -> dict:
    if path is None or path.suffix != ".json":
        return {}
    try:
        return json.loads(path.read_text(encoding="utf-8")).get("recipe", {})
    except (OSError, json.JSONDecodeError):
        return {}


def resolve_config(args, command_default_layouts: int | None = None) -> SimConfig:
    config = SimConfig()
    explicit = set()
    if args.config is not None:
        config = load_config(args.config)
        explicit = _config_keys(args.config)
    overrides = _parse_set(args.set)
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.layouts is not None:
        overrides["n_layouts"] = args.layouts
    if command_default_layouts and "n_layouts" not in explicit and "n_layouts" not in overrides:
        overrides["n_layouts"] = command_default_layouts
    return from_mapping(overrides, config).validate()


def _config_keys(path: Path) -> set:
    if path.suffix == ".json":
        return set(json.loads(path.read_text(encoding="utf-8"))["config"])
    from .config import tomllib
    return set(tomllib.loads(path.read_text(encoding="utf-8")))


class OutputDir:
    """Tracks files written by one command so a failed run can be rolled back."""

    def __init__(self, path: Path, force: bool):
        self.path = path
        self.created = False
        self.files: list[Path] = []
        if path.exists():
            if not path.is_dir():
                raise OSError(f"{path} exists and is not a directory")
            if any(path.iterdir()) and not force:
                raise FileExistsError(f"{path} is not empty; use --force to write into it")
        else:
            path.mkdir(parents=True)
            self.created = True

    def file(self, name: str) -> Path:
        p = self.path / name
        self.files.append(p)
        return p

    def write_csv(self, name: str, header, rows) -> None:
        with self.file(name).open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            w.writerows(rows)

    def write_json(self, name: str, obj) -> None:
        self.file(name).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")

    def rollback(self) -> None:
        if self.created:
            shutil.rmtree(self.path, ignore_errors=True)
            return
        for p in self.files:
            try:
                p.unlink()
            except FileNotFoundError:
                pass


def _fmt(x: float) -> str:
    return repr(float(x))


def _throughput_rows(result: ExperimentResult, prefix=()):
    for lay in result.layouts:
        for k, (thr, cov) in enumerate(zip(lay.throughput, lay.covered)):
            yield (*prefix, lay.index, k, int(cov), _fmt(thr))


def _write_manifest(out: OutputDir, command: str, config: SimConfig, recipe: dict, started: str) -> None:
    outputs = [p.name for p in out.files] + ["manifest.json"]
    out.write_json("manifest.json", {
        "command": command,
        "version": __version__,
        "seed": config.seed,
        "config": config.to_dict(),
        "recipe": recipe,
        "started": started,
        "finished": _now(),
        "outputs": sorted(outputs),
    })


def _now() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


def cmd_load_sweep(args, out: OutputDir, config: SimConfig) -> dict:
    recipe = _read_recipe(args.config)
    k_values = args.k_values or recipe.get("k_values") or [16, 32, 48, 64, 80, 96, 128]
    tau_values = args.tau_p_values or recipe.get("tau_p_values") or [config.tau_p]
    sums, ues = [], []
    for tau_p in tau_values:
        for k in k_values:
            cfg = config.replace(k_tot=k, k_act=k, tau_p=tau_p, policy=Policy.RANDOM).validate()
            log.info("load sweep K=%d tau_p=%d over %d layouts", k, tau_p, cfg.n_layouts)
            res = run_experiment(cfg, workers=args.workers)
            for lay in res.layouts:
                sums.append((k, tau_p, lay.index, _fmt(lay.throughput.sum())))
            ues.extend(_throughput_rows(res, (k, tau_p)))
    out.write_csv("sum_throughput.csv", ("K", "tau_p", "layout", "sum_throughput"), sums)
    out.write_csv("ue_throughput.csv", ("K", "tau_p", "layout", "ue", "covered", "throughput"), ues)
    return {"k_values": list(k_values), "tau_p_values": list(tau_values)}


def run_label(policy: Policy, v: float | None) -> str:
    return policy.value if v is None else f"{policy.value}_V{v:g}"


def compare_runs(policies, v_values):
    """(policy, V) pairs; V only matters for the queue-driven policies."""
    for p in policies:
        if p.uses_queues:
            for v in v_values:
                yield p, v
        else:
            yield p, None


def cmd_compare(args, out: OutputDir, config: SimConfig) -> dict:
    recipe = _read_recipe(args.config)
    policies = args.policies or [Policy.parse(p) for p in recipe.get("policies", DEFAULT_POLICIES.split(","))]
    v_values = args.v_values or recipe.get("v_values") or _float_list(DEFAULT_V)
    trace = args.trace_queues or bool(recipe.get("trace_queues", False))
    summary = {}
    for policy, v in compare_runs(policies, v_values):
        label = run_label(policy, v)
        cfg = config.replace(policy=policy, v_param=v if v is not None else config.v_param).validate()
        log.info("compare %s over %d layouts", label, cfg.n_layouts)
        # baselines never receive arrivals, so their queues stay at zero
        want_trace = trace and policy.uses_queues
        res = run_experiment(cfg, workers=args.workers, trace=want_trace)
        out.write_csv(f"throughput_{label}.csv", ("layout", "ue", "covered", "throughput"), _throughput_rows(res))
        if want_trace:
            for lay in res.layouts:
                header = ["slot"] + [f"q{k}" for k in range(cfg.k_tot)]
                rows = ([t] + [_fmt(q) for q in row] for t, row in enumerate(lay.queue_trace))
                out.write_csv(f"queues_{label}_layout{lay.index}.csv", header, rows)
        s = summarize_experiment(res)
        s.pop("cdf")
        s["policy"] = policy.value
        s["v_param"] = v
        summary[label] = s
    out.write_json("summary.json", summary)
    return {"policies": [p.value for p in policies], "v_values": list(v_values), "trace_queues": trace}


COMMANDS = {"load-sweep": cmd_load_sweep, "compare": cmd_compare}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "describe-config":
            sys.stdout.write(dump_toml(resolve_config(args)))
            return EXIT_OK
        layouts = SWEEP_LAYOUTS if args.command == "load-sweep" else None
        config = resolve_config(args, layouts)
        if args.workers < 1:
            raise ConfigError("--workers must be >= 1")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO

    try:
        out = OutputDir(args.out, args.force)
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    started = _now()
    try:
        recipe = COMMANDS[args.command](args, out, config)
        _write_manifest(out, args.command, config, recipe, started)
    except ConfigError as exc:
        out.rollback()
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        out.rollback()
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except BaseException:
        out.rollback()
        raise
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
