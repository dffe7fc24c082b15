"""Command-line interface: certify, train, lottery, ensemble, bounds,
verify-known, and demo subcommands with reproducible seeding and file output.

Budgets are counted in MIP rounds and branch-and-bound nodes, never wall
clock, so identical invocations reproduce identical outputs bit for bit.
Exit codes: 0 success, 1 contract or parse error, 2 solver budget exhausted.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from dataclasses import asdict, dataclass, field, replace
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __name__ as _pkg
from . import bounds as bounds_mod
from . import fixtures as fixtures_mod
from . import lottery as lottery_mod
from . import net as netmod
from . import trainer as trainer_mod
from .certifier import certify, grid_oracle
from .errors import ContractViolation, ParseError, RefusalError, SolverError
from .mechanism import (
    Mechanism,
    TypeProfile,
    load_mechanism,
    payments,
    profiles_to_text,
    save_mechanism,
)

log = logging.getLogger(_pkg)

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_BUDGET = 2


def _now():
    return datetime.now(timezone.utc).isoformat()


@dataclass
class RunManifest:
    """Invocation record sufficient to replay a run."""

    subcommand: str
    args: dict
    seed: int | None
    version: str
    started: str
    finished: str | None = None
    status: str = "running"
    outputs: list = field(default_factory=list)


class _ManifestWriter:
    def __init__(self, subcommand, args_ns, out_dir):
        seed = getattr(args_ns, "seed", None)
        from importlib.metadata import version
        try:
            ver = version("redistrib")
        except Exception:
            ver = "unknown"
        self.manifest = RunManifest(
            subcommand=subcommand,
            args={k: v for k, v in vars(args_ns).items() if k != "func"},
            seed=seed,
            version=ver,
            started=_now(),
        )
        self.path = Path(out_dir) / "manifest.json" if out_dir else None
        self.flush()

    def add_output(self, path):
        self.manifest.outputs.append(str(path))

    def finish(self, status="done"):
        self.manifest.finished = _now()
        self.manifest.status = status
        self.flush()

    def flush(self):
        if self.path is not None:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            self.path.write_text(json.dumps(asdict(self.manifest), indent=2) + "\n",
                                 encoding="utf-8")

    def as_dict(self):
        return asdict(self.manifest)


def _emit(payload, args):
    """Results go to --out/result.json when given, otherwise to stdout."""
    text = json.dumps(payload, indent=2) + "\n"
    out = getattr(args, "out", None)
    if out:
        path = Path(out) / "result.json"
        path.write_text(text, encoding="utf-8")
    sys.stdout.write(text)


def _profile_json(profile):
    return [float(v) for v in profile.values]


def _cert_json(cert):
    return {
        "eps_left": cert.eps_left,
        "eps_right": cert.eps_right,
        "eps_total": cert.total,
        "theta_left": _profile_json(cert.theta_left),
        "theta_right": _profile_json(cert.theta_right),
        "alpha_goal": cert.alpha_goal,
        "nodes_left": cert.nodes_left,
        "nodes_right": cert.nodes_right,
        "exact": cert.exact,
    }


# -- subcommands -----------------------------------------------------------------

def _cmd_certify(args, manifest):
    mech = load_mechanism(args.mech)
    cert = certify(mech.net, mech.n, args.alpha, shift=mech.shift,
                   node_budget=args.node_budget)
    payload = {"n": mech.n, "certificate": _cert_json(cert)}
    if args.grid:
        for side in ("left", "right"):
            value, profile = grid_oracle(mech.net, mech.n, args.alpha, args.grid,
                                         side=side, shift=mech.shift)
            payload[f"grid_{side}"] = {"value": value,
                                       "profile": _profile_json(profile)}
    payload["manifest"] = manifest.as_dict()
    _emit(payload, args)
    return EXIT_OK if cert.exact else EXIT_BUDGET


def _cmd_bounds(args, manifest):
    result = bounds_mod.compute_bounds(args.n)
    payload = {
        "n": result.n,
        "alpha_lower_manual": result.alpha_lower_manual,
        "alpha_upper": result.alpha_upper,
        "defining_profiles": [_profile_json(p) for p in result.defining_profiles],
        "manifest": manifest.as_dict(),
    }
    _emit(payload, args)
    return EXIT_OK


def _cmd_demo(args, manifest):
    mech = load_mechanism(args.mech)
    profile = TypeProfile.of(float(v) for v in args.profile.split(","))
    if profile.n != mech.n:
        raise ContractViolation(
            f"profile has {profile.n} agents, mechanism expects {mech.n}")
    build, pays = payments(mech, profile)
    # agents keep their valuations when built, their cost shares otherwise
    valuation = sum(profile.values) if build else 1.0
    payload = {
        "n": mech.n,
        "profile": _profile_json(profile),
        "build": build,
        "payments": pays,
        "total_payment": sum(pays),
        "total_utility": valuation + sum(pays),
        "manifest": manifest.as_dict(),
    }
    _emit(payload, args)
    return EXIT_OK


def _cmd_verify_known(args, manifest):
    rows = []
    worst_exit = EXIT_OK
    alpha = bounds_mod.theoretical_upper_bound(args.n)
    for km in fixtures_mod.known_mechanisms(args.n):
        cert = certify(km.mechanism.net, km.n, alpha, shift=km.mechanism.shift,
                       node_budget=args.node_budget)
        if not cert.exact:
            worst_exit = EXIT_BUDGET
        rows.append({
            "name": km.name,
            "n": km.n,
            "alpha": alpha,
            "gap": cert.total,
            "eps_left": cert.eps_left,
            "eps_right": cert.eps_right,
            "nodes": cert.nodes_left + cert.nodes_right,
            "exact": cert.exact,
        })
    header = f"{'name':<18} {'gap':>12} {'eps_left':>12} {'eps_right':>12} {'nodes':>8}"
    print(header)
    for r in rows:
        print(f"{r['name']:<18} {r['gap']:>12.3e} {r['eps_left']:>12.3e} "
              f"{r['eps_right']:>12.3e} {r['nodes']:>8d}")
    payload = {"n": args.n, "alpha": alpha, "mechanisms": rows,
               "manifest": manifest.as_dict()}
    if args.out:
        _emit(payload, args)
    return worst_exit


def _train_config(args):
    return trainer_mod.TrainConfig(
        learning_rate=args.learning_rate,
        epochs_per_round=args.epochs,
        mip_rounds=args.mip_rounds,
        seed=args.seed,
        node_budget=args.node_budget,
    )


def _write_history_csv(path, history):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["round", "alpha_goal", "mean_loss", "eps_left",
                         "eps_right", "achieved_ratio"])
        for rec in history:
            writer.writerow([rec.round, repr(rec.alpha_goal), repr(rec.mean_loss),
                             repr(rec.eps_left), repr(rec.eps_right),
                             repr(rec.achieved_ratio)])


def _cmd_train(args, manifest):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    hidden = tuple(int(k) for k in args.hidden.split(","))
    net = netmod.init_random(args.n - 1, hidden, args.seed)
    config = _train_config(args)
    result = trainer_mod.wct_run(net, args.n, config)

    best_path = out / "best_mechanism.json"
    save_mechanism(result.best_mechanism, best_path)
    manifest.add_output(best_path)
    store_path = out / "wcp_store.txt"
    store_path.write_text(profiles_to_text(result.store.profiles), encoding="utf-8")
    manifest.add_output(store_path)
    csv_path = out / "history.csv"
    _write_history_csv(csv_path, result.history)
    manifest.add_output(csv_path)

    payload = {
        "n": args.n,
        "hidden": list(hidden),
        "seed": args.seed,
        "mip_rounds": config.mip_rounds,
        "best_ratio": result.best_ratio,
        "final_alpha_goal": result.goal.alpha_goal,
        "alpha_upper": result.goal.alpha_upper,
        "store_size": len(result.store),
        "outputs": [str(best_path), str(store_path), str(csv_path)],
        "manifest": manifest.as_dict(),
    }
    _emit(payload, args)
    all_exact = all(rec.exact for rec in result.history)
    return EXIT_OK if all_exact else EXIT_BUDGET


def _cmd_lottery(args, manifest):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    large = tuple(int(k) for k in args.large.split(","))
    config = _train_config(args)
    result = lottery_mod.lottery_run(args.n, large, args.ticket_size,
                                     args.draws, config, args.seed,
                                     fresh_store=(args.store == "fresh"))

    csv_path = out / "draws.csv"
    with open(csv_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["draw", "novelty", "best_ratio", "gap"])
        for rec in result.records:
            writer.writerow([rec.draw, int(rec.novel),
                             "" if rec.best_ratio is None else repr(rec.best_ratio),
                             "" if rec.gap is None else repr(rec.gap)])
    manifest.add_output(csv_path)

    ticket_paths = []
    for t in result.history.tickets:
        tp = out / f"ticket_{t.draw_ordinal:03d}.json"
        tp.write_text(json.dumps({
            "draw": t.draw_ordinal,
            "retained": [list(layer) for layer in t.retained],
            "best_ratio": t.best_ratio,
            "init_subnet": netmod.serialize(t.init_subnet, args.n),
            "trained_subnet": netmod.serialize(t.trained_subnet, args.n),
        }, indent=2) + "\n", encoding="utf-8")
        ticket_paths.append(str(tp))
        manifest.add_output(tp)

    store_path = out / "shared_store.txt"
    store_path.write_text(profiles_to_text(result.history.shared_store.profiles),
                          encoding="utf-8")
    manifest.add_output(store_path)

    best_path = None
    if result.best_mechanism is not None:
        best_path = out / "best_mechanism.json"
        save_mechanism(result.best_mechanism, best_path)
        manifest.add_output(best_path)

    payload = {
        "n": args.n,
        "large": list(large),
        "ticket_size": args.ticket_size,
        "draws": args.draws,
        "seed": args.seed,
        "best_ratio": result.best_ratio,
        "gap": (None if result.best_ratio is None
                else result.history.goal.alpha_upper - result.best_ratio),
        "novel_fraction": (sum(1 for r in result.records if r.novel)
                           / len(result.records)),
        "outputs": [str(csv_path), str(store_path)] + ticket_paths
        + ([str(best_path)] if best_path else []),
        "manifest": manifest.as_dict(),
    }
    _emit(payload, args)
    return EXIT_OK


def _cmd_ensemble(args, manifest):
    m1 = load_mechanism(args.a)
    m2 = load_mechanism(args.b)
    combined = lottery_mod.ensemble(m1, m2)
    cert = certify(combined.net, combined.n, args.alpha, shift=combined.shift,
                   node_budget=args.node_budget)
    payload = {
        "n": combined.n,
        "hidden_nodes": combined.net.hidden_node_count(),
        "certificate": _cert_json(cert),
        "achieved_ratio": args.alpha - cert.total,
        "manifest": manifest.as_dict(),
    }
    if args.out:
        path = Path(args.out) / "ensemble_mechanism.json"
        save_mechanism(combined, path)
        manifest.add_output(path)
        payload["outputs"] = [str(path)]
    _emit(payload, args)
    return EXIT_OK if cert.exact else EXIT_BUDGET


# -- parser ------------------------------------------------------------------------

def _add_common(p, *, seeded=False, budgeted=True, out_required=False):
    if seeded:
        p.add_argument("--seed", type=int, default=0)
    if budgeted:
        p.add_argument("--node-budget", type=int, default=5_000_000,
                       help="branch-and-bound node budget per MIP")
    p.add_argument("--threads", type=int, default=1,
                   help="certifier worker threads (results are identical "
                        "for any value)")
    if out_required:
        p.add_argument("--out", required=True, help="output directory")
    else:
        p.add_argument("--out", default=None, help="output directory")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="redistrib",
        description="Worst-case VCG redistribution mechanism design tools")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("certify", help="exact worst-case violations of a mechanism")
    p.add_argument("--mech", required=True)
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--grid", type=int, default=0,
                   help="also run the grid oracle at this resolution")
    _add_common(p)
    p.set_defaults(func=_cmd_certify)

    p = sub.add_parser("bounds", help="manual lower and theoretical upper bound")
    p.add_argument("--n", type=int, required=True)
    _add_common(p, budgeted=False)
    p.set_defaults(func=_cmd_bounds)

    p = sub.add_parser("demo", help="payments for one profile")
    p.add_argument("--mech", required=True)
    p.add_argument("--profile", required=True, help="comma-separated values")
    _add_common(p, budgeted=False)
    p.set_defaults(func=_cmd_demo)

    p = sub.add_parser("verify-known", help="certify all published mechanisms")
    p.add_argument("--n", type=int, required=True)
    _add_common(p)
    p.set_defaults(func=_cmd_verify_known)

    p = sub.add_parser("train", help="worst-case training run")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--hidden", default="10", help="hidden sizes, e.g. 10,10")
    p.add_argument("--mip-rounds", type=int, default=30)
    p.add_argument("--epochs", type=int, default=500)
    p.add_argument("--learning-rate", type=float, default=0.0001)
    _add_common(p, seeded=True, out_required=True)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("lottery", help="lottery draw/scratch runs")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--large", default="20,20")
    p.add_argument("--ticket-size", type=int, required=True)
    p.add_argument("--draws", type=int, required=True)
    p.add_argument("--mip-rounds", type=int, default=100,
                   help="MIP rounds per scratch")
    p.add_argument("--epochs", type=int, default=500)
    p.add_argument("--learning-rate", type=float, default=0.0001)
    p.add_argument("--store", choices=("persistent", "fresh"), default="persistent",
                   help="keep or reset the shared worst-case store across draws")
    _add_common(p, seeded=True, out_required=True)
    p.set_defaults(func=_cmd_lottery)

    p = sub.add_parser("ensemble", help="combine two mechanisms half/half and certify")
    p.add_argument("--a", required=True)
    p.add_argument("--b", required=True)
    p.add_argument("--alpha", type=float, required=True)
    _add_common(p)
    p.set_defaults(func=_cmd_ensemble)

    return parser


def main(argv=None):
    level = os.environ.get("REDISTRIB_LOG", "warning").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    manifest = _ManifestWriter(args.subcommand, args, getattr(args, "out", None))
    try:
        code = args.func(args, manifest)
        manifest.finish("done" if code == EXIT_OK else "budget-exhausted")
        return code
    except (ContractViolation, ParseError, FileNotFoundError, RefusalError) as e:
        manifest.finish("error")
        log.error("%s", e)
        print(f"error: {e}", file=sys.stderr)
        return EXIT_ERROR
    except SolverError as e:
        manifest.finish("solver-error")
        log.error("%s", e)
        print(f"solver error: {e}", file=sys.stderr)
        return EXIT_BUDGET


if __name__ == "__main__":
    sys.exit(main())
