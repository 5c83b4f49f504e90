"""Command-line front end: ``gclab <subcommand> --config NAME --out DIR``.

Exit codes: 0 success, 2 configuration or input error (including usage
errors), 3 solver failure.  Outputs are assembled in a scratch directory and
moved into ``--out`` only after the run succeeded.
"""
from __future__ import annotations

import argparse
import datetime
import json
import math
import platform
import shutil
import sys
import tempfile
import time
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .cell import effective_tensor, write_tensor_csv
from .cesari import cesari_check, hull_equivalence_test
from .config import ConfigError, validate_config
from .core import ControlField, GclabError, InvalidInput, Partition, SolverFailure
from .gclosure import sample_gset, write_cloud_csv
from .hconv import epsilon_sweep, weak_rhs_test, write_sweep_csv
from .optimize import Instance, refinement_study, relaxed_optimum, write_trace_csv
from .state import evaluate_cost, solve_state

__all__ = ["run", "main", "COMMANDS", "dump_json"]


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


def dump_json(obj) -> str:
    """Canonical JSON: sorted keys, two-space indent, non-finite floats as null, LF ending."""
    return json.dumps(_clean(obj), sort_keys=True, indent=2, allow_nan=False) + "\n"


def _write_json(path, obj):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(dump_json(obj))


def _tensor_info(et):
    eig = et.tensor.eigvals()
    return {"tensor": et.entries, "eig_min": eig[0], "eig_max": eig[-1], "residual_max": max(et.residuals),
            "formula_gap": et.formula_gap}


# --- subcommands: each writes into ``out`` and returns a one-line summary ----

def cmd_homogenize(cfg, out):
    m = cfg.microstructure()
    x = cfg.point("microstructure") if cfg.space.depends_on_x() else None
    et = effective_tensor(m, x=x)
    kind = cfg.section("microstructure")["kind"]
    write_tensor_csv(out / "tensors.csv", [(kind, et)])
    A = cfg.space.tensor_field(np.zeros((1, cfg.dim)) if x is None else x[None], m.cells.ravel())
    _write_json(out / "summary.json", {"effective": _tensor_info(et), "fractions": m.fractions(),
                                       "labels": cfg.space.labels, "arithmetic_mean": A.mean(axis=0),
                                       "harmonic_mean": np.linalg.inv(np.linalg.inv(A).mean(axis=0))})
    return f"A* = {np.array2string(et.entries, precision=10)}"


def cmd_sweep(cfg, out):
    sw = cfg.section("sweep")
    m = cfg.microstructure()
    comp = None
    A = np.stack([t.entries for t in cfg.space.tensors])
    frac = m.fractions()
    if sw["comparator"] == "arithmetic":
        comp = np.einsum("k,kij->ij", frac, A)
    elif sw["comparator"] == "harmonic":
        comp = np.linalg.inv(np.einsum("k,kij->ij", frac, np.linalg.inv(A)))
    rep = epsilon_sweep(m, sw["eps"], sw["rhs"], resolution=sw["resolution"], lengths=cfg.lengths, comparator=comp)
    write_sweep_csv(out / "sweep.csv", rep)
    summary = {"eps": [r.eps for r in rep.rows], "errors": rep.errors, "comparator": sw["comparator"],
               "comparator_errors": rep.comparator_errors, "effective": _tensor_info(rep.effective)}
    if sw["weak_rhs"]:
        weak = weak_rhs_test(m, sw["eps"], sw["rhs"], resolution=sw["resolution"], lengths=cfg.lengths)
        summary["weak_rhs"] = {"plain": weak.plain.errors, "oscillating": weak.oscillating.errors,
                               "ratios": weak.ratios}
    _write_json(out / "summary.json", summary)
    return "errors " + ", ".join(f"{e:.3e}" for e in rep.errors)


def cmd_gclosure(cfg, out):
    gc = cfg.section("gclosure")
    x = cfg.point("gclosure") if cfg.space.depends_on_x() else None
    clouds = [sample_gset(cfg.space, fam, gc["count"], cfg.seed, resolution=gc["resolution"], x=x)
              for fam in gc["families"]]
    merged = clouds[0]
    for c in clouds[1:]:
        merged.points += c.points
        merged.failures += c.failures
    merged.family_spec = {"families": gc["families"], "count": gc["count"], "resolution": gc["resolution"]}
    write_cloud_csv(out / "cloud.csv", merged)
    _write_json(out / "summary.json", {"size": len(merged), "failures": merged.failures,
                                       "families": gc["families"], "seed": cfg.seed})
    return f"{len(merged)} tensors, {len(merged.failures)} failures"


def _state_control(cfg):
    st = cfg.section("state")
    part = Partition(cfg.lengths, st["level"])
    labels = st["labels"] or [cfg.space.labels[0]]
    if len(labels) == 1:
        labels = labels * part.size
    idx = np.array([cfg.space.index(lab) for lab in labels]).reshape(part.shape)
    return ControlField(part, cfg.space, labels=idx)


def cmd_state(cfg, out):
    st = cfg.section("state")
    nl = cfg.nonlinearity()
    c = _state_control(cfg)
    y = solve_state(c, nl, mode=st["mode"], resolution=st["resolution"], tol=st["tol"])
    J = evaluate_cost(y, c, nl, mode=st["mode"])
    _write_json(out / "state.json", {
        "J": J, "newton_iterations": y.iterations, "residuals": y.residuals, "l2_norm": y.l2_norm(),
        "max_norm": y.max_norm(), "energy": y.energy, "load": y.load, "resolution": st["resolution"],
        "problems": nl.spot_check(cfg.space), "nodal": y.nodal,
    })
    return f"J = {J:.12g} after {y.iterations} Newton steps"


def cmd_cesari(cfg, out):
    ce = cfg.section("cesari")
    nl = cfg.nonlinearity()
    x = cfg.point("cesari")
    rep = cesari_check(x, ce["y"], ce["deltas"], cfg.space, nl, ce["families"], ce["count"], cfg.seed,
                       ce["tol"], resolution=ce["resolution"])
    hull = hull_equivalence_test(x, ce["y"], cfg.space, nl, ce["hull_steps"])
    _write_json(out / "cesari.json", {"check": rep.as_dict(), "hull_equivalence": hull.as_dict()})
    worst = max(r["forward_max"] for r in rep.rows)
    return f"forward distance {worst:.3e} (tol {ce['tol']:g}), hull test " + (
        f"{hull.hausdorff:.3e}" if hull.applicable else "inapplicable")


def cmd_optimize(cfg, out):
    op = cfg.section("optimize")
    inst = Instance(cfg.space, cfg.nonlinearity(), cfg.lengths, op["resolution"])
    study = refinement_study(inst, op["levels"], op["budget"], oracle_limit=op["oracle_limit"],
                             laminate_pair=op["pair"])
    write_trace_csv(out / "trace.csv", study)
    summary = {"levels": [{
        "level": r.level, "J": r.J, "oracle_J": r.oracle_J, "local_minimum": r.local_minimum,
        "labels": [cfg.space.labels[i] for i in r.descent.control.labels.ravel()],
        "evaluations": r.descent.evaluations, "failures": r.descent.failures,
        "tensor_summary": r.tensor_summary,
    } for r in study]}
    if op["relaxed"] and cfg.space.size >= 2:
        rel = relaxed_optimum(inst, study[-1].descent.control, op["pair"])
        summary["relaxed"] = {"J": rel.J, "theta": rel.theta.ravel(), "pair": rel.pair, "start_J": rel.start_J}
    _write_json(out / "summary.json", summary)
    return "J by level " + ", ".join(f"{r.J:.6e}" for r in study)


COMMANDS = {
    "homogenize": (cmd_homogenize, ("microstructure", "resolution")),
    "sweep": (cmd_sweep, ("sweep", "resolution")),
    "gclosure": (cmd_gclosure, ("gclosure", "resolution")),
    "state": (cmd_state, ("state", "resolution")),
    "cesari": (cmd_cesari, ("cesari", "resolution")),
    "optimize": (cmd_optimize, ("optimize", "resolution")),
}


def _parser():
    p = argparse.ArgumentParser(prog="gclab", description="Homogenization and G-closure experiments.")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", required=True, help="config file or preset name")
        s.add_argument("--out", default="gclab-out", help="output directory")
        s.add_argument("--seed", type=int, help="overrides [problem] seed")
        s.add_argument("--resolution", type=int, help="overrides the subcommand's resolution")
        s.add_argument("--quiet", action="store_true")
    return p


def run(argv=None) -> int:
    try:
        args = _parser().parse_args(argv)
    except SystemExit as exc:  # argparse reports usage errors with code 2
        return int(exc.code or 0)
    func, res_key = COMMANDS[args.command]
    overrides = {}
    if args.seed is not None:
        overrides[("problem", "seed")] = args.seed
    if args.resolution is not None:
        overrides[res_key] = args.resolution
    try:
        cfg = validate_config(args.config, overrides)
    except ConfigError as exc:
        for e in exc.errors:
            print(f"config error: {e}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2

    out = Path(args.out)
    t0 = time.perf_counter()
    with tempfile.TemporaryDirectory(prefix="gclab-") as tmp:
        scratch = Path(tmp)
        try:
            line = func(cfg, scratch)
        except SolverFailure as exc:
            print(f"solver failure: {exc}", file=sys.stderr)
            return 3
        except (InvalidInput, GclabError) as exc:
            print(f"input error: {exc}", file=sys.stderr)
            return 2
        _write_json(scratch / "provenance.json", {
            "command": args.command, "config": cfg.source, "config_sha256": cfg.digest(), "seed": cfg.seed,
            "normalized_config": cfg.values,
            "versions": {"gclab": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
                         "python": platform.python_version()},
        })
        _write_json(scratch / "metadata.json", {
            "timestamp": datetime.datetime.now(datetime.timezone.utc).isoformat(timespec="seconds"),
            "runtime_seconds": time.perf_counter() - t0,
        })
        out.mkdir(parents=True, exist_ok=True)
        for f in sorted(scratch.iterdir()):
            shutil.copyfile(f, out / f.name)
    if not args.quiet:
        print(f"{args.command}: {line} -> {out}")
    return 0


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
