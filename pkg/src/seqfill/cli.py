"""Command-line front end: ``seqfill {train,reconstruct,evaluate,generate,modes,experiment}``.

Data goes to files named on the command line; diagnostics go to stderr.
Exit codes: 0 success, 2 usage error, 3 unreadable or unwritable file,
4 malformed or inconsistent input data, 5 invalid parameter, 6 observation
outside the model support.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import experiments as ex
from .constraints import parse_constraint
from .io import (DataFormatError, file_sha256, format_float, load_model, read_mask, read_matrix,
                 read_sequence, save_model, write_mask, write_matrix, write_sequence)
from .mixture import IndexSplit, ModelSupportError, condition, prune
from .modes import find_all_modes
from .reconstruct import (COMPONENT_FLOOR, METHODS, MaskedSequence, avg_squared_error,
                          build_candidates, policy_for, reconstruct_detailed)
from .training import TrainConfig, em_fit_isotropic, gtm_fit

__all__ = ["main", "build_parser", "EXIT_OK", "EXIT_USAGE", "EXIT_IO", "EXIT_DATA", "EXIT_PARAM",
           "EXIT_SUPPORT"]

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_IO = 3
EXIT_DATA = 4
EXIT_PARAM = 5
EXIT_SUPPORT = 6

REPORT_VERSION = 1


class UsageError(Exception):
    """Argument combination that argparse cannot check on its own."""


def _log(msg: str) -> None:
    print(msg, file=sys.stderr)


def _write_json(path, doc) -> None:
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def _check_dim(gm, d: int, what: str) -> None:
    if gm.dim != d:
        raise DataFormatError(f"{what} has {d} coordinates, model has {gm.dim}")


# -- train ---------------------------------------------------------------------

def cmd_train(args) -> int:
    data = read_matrix(args.data)
    t0 = time.perf_counter()
    cfg = TrainConfig(max_iter=args.max_iter, rel_tol=args.rel_tol, seed=args.seed, k=args.k,
                      latent_dim=args.latent_dim, n_basis=args.gtm_basis,
                      width_factor=args.gtm_width_factor, ridge=args.ridge)
    if args.model == "gm":
        model, hist = em_fit_isotropic(data, args.k, cfg, return_history=True)
    else:
        model, hist = gtm_fit(data, cfg, return_history=True)
    save_model(args.out, model)
    _log(f"trained {args.model}: {len(hist)} iterations, final log-likelihood {hist[-1]:.6f}, "
         f"{time.perf_counter() - t0:.2f} s")
    return EXIT_OK


# -- reconstruct -------------------------------------------------------------

def _load_constraint(text: str | None):
    if text is None:
        return None, None
    s = text.strip()
    if s.startswith("{") or s.startswith("["):
        src = s
    else:
        src = Path(text).read_text()
    try:
        doc = json.loads(src)
    except json.JSONDecodeError as exc:
        raise DataFormatError(f"constraint is not valid JSON ({exc})") from exc
    try:
        return parse_constraint(doc), doc
    except (KeyError, TypeError, AttributeError) as exc:
        raise DataFormatError(f"malformed constraint document ({exc!r})") from exc


def _plot_rows(cands, choice, dim: int):
    header = ["step", "candidate", "tag", "chosen"] + [f"t{d}" for d in range(dim)]
    rows = []
    for n, (layer, tags) in enumerate(zip(cands.layers, cands.tags)):
        for j, (pt, tag) in enumerate(zip(layer, tags)):
            chosen = int(choice is not None and choice[n] == j)
            rows.append([str(n), str(j), tag, str(chosen)] + [format_float(v) for v in pt])
    return header, rows


def cmd_reconstruct(args) -> int:
    if args.method == "cmode" and args.truth is None:
        raise UsageError("--method cmode needs --truth")
    gm, _ = load_model(args.model)
    seqf = read_sequence(args.seq)
    values, mask = seqf.values, seqf.mask
    raw = seqf.raw
    if args.mask is not None:
        m = read_mask(args.mask)
        if m.shape != values.shape:
            raise DataFormatError(f"mask shape {m.shape} does not match sequence shape {values.shape}")
        absent = m & ~mask
        if absent.any():
            n, d = np.argwhere(absent)[0]
            raise DataFormatError(f"mask marks row {n + 1} column {d} present but the cell is empty")
        mask = m
        values = np.where(m, values, np.nan)
        raw = [[c if keep else "" for c, keep in zip(r, mr)] for r, mr in zip(raw, m)]
    _check_dim(gm, values.shape[1], "sequence")
    truth = None
    if args.truth is not None:
        truth = read_matrix(args.truth)
        if truth.shape != values.shape:
            raise DataFormatError(f"truth shape {truth.shape} does not match sequence shape {values.shape}")
    spec, spec_doc = _load_constraint(args.constraint)
    seq = MaskedSequence(values, mask, seqf.timestamps)

    t0 = time.perf_counter()
    cands = build_candidates(gm, seq, policy_for(args.method), samples=args.samples, seed=args.seed,
                             all_centroids_when_all_missing=args.all_centroids_when_all_missing,
                             component_floor=args.component_floor)
    t1 = time.perf_counter()
    res = reconstruct_detailed(gm, seq, args.method, spec, truth=truth, seed=args.seed,
                               samples=args.samples,
                               all_centroids_when_all_missing=args.all_centroids_when_all_missing,
                               candidates=cands)
    t2 = time.perf_counter()

    write_sequence(args.out, res.sequence, seqf.header, seqf.z_text, raw)
    if args.emit_plot_data is not None:
        header, rows = _plot_rows(res.candidates, res.choice, gm.dim)
        with open(args.emit_plot_data, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            w.writerows(rows)
    if args.diagnostics is not None:
        diag = res.diagnostics()
        diag.update({
            "version": REPORT_VERSION,
            "model": {"file": str(args.model), "sha256": file_sha256(args.model)},
            "input": {"file": str(args.seq), "sha256": file_sha256(args.seq)},
            "mask": None if args.mask is None else {"file": str(args.mask), "sha256": file_sha256(args.mask)},
            "truth": None if args.truth is None else {"file": str(args.truth), "sha256": file_sha256(args.truth)},
            "constraint": spec_doc,
            "seed": args.seed,
            "samples": args.samples,
            "all_centroids_when_all_missing": args.all_centroids_when_all_missing,
            "component_floor": args.component_floor,
            "timings": {"candidates": t1 - t0, "search": t2 - t1},
        })
        if truth is not None:
            diag["avg_squared_error"] = avg_squared_error(truth, res.sequence)
        _write_json(args.diagnostics, diag)
    nu = res.candidates.sizes
    _log(f"{args.method}: {len(nu)} steps, candidates per step {min(nu)}..{max(nu)}"
         + ("" if res.cost is None else f", total cost {res.cost:.6g}"))
    return EXIT_OK


# -- evaluate ----------------------------------------------------------------

def _parse_entry(text: str):
    if "=" not in text:
        raise UsageError(f"expected MASK/METHOD=FILE, got {text!r}")
    name, path = text.split("=", 1)
    mask_name, _, method = name.rpartition("/")
    if not method:
        raise UsageError(f"empty method name in {text!r}")
    return (mask_name or "-"), method, path


def render_table(errors: dict[str, dict[str, float]], methods: list[str]) -> str:
    """Fixed-width text table, masks as rows and methods as columns, 4 significant digits."""
    cells = [["Mask"] + methods]
    for mask_name, row in errors.items():
        cells.append([mask_name] + [f"{row[m]:.4g}" if m in row else "" for m in methods])
    widths = [max(len(r[j]) for r in cells) for j in range(len(cells[0]))]
    lines = []
    for r in cells:
        lines.append("  ".join([r[0].ljust(widths[0])] + [c.rjust(w) for c, w in zip(r[1:], widths[1:])]))
    return "\n".join(lines) + "\n"


def cmd_evaluate(args) -> int:
    t0 = time.perf_counter()
    truth = read_matrix(args.truth)
    entries = [_parse_entry(e) for e in args.entries]
    diags = {}
    for e in args.diag or []:
        mk, me, path = _parse_entry(e)
        diags[(mk, me)] = json.loads(Path(path).read_text())
    errors: dict[str, dict[str, float]] = {}
    runs = {}
    methods: list[str] = []
    for mask_name, method, path in entries:
        recon = read_matrix(path)
        if recon.shape != truth.shape:
            raise DataFormatError(f"{path}: shape {recon.shape} does not match truth {truth.shape}")
        errors.setdefault(mask_name, {})[method] = avg_squared_error(truth, recon)
        if method not in methods:
            methods.append(method)
        runs[f"{mask_name}/{method}"] = {"file": path, "sha256": file_sha256(path),
                                         "diagnostics": diags.get((mask_name, method))}
    report = {
        "version": REPORT_VERSION,
        "truth": {"file": args.truth, "sha256": file_sha256(args.truth)},
        "masks": list(errors),
        "methods": methods,
        "errors": errors,
        "runs": runs,
        "timings": {"evaluate": time.perf_counter() - t0},
    }
    _write_json(args.out, report)
    table = render_table(errors, methods)
    if args.table is not None:
        Path(args.table).write_text(table)
    else:
        sys.stderr.write(table)
    return EXIT_OK


# -- generate ----------------------------------------------------------------

def _need_seed(args, stochastic: bool) -> None:
    if stochastic and args.seed is None:
        raise UsageError(f"generate {args.what} is stochastic here and needs --seed")


def cmd_generate(args) -> int:
    w = args.what
    if w == "toy-train":
        _need_seed(args, True)
        write_matrix(args.out, ex.toy_training_set(ex.ToySpec(args.n, args.sigma, args.seed)), ["t1", "t2"])
    elif w == "toy-traj":
        _need_seed(args, args.sigma > 0)
        write_matrix(args.out, ex.toy_trajectory(args.n, args.sigma, args.seed or 0), ["t1", "t2"])
    elif w == "arm-train":
        _need_seed(args, True)
        write_matrix(args.out, ex.arm_training_set(args.n, args.sigma, args.seed), ARM_HEADER)
    elif w == "arm-traj":
        _need_seed(args, args.sigma > 0)
        write_matrix(args.out, ex.arm_trajectory(args.n, args.sigma, args.seed or 0), ARM_HEADER)
    else:
        _need_seed(args, args.kind == "random")
        cols = [int(c) for c in args.missing_cols.split(",") if c.strip()] if args.missing_cols else []
        if any(not 0 <= c < args.cols for c in cols):
            raise ValueError(f"--missing-cols must lie in 0..{args.cols - 1}")
        if args.rows < 1 or args.cols < 1:
            raise ValueError("--rows and --cols must be >= 1")
        write_mask(args.out, ex.make_mask(args.rows, args.cols, args.kind, cols, args.p, args.seed or 0))
    return EXIT_OK


ARM_HEADER = ["theta1", "theta2", "x1", "x2"]


# -- modes -------------------------------------------------------------------

def parse_condition(text: str) -> dict[int, float]:
    """``"d=value,..."`` with 0-based coordinate indices."""
    out: dict[int, float] = {}
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        key, sep, val = part.partition("=")
        try:
            d, v = int(key), float(val)
        except ValueError:
            raise UsageError(f"invalid condition term {part!r}; expected d=value") from None
        if not sep or d in out:
            raise UsageError(f"invalid or repeated condition term {part!r}")
        out[d] = v
    if not out:
        raise UsageError("empty --condition")
    return out


def cmd_modes(args) -> int:
    gm, _ = load_model(args.model)
    cond = parse_condition(args.condition) if args.condition is not None else {}
    if any(not 0 <= d < gm.dim for d in cond):
        raise UsageError(f"condition indices must lie in 0..{gm.dim - 1}")
    target, coords = gm, list(range(gm.dim))
    if cond:
        present = sorted(cond)
        coords = [d for d in range(gm.dim) if d not in cond]
        if not coords:
            raise UsageError("--condition must leave at least one coordinate free")
        target = condition(gm, IndexSplit(tuple(present), tuple(coords)), [cond[d] for d in present])
        target = prune(target, args.component_floor)
    ms = find_all_modes(target)
    doc = {
        "coordinates": coords,
        "condition": {str(d): v for d, v in sorted(cond.items())},
        "modes": [{"point": p.tolist(), "log_density": float(l)}
                  for p, l in zip(ms.points, ms.log_densities)],
        "unconverged_starts": list(ms.unconverged),
    }
    text = json.dumps(doc, indent=2) + "\n"
    if args.out is not None:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    _log(f"{len(ms)} modes")
    return EXIT_OK


# -- experiment --------------------------------------------------------------

def cmd_experiment(args) -> int:
    t0 = time.perf_counter()
    run = ex.toy_experiment if args.which == "toy" else ex.arm_experiment
    train_seed = args.train_seed if args.train_seed is not None else (1 if args.which == "toy" else 0)
    methods = args.methods.split(",") if args.methods else list(METHODS)
    if any(m not in METHODS for m in methods):
        raise ValueError(f"unknown method in --methods; choose from {METHODS}")
    gtm, _, res = run(train_seed=train_seed, seed=args.seed, methods=methods)
    report = {
        "version": REPORT_VERSION,
        "experiment": args.which,
        "config": {"train_seed": train_seed, "seed": args.seed, "methods": methods},
        "errors": res.errors,
        "costs": res.costs,
        "mode_counts": res.mode_counts,
        "timings": {**res.timings, "total": time.perf_counter() - t0},
    }
    _write_json(args.out, report)
    if args.model_out is not None:
        save_model(args.model_out, gtm)
        report["model_sha256"] = file_sha256(args.model_out)
        _write_json(args.out, report)
    table = render_table(res.errors, methods)
    if args.table is not None:
        Path(args.table).write_text(table)
    else:
        sys.stderr.write(table)
    return EXIT_OK


# -- parser ------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="seqfill", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="fit a mixture or GTM to a data CSV")
    t.add_argument("--model", choices=("gm", "gtm"), required=True)
    t.add_argument("--k", type=int, required=True, help="components (gm) or latent grid points (gtm)")
    t.add_argument("--gtm-basis", type=int, default=9)
    t.add_argument("--gtm-width-factor", type=float, default=1.0)
    t.add_argument("--latent-dim", type=int, default=1)
    t.add_argument("--max-iter", type=int, default=200)
    t.add_argument("--rel-tol", type=float, default=1e-6)
    t.add_argument("--ridge", type=float, default=0.0)
    t.add_argument("--seed", type=int, required=True)
    t.add_argument("--out", required=True)
    t.add_argument("data")
    t.set_defaults(func=cmd_train)

    r = sub.add_parser("reconstruct", help="fill the empty cells of a sequence CSV")
    r.add_argument("--model", required=True)
    r.add_argument("--method", choices=METHODS, default="dpmode")
    r.add_argument("--truth")
    r.add_argument("--mask", help="0/1 CSV; cells marked 0 are treated as missing")
    r.add_argument("--constraint", help="constraint JSON text or a file holding it")
    r.add_argument("--samples", type=int, default=6)
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--all-centroids-when-all-missing", action="store_true")
    r.add_argument("--component-floor", type=float, default=COMPONENT_FLOOR)
    r.add_argument("--out", required=True)
    r.add_argument("--diagnostics")
    r.add_argument("--emit-plot-data", help="CSV of every candidate with the chosen ones flagged")
    r.add_argument("seq")
    r.set_defaults(func=cmd_reconstruct)

    e = sub.add_parser("evaluate", help="score reconstructions against the truth")
    e.add_argument("--truth", required=True)
    e.add_argument("--out", required=True, help="JSON report")
    e.add_argument("--table", help="text table (default: stderr)")
    e.add_argument("--diag", action="append", metavar="MASK/METHOD=FILE",
                   help="diagnostics JSON to embed in the report")
    e.add_argument("entries", nargs="+", metavar="MASK/METHOD=FILE")
    e.set_defaults(func=cmd_evaluate)

    g = sub.add_parser("generate", help="write synthetic data, trajectories or masks")
    g.add_argument("what", choices=("toy-train", "toy-traj", "arm-train", "arm-traj", "mask"))
    g.add_argument("--n", type=int)
    g.add_argument("--sigma", type=float)
    g.add_argument("--seed", type=int)
    g.add_argument("--kind", choices=("fwd", "inv", "random"), default="random")
    g.add_argument("--rows", type=int)
    g.add_argument("--cols", type=int)
    g.add_argument("--missing-cols", help="comma-separated 0-based columns (fwd/inv masks)")
    g.add_argument("--p", type=float, default=0.5)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_generate)

    m = sub.add_parser("modes", help="list the modes of a model or of a conditional")
    m.add_argument("--model", required=True)
    m.add_argument("--condition", help='"d=value,..." with 0-based indices')
    m.add_argument("--component-floor", type=float, default=COMPONENT_FLOOR)
    m.add_argument("--out")
    m.set_defaults(func=cmd_modes)

    x = sub.add_parser("experiment", help="run the toy or arm table end to end")
    x.add_argument("which", choices=("toy", "arm"))
    x.add_argument("--seed", type=int, default=0)
    x.add_argument("--train-seed", type=int)
    x.add_argument("--methods", help="comma-separated subset of methods")
    x.add_argument("--model-out")
    x.add_argument("--out", required=True)
    x.add_argument("--table")
    x.set_defaults(func=cmd_experiment)
    return p


_GENERATE_DEFAULTS = {
    "toy-train": {"n": 1000, "sigma": 0.2},
    "toy-traj": {"n": 100, "sigma": 0.0},
    "arm-train": {"n": 1000, "sigma": 0.05},
    "arm-traj": {"n": 34, "sigma": 0.01},
    "mask": {"rows": 100, "cols": 2},
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    if args.command == "generate":
        for key, val in _GENERATE_DEFAULTS[args.what].items():
            if getattr(args, key) is None:
                setattr(args, key, val)
    try:
        return args.func(args)
    except UsageError as exc:
        _log(f"seqfill {args.command}: usage error: {exc}")
        return EXIT_USAGE
    except ModelSupportError as exc:
        _log(f"seqfill {args.command}: {exc}")
        return EXIT_SUPPORT
    except DataFormatError as exc:
        _log(f"seqfill {args.command}: malformed input: {exc}")
        return EXIT_DATA
    except OSError as exc:
        _log(f"seqfill {args.command}: cannot access file: {exc}")
        return EXIT_IO
    except ValueError as exc:
        _log(f"seqfill {args.command}: invalid parameter: {exc}")
        return EXIT_PARAM


if __name__ == "__main__":
    sys.exit(main())
