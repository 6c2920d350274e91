"""Command-line front end.

Exit status: 0 on success, 1 on a domain error (invalid or infeasible
model, unreachable target), 2 on a usage error.  Commands that draw random
numbers require ``--seed``.  When ``--out`` is given, a ``.manifest.json``
sidecar records the command, resolved configuration, input digests and
timestamps; the primary output itself holds nothing time-dependent.
"""

from __future__ import annotations

import argparse
import datetime as _dt
import hashlib
import io
import json
import os
import sys

import numpy as np

from . import __version__, lattice, regions, search, shannon, sim
from .model import DistortionSpec, ModelError, load_model

SIG = 12
RD_SIG = 9


class DomainError(Exception):
    pass


def _num(x, sig=SIG):
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    x = float(x)
    if not np.isfinite(x):
        return None
    return float(f"{x:.{sig}g}")


def _clean(obj, sig=SIG):
    if isinstance(obj, dict):
        return {str(k) if not isinstance(k, frozenset) else lattice.label(k): _clean(v, sig) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v, sig) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist(), sig)
    if isinstance(obj, (float, int, np.floating, np.integer, np.bool_)):
        return _num(obj, sig)
    return obj


def _fmt(x, sig=SIG) -> str:
    return "" if x is None else f"{float(x):.{sig}g}"


def _floats(text: str, what: str) -> list[float]:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise UsageError(f"{what} must be comma-separated numbers") from None


def _u64(text: str) -> int:
    v = int(text, 0)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("expected a positive integer")
    return v


def _digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        h.update(fh.read())
    return h.hexdigest()


class Output:
    """Collects primary output text and writes it with an optional manifest."""

    def __init__(self, args, argv):
        self.args = args
        self.argv = argv
        self.started = _dt.datetime.now(_dt.timezone.utc).isoformat()

    def emit(self, text: str, path=None, extra_files=()):
        path = path or getattr(self.args, "out", None)
        if path is None:
            sys.stdout.write(text)
            return
        with open(path, "w", newline="\n") as fh:
            fh.write(text)
        inputs = {}
        for key in ("model", "source"):
            p = getattr(self.args, key, None)
            if p and os.path.isfile(p):
                inputs[p] = _digest(p)
        manifest = {
            "subcommand": self.args.command + (f" {self.args.target}" if getattr(self.args, "target", None) else ""),
            "argv": list(self.argv),
            "config": {k: v for k, v in vars(self.args).items() if k not in ("func",)},
            "inputs": inputs,
            "outputs": {p: _digest(p) for p in [path, *extra_files]},
            "seed": getattr(self.args, "seed", None),
            "version": __version__,
            "started": self.started,
            "finished": _dt.datetime.now(_dt.timezone.utc).isoformat(),
        }
        with open(f"{path}.manifest.json", "w", newline="\n") as fh:
            json.dump(manifest, fh, indent=2, default=str)
            fh.write("\n")


def _json(obj) -> str:
    return json.dumps(_clean(obj), indent=2) + "\n"


def _csv(header, rows, sig=SIG) -> str:
    buf = io.StringIO()
    buf.write(",".join(header) + "\n")
    for row in rows:
        buf.write(",".join(v if isinstance(v, str) else _fmt(v, sig) for v in row) + "\n")
    return buf.getvalue()


# --- commands -----------------------------------------------------------------


def cmd_eval(args, out):
    model, dspec = load_model(args.model)
    if args.rates is not None:
        rates = _floats(args.rates, "--rates")
        if len(rates) != model.L:
            raise UsageError(f"--rates needs {model.L} entries")
        _, dist = regions.synthesize_decoders(model, dspec)
        inside = regions.rates_in_region(model, rates)
        out.emit(_json({"rates": rates, "inside": inside, "distortions": dist}))
        return
    weights = _floats(args.weights, "--weights") if args.weights else [1.0] * model.L
    try:
        res = regions.min_rates(model, weights, dspec)
    except regions.RegionInfeasible as exc:
        raise DomainError(str(exc)) from None
    doc = {
        "scheme": model.scheme,
        "L": model.L,
        "weights": weights,
        "rates": list(res.rates),
        "value": res.value,
        "allocation": res.allocation.to_json() if res.allocation is not None else None,
        "distortions": res.distortions,
    }
    out.emit(_json(doc))


def cmd_decoders(args, out):
    model, dspec = load_model(args.model)
    if not dspec.measures:
        dspec = DistortionSpec.hamming(lattice.nonempty_subsets(model.L), model.joint.size(model.source))
    decs, dist = regions.synthesize_decoders(model, dspec)
    doc = {lattice.label(K): {**d.to_json(), "distortion": dist[K]} for K, d in decs.items()}
    out.emit(_json(doc))


def _load_source(spec):
    if spec == "bss":
        return None, None
    with open(spec) as fh:
        data = json.load(fh)
    try:
        p = np.asarray(data["source"], dtype=float)
    except KeyError:
        raise DomainError("source file needs a 'source' probability vector") from None
    d = np.asarray(data.get("distortion", 1.0 - np.eye(p.size)), dtype=float)
    return p, d


def cmd_rd(args, out):
    p, d = _load_source(args.source)
    if (args.D is None) == (args.grid is None):
        raise UsageError("give exactly one of --D or --grid")
    if args.D is not None:
        if p is None:
            rate = shannon.rd_binary(args.D)
            dist = min(args.D, 0.5)
        else:
            pt = shannon.rd_blahut_arimoto(p, d, args.D)
            rate, dist = pt.rate, pt.distortion
        if args.out:
            out.emit(_json({"D": args.D, "rate": rate, "distortion": dist}))
        else:
            sys.stdout.write(_fmt(rate) + "\n")
        return
    rows = shannon.rd_curve_rows(search.parse_grid(args.grid), p, d)
    out.emit(_csv(["D", "R"], rows, RD_SIG))


def _search_cfg(args) -> search.SearchConfig:
    sizes = {"U": args.u_size, "V": args.v_size}
    return search.SearchConfig(
        seed=args.seed,
        restarts=args.restarts,
        max_iters=args.max_iters,
        aux_alphabet_sizes=sizes,
        ec_grid_step=args.ec_grid_step,
        jobs=args.jobs,
    )


def cmd_cross_section(args, out):
    cfg = _search_cfg(args)
    if args.target == "ec":
        value, model = search.cross_section_ec(args.D, cfg)
    else:
        value, model = search.cross_section_zb(args.D, cfg)
    rate, dist = search.evaluate_cross_section(model)
    out.emit(_json({"scheme": args.target, "D": args.D, "value": value, "distortions": dist, "model": model.to_json()}))


def cmd_separation(args, out):
    cfg = _search_cfg(args)
    grid = search.parse_grid(args.grid)
    if args.target == "zb":
        rep = search.separation_zb(cfg, grid)
    elif args.target == "l3":
        rep = search.separation_l3(cfg, D_grid=grid, D13=args.D13)
    else:
        rep = search.separation_l4(cfg, D_grid=grid, D3=args.D3, D34=args.D34)
    extra = []
    if args.csv and rep.scan:
        rows = [(r["D"], r["value_ec"], r["value_zb"], r["gap"]) for r in rep.scan]
        with open(args.csv, "w", newline="\n") as fh:
            fh.write(_csv(["D", "value_ec", "value_zb", "gap"], rows))
        extra.append(args.csv)
    if args.timing:
        sys.stderr.write(f"wall time {rep.wall_time:.1f} s\n")
    out.emit(rep.dumps(), extra_files=extra)


def cmd_sim(args, out):
    model, dspec = load_model(args.model)
    cms = sim.as_cms(model)
    alloc = regions.margin_allocation(cms, args.margin)
    rep = sim.run_trials(cms, alloc, args.n, args.trials, args.epsilon, args.seed, dspec or None, jobs=args.jobs)
    doc = rep.to_json()
    doc["allocation"] = alloc.to_json()
    extra = []
    if args.csv:
        keys = list(rep.analytic_distortions)
        rows = [
            [str(t), "1" if ok else "0", *[_fmt(d[K]) if ok else "" for K in keys]]
            for t, ok, d in rep.per_trial
        ]
        with open(args.csv, "w", newline="\n") as fh:
            fh.write(_csv(["trial", "success", *[f"D_{lattice.label(K)}" for K in keys]], rows))
        extra.append(args.csv)
    out.emit(_json(doc), extra_files=extra)


def cmd_lattice(args, out):
    L = args.L
    lines = []
    for W in range(1, L + 1):
        lines.append(f"tier {W}: " + " ".join(lattice.label(S) for S in lattice.tier(L, W)))
    for K in lattice.nonempty_subsets(L):
        J = lattice.sharing_sets(L, K)
        lines.append(f"J({lattice.label(K)}): " + " ".join(lattice.label(S) for S in J))
    out.emit("\n".join(lines) + "\n")


# --- parser -------------------------------------------------------------------


class UsageError(Exception):
    pass


def _add_search_flags(p):
    p.add_argument("--seed", type=_u64, required=True)
    p.add_argument("--restarts", type=_positive_int, default=256)
    p.add_argument("--max-iters", type=_positive_int, default=60)
    p.add_argument("--u-size", type=_positive_int, default=2)
    p.add_argument("--v-size", type=_positive_int, default=3)
    p.add_argument("--ec-grid-step", type=int, default=32, help="resolution 1/N of the exhaustive EC grid; 0 turns it off")
    p.add_argument("--jobs", type=_positive_int, default=os.cpu_count() or 1)
    p.add_argument("--out")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="mdcms", description="Multiple-description rate regions: VKG vs CMS.")
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("eval", help="minimal weighted rates, or membership of a rate vector")
    p.add_argument("--model", required=True)
    p.add_argument("--weights")
    p.add_argument("--rates", help="check membership of this rate vector instead")
    p.add_argument("--out")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("decoders", help="optimal per-letter decoders and their distortions")
    p.add_argument("--model", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_decoders)

    p = sub.add_parser("rd", help="rate-distortion function")
    p.add_argument("--source", default="bss", help="'bss' or a JSON file with 'source' and optional 'distortion'")
    p.add_argument("--D", type=float)
    p.add_argument("--grid", help="a:b:step; writes a CSV curve")
    p.add_argument("--out")
    p.set_defaults(func=cmd_rd)

    p = sub.add_parser("cross-section", help="heuristic two-description sum-rate minimum")
    p.add_argument("target", choices=["ec", "zb"])
    p.add_argument("--D", type=float, required=True)
    _add_search_flags(p)
    p.set_defaults(func=cmd_cross_section)

    p = sub.add_parser("separation", help="separation experiments")
    p.add_argument("target", choices=["zb", "l3", "l4"])
    p.add_argument("--grid", default="0.05:0.45:0.05")
    p.add_argument("--D3", type=float, default=0.25)
    p.add_argument("--D34", type=float, default=0.1)
    p.add_argument("--D13", type=float, default=0.0)
    p.add_argument("--csv", help="write the D scan as CSV")
    p.add_argument("--timing", action="store_true", help="print wall time to stderr")
    _add_search_flags(p)
    p.set_defaults(func=cmd_separation)

    p = sub.add_parser("sim", help="random-coding simulation")
    p.add_argument("--model", required=True)
    p.add_argument("--seed", type=_u64, required=True)
    p.add_argument("--n", type=_positive_int, required=True)
    p.add_argument("--trials", type=_positive_int, default=200)
    p.add_argument("--epsilon", type=float, default=0.08)
    p.add_argument("--margin", type=float, default=0.1, help="rate slack per constraint term (bits)")
    p.add_argument("--jobs", type=_positive_int, default=os.cpu_count() or 1)
    p.add_argument("--csv", help="per-trial CSV")
    p.add_argument("--out")
    p.set_defaults(func=cmd_sim)

    p = sub.add_parser("lattice", help="print subset tiers and sharing sets")
    p.add_argument("--L", type=_positive_int, required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_lattice)
    return ap


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    out = Output(args, argv)
    try:
        args.func(args, out)
    except UsageError as exc:
        ap.print_usage(sys.stderr)
        sys.stderr.write(f"error: {exc}\n")
        return 2
    except (DomainError, ModelError, regions.RegionInfeasible, shannon.InfeasibleDistortion, ValueError, KeyError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 1
    except OSError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
