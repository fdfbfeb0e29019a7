"""Command-line interface: orbits, check-generators, ingest, fit, greedy."""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import re
import sys
from datetime import datetime, timezone
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from .builder import (
    GREEDY,
    STEPWISE,
    BuilderConfig,
    greedy_build,
    make_pools,
    path_rows,
    stepwise_build,
)
from .errors import NumericalError, ParseError, ValidationError, VerificationError
from .features import INVARIANT, MIXED, ORDINARY, FeaturePool, Term
from .group import (
    GroupAction,
    build_action,
    load_group,
    microimage_space,
    orbit_count_formula,
)
from .imagery import PreprocessConfig, aggregate, image_counts, load_image
from .invariants import check_invariance, load_generators, orbit_signature
from .maxent import ConstraintSet, entropy, kl, solve_maxent
from .ordering import POLICIES

log = logging.getLogger("invmaxent")

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICAL, EXIT_VERIFICATION = 0, 2, 3, 4


# -- shared plumbing ------------------------------------------------------------


class Run:
    """Resolved configuration plus provenance for one invocation."""

    def __init__(self, args: argparse.Namespace):
        self.args = args
        self.out_dir = Path(args.out_dir)
        self.inputs: dict[str, str] = {}

    def config(self) -> dict:
        cfg = {k: v for k, v in vars(self.args).items() if k not in ("func", "verbose")}
        return json.loads(json.dumps(cfg, default=str))

    def digest(self, path) -> str:
        h = hashlib.sha256(Path(path).read_bytes()).hexdigest()
        self.inputs[str(path)] = h
        return h

    def header(self) -> dict:
        out = {"program": "invmaxent", "version": __version__, "config": self.config(),
               "inputs": dict(sorted(self.inputs.items()))}
        if not self.args.no_timestamp:
            out["created"] = datetime.now(timezone.utc).isoformat(timespec="seconds")
        return out

    def write_json(self, name: str, body: dict) -> Path:
        self.out_dir.mkdir(parents=True, exist_ok=True)
        path = self.out_dir / name
        path.write_text(json.dumps({**self.header(), **body}, indent=2, sort_keys=True) + "\n")
        return path

    def write_tsv(self, name: str, columns: Sequence[str], rows: Sequence[Sequence]) -> Path:
        self.out_dir.mkdir(parents=True, exist_ok=True)
        path = self.out_dir / name
        head = self.header()
        lines = [f"# {k}: {json.dumps(head[k], sort_keys=True)}" for k in sorted(head)]
        lines.append("\t".join(columns))
        lines.extend("\t".join(_cell(v) for v in row) for row in rows)
        path.write_text("\n".join(lines) + "\n")
        return path


def _cell(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _coord(v2: int) -> str:
    # doubled integer coordinate to exact text
    return str(v2 // 2) if v2 % 2 == 0 else f"{v2}/2"


def _setup(args):
    space = microimage_space(args.L, args.n)
    group = load_group(args.group, space.m)
    return space, group


def _gens(args, m: int):
    return load_generators(args.generators, m)


def read_distribution(path, K: int) -> np.ndarray:
    """Target from a TSV whose last column is a probability or a count."""
    rows, header = [], None
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        if not line.strip() or line.startswith("#"):
            continue
        fields = line.split("\t")
        if header is None:
            header = fields
            continue
        try:
            rows.append((int(fields[0]), float(fields[-1])))
        except ValueError:
            raise ParseError(f"{path}:{lineno}: expected an integer index and a number") from None
    if header is None:
        raise ValidationError(f"{path}: no header line")
    values = np.zeros(K)
    seen = set()
    for k, v in rows:
        if not 0 <= k < K or k in seen:
            raise ValidationError(f"{path}: bad or repeated index {k} for K = {K}")
        seen.add(k)
        values[k] = v
    if values.min() < 0 or values.sum() <= 0:
        raise ValidationError(f"{path}: values must be nonnegative with a positive total")
    if header[-1] == "count":
        return values / values.sum()
    if abs(values.sum() - 1) > 1e-9:
        raise ValidationError(f"{path}: probabilities sum to {values.sum():.12g}")
    return values / values.sum()


_TUPLE = re.compile(r"^\s*([fx])\s*:\s*\(([\d\s,]*)\)\s*$")
_FACTOR = re.compile(r"^\s*([fx])(\d+)\s*(?:\^\s*(\d+))?\s*$")


def parse_term(text: str, N: int, m: int) -> Term:
    """``f:(0,0,2,0,0)``, ``x:(1,0,0,0)``, or products like ``f3^2`` and ``f1*f3``."""
    mt = _TUPLE.match(text)
    if mt:
        sym = mt.group(1)
        alpha = tuple(int(a) for a in mt.group(2).replace(" ", "").split(",") if a != "")
    else:
        sym, exps = None, {}
        for factor in text.split("*"):
            mf = _FACTOR.match(factor)
            if not mf:
                raise ValidationError(f"cannot parse term {text!r}")
            if sym not in (None, mf.group(1)):
                raise ValidationError(f"term {text!r} mixes f and x factors")
            sym = mf.group(1)
            i = int(mf.group(2))
            exps[i] = exps.get(i, 0) + int(mf.group(3) or 1)
        width = N if sym == "f" else m
        if any(not 1 <= i <= width for i in exps):
            raise ValidationError(f"term {text!r} refers to a variable outside {sym}1..{sym}{width}")
        alpha = tuple(exps.get(i + 1, 0) for i in range(width))
    tag = INVARIANT if sym == "f" else ORDINARY
    width = N if tag == INVARIANT else m
    if len(alpha) != width:
        raise ValidationError(f"term {text!r} needs {width} exponents")
    return tag, alpha


def format_term(term: Term) -> str:
    tag, alpha = term
    return f"{'f' if tag == INVARIANT else 'x'}:({','.join(map(str, alpha))})"


# -- commands -------------------------------------------------------------------


def cmd_orbits(args) -> int:
    run = Run(args)
    space, group = _setup(args)
    action = build_action(group, space)
    sigs = None
    if args.signatures:
        sigs = orbit_signature(_gens(args, space.m), action)
    rows = []
    for oid, members in enumerate(action.orbits.orbits):
        rep = ",".join(_coord(int(v)) for v in space.points2[members[0]])
        row = [oid, len(members), members[0], rep]
        if sigs is not None:
            row.append(",".join(str(v) for v in sigs[oid]))
        rows.append(row)
    cols = ["orbit", "size", "representative", "point"] + (["signature"] if sigs is not None else [])
    run.write_tsv("orbits.tsv", cols, rows)
    hist = action.orbits.size_histogram()
    body = {"group_order": group.order, "K": space.K, "M": action.orbits.M,
            "sizes": {str(k): v for k, v in sorted(hist.items())}}
    status = EXIT_OK
    if args.group == "microimage" and args.n == 2 and args.L % 2 == 0:
        f = orbit_count_formula(args.L)
        expected = {s: c for s, c in f.by_size.items() if c}
        ok = f.total == action.orbits.M and expected == hist
        body["formula"] = {"total": f.total, "sizes": {str(k): v for k, v in sorted(f.by_size.items())},
                           "match": ok}
        if not ok:
            status = EXIT_VERIFICATION
    run.write_json("orbits.json", body)
    print(f"|G| = {group.order}, K = {space.K}, M = {action.orbits.M}, sizes {dict(sorted(hist.items()))}")
    if "formula" in body:
        print("orbit-count formula:", "match" if body["formula"]["match"] else "MISMATCH")
    return status


def cmd_check_generators(args) -> int:
    run = Run(args)
    space, group = _setup(args)
    if Path(args.generators).exists():
        run.digest(args.generators)
    gens = _gens(args, space.m)
    invariant = {name: check_invariance(p, group) for name, p in zip(gens.names, gens.polys)}
    relation = None if gens.relation is None else gens.relation_holds()
    injective, detail = True, ""
    if all(invariant.values()):
        try:
            orbit_signature(gens, build_action(group, space))
        except VerificationError as exc:
            injective, detail = False, str(exc)
    else:
        injective, detail = False, "skipped: generators are not invariant"
    ok = all(invariant.values()) and relation is not False and injective
    run.write_json("check_generators.json", {
        "generators": [p.to_string() for p in gens.polys],
        "invariant": invariant,
        "relation_vanishes": relation,
        "signatures_injective": injective,
        "detail": detail,
        "pass": ok,
    })
    for name, good in invariant.items():
        print(f"{name}: {'invariant' if good else 'NOT invariant'}")
    if relation is not None:
        print("relation q(f) = 0:", "yes" if relation else "NO")
    print("orbit signatures injective:", "yes" if injective else f"NO ({detail})")
    return EXIT_OK if ok else EXIT_VERIFICATION


def cmd_ingest(args) -> int:
    run = Run(args)
    space = microimage_space(args.L, args.n)
    cfg = PreprocessConfig(args.clip, not args.no_log, args.L, args.n)
    results = []
    for p in args.images:
        run.digest(p)
        img = load_image(p, args.format, args.width, args.height, args.endian)
        counts, constant = image_counts(img, space, cfg)
        results.append((Path(p), counts, constant))
    emp = aggregate([c for _, c, _ in results])
    coords = [",".join(_coord(int(v)) for v in row) for row in space.points2]
    for i, (p, counts, _) in enumerate(results):
        run.write_tsv(f"counts_{i:04d}_{p.stem}.tsv", ["k", "point", "count"],
                      [[k, coords[k], int(c)] for k, c in enumerate(counts.counts)])
    run.write_tsv("pooled_counts.tsv", ["k", "point", "count"],
                  [[k, coords[k], int(c)] for k, c in enumerate(emp.pooled_counts)])
    run.write_tsv("distribution.tsv", ["k", "probability"],
                  [[k, float(v)] for k, v in enumerate(emp.probs)])
    run.write_json("ingest.json", {
        "images": [{"path": str(p), "patches": c.total, "constant": flag} for p, c, flag in results],
        "K": space.K,
        "n_images": emp.n_images,
        "entropy": entropy(emp.probs),
    })
    flagged = sum(flag for _, _, flag in results)
    print(f"{len(results)} image(s), {int(emp.pooled_counts.sum())} patches, K = {space.K}"
          + (f", {flagged} constant image(s) flagged" if flagged else ""))
    return EXIT_OK


def _target(args, run, space, group):
    run.digest(args.target)
    target = read_distribution(args.target, space.K)
    if args.symmetrize:
        target = build_action(group, space).symmetrize(target)
    return target


def _fit_json(model, report, terms, pools) -> dict:
    tags = {t for t, _ in terms[1:]} or {terms[0][0]}
    pool = tags.pop() if len(tags) == 1 else MIXED
    return {
        "A": [list(alpha) for _, alpha in terms],
        "terms": [format_term(t) for t in terms],
        "labels": [pools[t].label(a) for t, a in terms],
        "pool": pool,
        "lambda": [float(v) for v in model.lam],
        "psi": float(model.psi),
        "kl": report.kl_to_target,
        "entropy": report.entropy,
        "residual": report.residual_inf,
        "iterations": report.iterations,
        "moments": [float(v) for v in report.moments],
    }


def cmd_fit(args) -> int:
    run = Run(args)
    space, group = _setup(args)
    gens = _gens(args, space.m)
    target = _target(args, run, space, group)
    terms = [parse_term(t, gens.N, space.m) for t in args.terms]
    tags = {t for t, _ in terms}
    pool = MIXED if len(tags) > 1 else (tags.pop() if tags else INVARIANT)
    pools = make_pools(pool, gens, space)
    const_tag = INVARIANT if INVARIANT in pools else ORDINARY
    const: Term = (const_tag, (0,) * pools[const_tag].gens.N)
    terms = [const] + [t for t in terms if any(t[1])]
    if len(set(terms)) != len(terms):
        raise ValidationError("repeated term")
    F = np.column_stack([pools[t].values(a) for t, a in terms])
    model, report = solve_maxent(ConstraintSet(tuple(terms), F, F.T @ target, target), tol=args.tol)
    body = _fit_json(model, report, terms, pools)
    run.write_json("fit.json", body)
    coords = [",".join(_coord(int(v)) for v in row) for row in space.points2]
    run.write_tsv("density.tsv", ["k", "point", "probability"],
                  [[k, coords[k], float(p)] for k, p in enumerate(model.density)])
    print(f"|A| = {len(terms)}, KL = {report.kl_to_target:.6g}, H = {report.entropy:.6g}, "
          f"residual = {report.residual_inf:.3g}, {report.iterations} Newton steps")
    return EXIT_OK


def cmd_greedy(args) -> int:
    run = Run(args)
    space, group = _setup(args)
    gens = _gens(args, space.m)
    target = _target(args, run, space, group)
    cfg = BuilderConfig(
        pool=args.pool, r=args.lookahead_r, sample_size=args.sample, seed=args.seed,
        max_terms=args.max_terms, kl_stop=args.kl_stop, policy=args.policy, threads=args.threads,
        ordinary_r=args.ordinary_r, ordinary_sample_size=args.ordinary_sample, solver_tol=args.tol)
    pools = make_pools(cfg.pool, gens, space)
    build = stepwise_build if args.strategy == STEPWISE else greedy_build
    path = build(target, pools, cfg)
    rows = path_rows(path, pools)
    cols = ["l", "term", "alpha", "pool", "D", "H", "excess", "residual", "iterations", "candidates"]
    run.write_tsv("path.tsv", cols, [[r[c] for c in cols] for r in rows])
    run.write_json("path.json", {
        "strategy": path.strategy,
        "terminal": path.terminal,
        "floor": path.floor,
        "dimension": path.dimension,
        "diagnostics": path.diagnostics,
        "steps": [{**r, "fit": _fit_json(st.model, st.report, list(st.A), pools)}
                  for r, st in zip(rows, path.steps)],
    })
    print(f"{path.strategy}: {path.n_terms} term(s), terminal {path.terminal}, "
          f"final D = {path.final.D:.6g} (floor {path.floor:.6g})")
    return EXIT_OK


# -- argument parsing ---------------------------------------------------------------


def _optional_int(text: str) -> int | None:
    return None if text.lower() in ("none", "") else int(text)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--group", default="microimage",
                        help="builtin group (microimage, trivial, sign_inversion) or JSON file")
    common.add_argument("--generators", default="microimage",
                        help="builtin generator set (microimage, sign_inversion, coordinates) or JSON file")
    common.add_argument("--L", type=int, default=4, help="intensity levels")
    common.add_argument("--n", type=int, default=2, help="patch side")
    common.add_argument("--out-dir", default=".", help="directory for output files")
    common.add_argument("--no-timestamp", action="store_true", help="omit creation time from outputs")
    common.add_argument("--threads", type=int, default=1)
    common.add_argument("-v", "--verbose", action="count", default=0)

    model = argparse.ArgumentParser(add_help=False)
    model.add_argument("--target", required=True, help="distribution or counts TSV")
    model.add_argument("--symmetrize", action="store_true", help="fit the group-averaged target")
    model.add_argument("--tol", type=float, default=1e-10, help="moment residual tolerance")

    parser = argparse.ArgumentParser(prog="invmaxent", description=__doc__)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("orbits", parents=[common], help="enumerate orbits of the group on the lattice")
    p.add_argument("--signatures", action="store_true", help="add generator values per orbit")
    p.set_defaults(func=cmd_orbits)

    p = sub.add_parser("check-generators", parents=[common], help="certify a generator set")
    p.set_defaults(func=cmd_check_generators)

    p = sub.add_parser("ingest", parents=[common], help="images to microimage counts")
    p.add_argument("images", nargs="+")
    p.add_argument("--format", choices=("pgm", "raw16"), default="pgm")
    p.add_argument("--width", type=int)
    p.add_argument("--height", type=int)
    p.add_argument("--endian", choices=("big", "little"), default="big")
    p.add_argument("--clip", type=float, default=0.005, help="fraction clamped in each tail")
    p.add_argument("--no-log", action="store_true", help="skip the log(1 + v) transform")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("fit", parents=[common, model], help="one maximum-entropy fit")
    p.add_argument("terms", nargs="*", help="e.g. f:(0,0,1,0,0), f3^2, x:(1,0,0,0)")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("greedy", parents=[common, model], help="build a nested model path")
    p.add_argument("--strategy", choices=(GREEDY, STEPWISE), default=GREEDY)
    p.add_argument("--pool", choices=(INVARIANT, ORDINARY, MIXED), default=INVARIANT)
    p.add_argument("--lookahead-r", type=int, default=5)
    p.add_argument("--sample", type=_optional_int, default=None)
    p.add_argument("--ordinary-r", type=int, default=None, help="mixed pool: lookahead for ordinary terms")
    p.add_argument("--ordinary-sample", type=_optional_int, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-terms", type=_optional_int, default=None)
    p.add_argument("--kl-stop", type=float, default=1e-9)
    p.add_argument("--policy", choices=POLICIES, default=POLICIES[0])
    p.set_defaults(func=cmd_greedy)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except VerificationError as exc:
        print(f"verification failure: {exc}", file=sys.stderr)
        return EXIT_VERIFICATION
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
