"""Command-line entry point: ``bayesalign align | zcheck | pam | summarize | point-estimate``."""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import io
from .domain import ConfigError, Configuration, GapParams, Matching, default_ladder
from .gapmodel import gap_counts, log_normalizer
from .model import AlignmentModel
from .oracle import FIXTURES, enumerate_matchings
from .pam import bundled_chain, build_pam, load_pam1
from .sampler import initial_state, run_chain, run_tempered
from .seeding import initial_alignment
from .summary import MatchProbTable, export_heatmap, load_dense_heatmap, marginal_probs, point_estimate, rank_matches, summarize

log = logging.getLogger("bayesalign")


def _seq_mode(tokens):
    if tokens is None:
        return None, None
    mode = tokens[0].replace("-", "_")
    if mode == "fixed_pam":
        if len(tokens) != 2:
            raise ConfigError("--seq-mode fixed-pam needs a distance, e.g. fixed-pam 250")
        return mode, int(tokens[1])
    if len(tokens) != 1 or mode not in ("off", "sampled_pam"):
        raise ConfigError(f"unknown --seq-mode {' '.join(tokens)}")
    return mode, None


def _build_config(args, base):
    cfg = io.load_config(args.config, base) if args.config else base
    changes = {}
    for flag, key in (("seed", "seed"), ("v", "v"), ("gap_mode", "gap_mode"), ("sweeps", "sweeps"),
                      ("burn_in", "burn_in"), ("thin", "thin")):
        value = getattr(args, flag)
        if value is not None:
            changes[key] = value
    mode, pam_l = _seq_mode(args.seq_mode)
    if mode is not None:
        changes["seq_mode"] = mode
    if pam_l is not None:
        changes["pam_l"] = pam_l
    if args.tempering and not cfg.temperatures:
        changes["temperatures"] = default_ladder()
    return cfg.replace(**changes) if changes else cfg


def _with_fasta(conf: Configuration, path) -> Configuration:
    records = io.parse_fasta(Path(path).read_text())
    if not records:
        raise ValueError(f"{path}: no FASTA records")
    codes = io.sequence_codes(records[0][1])
    return Configuration(conf.points, codes, conf.id)


def cmd_align(args) -> int:
    if args.oracle_fixture:
        fx = FIXTURES[args.oracle_fixture]()
        x, y = fx.instance.x, fx.instance.y
        base = fx.cfg
    else:
        x = io.parse_pdb(args.x, args.chain_x)
        y = io.parse_pdb(args.y, args.chain_y)
        base = io.ModelConfig()
    if args.fasta_x:
        x = _with_fasta(x, args.fasta_x)
    if args.fasta_y:
        y = _with_fasta(y, args.fasta_y)
    cfg = _build_config(args, base)
    chain = load_pam1(args.pam1) if args.pam1 else None
    model = AlignmentModel(x, y, cfg, chain=chain)
    if args.init_matching:
        start = io.parse_initial_matching(args.init_matching, len(x), len(y))
    elif args.empty_start or args.oracle_fixture:
        start = Matching.empty(len(x), len(y))
    else:
        start = initial_alignment(x.points, y.points, cfg.v, cfg.g, cfg.h).matching
    init = initial_state(model, start)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    log.info("m=%d n=%d start L=%d sweeps=%d", len(x), len(y), start.L, cfg.sweeps)

    stream = run_tempered(model, init) if cfg.temperatures else run_chain(model, init)
    samples = list(stream)
    io.write_samples(out / "samples.csv", samples)
    table = marginal_probs(samples, len(x), len(y))
    export_heatmap(table, out / "matchprobs.csv", out / "matchprobs_dense.csv")
    summary = summarize(samples, cfg.gap_mode == "sampled", cfg.seq_mode == "sampled_pam").to_dict()
    ranking = rank_matches(table)
    summary["first_duplicate_rank"] = ranking.first_duplicate
    summary["config"] = io.dump_config(cfg)
    (out / "summary.json").write_text(json.dumps(io.json_safe(summary), indent=2) + "\n")
    (out / "config.txt").write_text(io.dump_config(cfg))
    print(f"wrote {len(samples)} samples to {out}")
    return 0


def cmd_zcheck(args) -> int:
    gp = GapParams(args.g, args.h)
    fast = log_normalizer(args.m, args.n, gp)
    total = 0.0
    for mt in enumerate_matchings(args.m, args.n):
        s, ext = gap_counts(mt.pairs, args.m, args.n)
        total += math.exp(-(gp.g * s + gp.h * ext))
    brute = -math.log(total)
    rel = abs(math.exp(-fast) - total) / total
    print(json.dumps({"m": args.m, "n": args.n, "g": args.g, "h": args.h,
                      "log_normalizer": fast, "enumeration": brute, "relative_error": rel}))
    return 0 if rel < 1e-12 else 1


def cmd_pam(args) -> int:
    chain = load_pam1(args.pam1) if args.pam1 else bundled_chain()
    pam = build_pam(chain, args.l)
    table = pam.log_psi if args.log else pam.psi
    lines = ["aa " + " ".join(io.AMINO_ACIDS)]
    for a, row in zip(io.AMINO_ACIDS, table):
        lines.append(a + " " + " ".join(repr(float(v)) for v in row))
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_summarize(args) -> int:
    samples = io.read_samples(args.samples)
    gaps = args.sampled_gaps or len({s.g for s in samples}) > 1
    pam = any(s.pam_l is not None for s in samples) and len({s.pam_l for s in samples}) > 1
    summary = summarize(samples, gaps, pam or args.sampled_pam)
    print(json.dumps(io.json_safe(summary.to_dict()), indent=2))
    return 0


def cmd_point_estimate(args) -> int:
    dense = load_dense_heatmap(args.matchprobs)
    m, n = dense.shape
    entries = {(j + 1, k + 1): float(dense[j, k]) for j, k in zip(*np.nonzero(dense))}
    est = point_estimate(MatchProbTable(entries, m, n), args.k)
    for j, k in est.matching.pairs:
        print(j, k)
    if not est.monotone:
        print(f"warning: point estimate is not order-preserving ({est.violation})", file=sys.stderr)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="bayesalign", description="Bayesian alignment of two point sets")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    a = sub.add_parser("align", help="sample the posterior for two structures")
    a.add_argument("--x", help="PDB file for the first structure")
    a.add_argument("--y", help="PDB file for the second structure")
    a.add_argument("--chain-x")
    a.add_argument("--chain-y")
    a.add_argument("--oracle-fixture", choices=sorted(FIXTURES))
    a.add_argument("--fasta-x")
    a.add_argument("--fasta-y")
    a.add_argument("--config")
    a.add_argument("--seed", type=int)
    a.add_argument("--out-dir", default=".")
    a.add_argument("--init-matching")
    a.add_argument("--empty-start", action="store_true", help="start from no matches instead of a seeded alignment")
    a.add_argument("--tempering", action="store_true")
    a.add_argument("--gap-mode", choices=("fixed", "sampled", "integrated"))
    a.add_argument("--seq-mode", nargs="+", metavar="MODE", help="off | fixed-pam L | sampled-pam")
    a.add_argument("--v", type=float)
    a.add_argument("--sweeps", type=int)
    a.add_argument("--burn-in", type=int)
    a.add_argument("--thin", type=int)
    a.add_argument("--pam1", help="PAM-1 transition matrix file (defaults to the bundled chain)")
    a.set_defaults(func=cmd_align)

    z = sub.add_parser("zcheck", help="compare the normalizer recursion against enumeration")
    z.add_argument("--m", type=int, required=True)
    z.add_argument("--n", type=int, required=True)
    z.add_argument("--g", type=float, required=True)
    z.add_argument("--h", type=float, required=True)
    z.set_defaults(func=cmd_zcheck)

    q = sub.add_parser("pam", help="print the PAM odds table at distance l")
    q.add_argument("--l", type=int, required=True)
    q.add_argument("--pam1")
    q.add_argument("--log", action="store_true")
    q.add_argument("--out")
    q.set_defaults(func=cmd_pam)

    s = sub.add_parser("summarize", help="recompute summaries from samples.csv")
    s.add_argument("samples")
    s.add_argument("--sampled-gaps", action="store_true")
    s.add_argument("--sampled-pam", action="store_true")
    s.set_defaults(func=cmd_summarize)

    e = sub.add_parser("point-estimate", help="assignment point estimate from matchprobs_dense.csv")
    e.add_argument("matchprobs")
    e.add_argument("--k", type=float, required=True)
    e.set_defaults(func=cmd_point_estimate)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "align" and not args.oracle_fixture:
        missing = [f for f, v in (("--x", args.x), ("--y", args.y), ("--chain-x", args.chain_x),
                                  ("--chain-y", args.chain_y)) if not v]
        if missing:
            parser.error(f"align needs {', '.join(missing)} (or --oracle-fixture)")
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"bayesalign: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
