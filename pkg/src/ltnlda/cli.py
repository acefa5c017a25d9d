"""Command-line front end.

Every subcommand writes its outputs plus ``manifest.json``; ``ltnlda replay
manifest.json`` reruns it with the recorded arguments.  Defaults can come
from an INI file (``--config``), with one section per subcommand and an
optional ``[DEFAULT]`` section; command-line flags win.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical
failure.
"""

from __future__ import annotations

import argparse
import configparser
import json
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .corpus import Corpus
from .evaluation import (SCORING_CONFIG, cv_grid, perplexity_lda, perplexity_ltn,
                         two_stage_selection, write_curves_csv, write_grid_csv)
from .io import (DataError, fmt, ingest_counts, read_json, write_chain, write_counts,
                 write_json, write_summary)
from .lda_gibbs import LdaChain, LdaHyperparams, run_lda_chain
from .ltn_gibbs import ChainConfig, LtnChain, LtnHyperparams, run_chain
from .simulate import generate_lda_corpus, generate_ltn_corpus, generate_tree
from .summary import l2_distance, match_subcommunities, summarize_lda, summarize_ltn
from .tree import NewickError, parse_newick, psi_to_beta, read_newick

SEED_ENV = "LTNLDA_SEED"
EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4


class ConfigError(ValueError):
    pass


class NumericalError(RuntimeError):
    pass


def int_range(text):
    """Parse ``"2..8"``, ``"2,4,6"`` or a mix like ``"1..3,5"``."""
    out = []
    try:
        for part in str(text).split(","):
            part = part.strip()
            if ".." in part:
                lo, hi = part.split("..")
                out.extend(range(int(lo), int(hi) + 1))
            elif part:
                out.append(int(part))
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer list or range: {text!r}") from None
    if not out:
        raise argparse.ArgumentTypeError("empty range")
    return out


def _default_seed():
    raw = os.environ.get(SEED_ENV)
    if raw is None:
        return 0
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"{SEED_ENV} must be an integer, got {raw!r}") from None


# -- argument groups ----------------------------------------------------

def _chain_args(p, iterations=2000, burn_in=1000, thin=10):
    p.add_argument("--iterations", type=int, default=iterations)
    p.add_argument("--burn-in", type=int, default=burn_in)
    p.add_argument("--thin", type=int, default=thin)
    p.add_argument("--seed", type=int, default=None,
                   help=f"master seed (default: ${SEED_ENV} or 0)")


def _ltn_hyper_args(p):
    p.add_argument("--K", type=int, default=4)
    p.add_argument("--C", type=int, default=5)
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--mu0", type=float, default=0.0)
    p.add_argument("--lambda0", type=float, default=1.0)
    p.add_argument("--a1", type=float, default=1e4)
    p.add_argument("--a2", type=float, default=10.0)
    p.add_argument("--b", type=float, default=10.0)
    p.add_argument("--pg-threshold", type=int, default=30)
    p.add_argument("--no-block", action="store_true",
                   help="use the unblocked psi-then-mu scan")


def _data_args(p, tree=True):
    p.add_argument("--counts", required=True, help="samples x ASV count CSV")
    if tree:
        p.add_argument("--tree", required=True, help="Newick file")
    p.add_argument("--prune-threshold", type=int, default=0)


def build_parser():
    parser = argparse.ArgumentParser(prog="ltnlda", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=f"ltnlda {__version__}")
    parser.add_argument("--config", help="INI file with per-subcommand defaults")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="draw a corpus with known truth")
    p.add_argument("--model", choices=("ltn", "lda"), default="ltn")
    p.add_argument("--V", type=int, default=49)
    p.add_argument("--tree-shape", choices=("balanced", "caterpillar", "random"),
                   default="random")
    p.add_argument("--tree-seed", type=int, default=0)
    p.add_argument("--tree", help="use this Newick tree instead of generating one")
    p.add_argument("--D", type=int, default=50)
    p.add_argument("--N", type=int, default=10_000)
    p.add_argument("--gamma", type=float, default=1.0, help="LDA composition prior")
    p.add_argument("--truth", help="reuse mu and tau from this truth.json (test sets)")
    p.add_argument("--knockout", action="store_true", help="zero node variances")
    _ltn_hyper_args(p)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit-ltn", help="fit LTN-LDA by Gibbs sampling")
    _data_args(p)
    _ltn_hyper_args(p)
    _chain_args(p)
    p.add_argument("--top-n", type=int, default=5)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_fit_ltn)

    p = sub.add_parser("fit-lda", help="fit LDA by collapsed Gibbs sampling")
    _data_args(p, tree=False)
    p.add_argument("--K", type=int, default=4)
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--gamma", type=float, default=1.0)
    _chain_args(p)
    p.add_argument("--top-n", type=int, default=5)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_fit_lda)

    p = sub.add_parser("summarize", help="recompute summaries from a fit directory")
    p.add_argument("--fit", required=True)
    p.add_argument("--top-n", type=int, default=5)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_summarize)

    p = sub.add_parser("perplexity", help="score held-out samples against a fit")
    p.add_argument("--fit", required=True)
    p.add_argument("--test-counts", required=True)
    _chain_args(p, SCORING_CONFIG.iterations, SCORING_CONFIG.burn_in, SCORING_CONFIG.thin)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_perplexity)

    p = sub.add_parser("cv-grid", help="cross-validated perplexity over (K, C)")
    p.add_argument("--model", choices=("ltn", "lda"), default="ltn")
    p.add_argument("--counts", required=True)
    p.add_argument("--tree", help="Newick file (required for ltn)")
    p.add_argument("--prune-threshold", type=int, default=0)
    p.add_argument("--K", type=int_range, default=int_range("2..8"))
    p.add_argument("--C", type=int_range, default=int_range("1..21"))
    p.add_argument("--folds", type=int, default=4)
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--gamma", type=float, default=1.0)
    _chain_args(p)
    p.add_argument("--score-iterations", type=int, default=SCORING_CONFIG.iterations)
    p.add_argument("--score-burn-in", type=int, default=SCORING_CONFIG.burn_in)
    p.add_argument("--rtol", type=float, default=0.01)
    p.add_argument("--workers", type=int, default=os.cpu_count() or 1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_cv_grid)

    p = sub.add_parser("compare", help="align fits and tabulate abundances and L2")
    p.add_argument("--fits", nargs="+", required=True,
                   help="fit directories; the first is the alignment reference")
    p.add_argument("--truth", help="truth.json to compute L2 distances against")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("replay", help="rerun a subcommand from its manifest")
    p.add_argument("manifest")
    p.add_argument("--out", help="write to this directory instead of the recorded one")
    p.set_defaults(func=cmd_replay)
    return parser


# -- config handling ----------------------------------------------------

def _subparser(parser, name):
    for action in parser._actions:
        if isinstance(action, argparse._SubParsersAction):
            return action.choices[name]
    raise KeyError(name)


def _apply_config(parser, path, command):
    cp = configparser.ConfigParser()
    try:
        with open(path, encoding="utf-8") as fh:
            cp.read_file(fh)
    except (OSError, configparser.Error) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    if not cp.has_section(command) and not cp.defaults():
        return
    sp = _subparser(parser, command)
    # configparser lowercases keys, so match option names case-insensitively
    actions = {a.dest.lower(): a for a in sp._actions if a.dest != "help"}
    section = cp[command] if cp.has_section(command) else cp[cp.default_section]
    defaults = {}
    for key in section:
        dest = key.replace("-", "_").lower()
        if dest not in actions:
            if key not in cp.defaults():
                raise ConfigError(f"unknown option {key!r} in [{command}] of {path}")
            continue
        action = actions[dest]
        try:
            if isinstance(action, argparse._StoreTrueAction):
                val = section.getboolean(key)
            elif action.type is not None:
                val = action.type(section.get(key, raw=True))
            else:
                val = section.get(key, raw=True)
        except (ValueError, argparse.ArgumentTypeError) as exc:
            raise ConfigError(f"bad value for {key!r} in {path}: {exc}") from None
        if action.choices is not None and val not in action.choices:
            raise ConfigError(f"{key!r} must be one of {list(action.choices)}")
        defaults[action.dest] = val
        action.required = False
    sp.set_defaults(**defaults)


def parse_args(argv=None):
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, rest = pre.parse_known_args(argv)
    if known.config:
        command = next((a for a in rest if not a.startswith("-")), None)
        if command is not None:
            _apply_config(parser, known.config, command)
    args = parser.parse_args(argv)
    if getattr(args, "seed", "absent") is None:
        args.seed = _default_seed()
    return args


def _recorded_args(args):
    return {k: v for k, v in sorted(vars(args).items()) if k not in ("func", "config")}


def _write_manifest(args, outputs, extra=None):
    out = Path(args.out)
    manifest = {"tool": "ltnlda", "version": __version__, "command": args.command,
                "args": _recorded_args(args), "outputs": sorted(outputs)}
    if extra:
        manifest.update(extra)
    write_json(manifest, out / "manifest.json")


# -- helpers ------------------------------------------------------------

def _load_tree(path):
    try:
        return read_newick(path)
    except OSError as exc:
        raise DataError(f"cannot read tree {path}: {exc}") from None


def _chain_config(args, fixed=False):
    try:
        return ChainConfig(iterations=args.iterations, burn_in=args.burn_in, thin=args.thin,
                           seed=args.seed, pg_threshold=getattr(args, "pg_threshold", 30),
                           fixed_mu_tau=fixed, block_mu_psi=not getattr(args, "no_block", False))
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _ltn_hyper(args):
    try:
        return LtnHyperparams(K=args.K, C=args.C, alpha=args.alpha, mu0=args.mu0,
                              lambda0=args.lambda0, a1=args.a1, a2=args.a2, b=args.b)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _check_finite(**arrays):
    for name, a in arrays.items():
        if not np.all(np.isfinite(a)):
            raise NumericalError(f"non-finite values in {name}")


def _save_chain_npz(chain, path):
    arrays = {k: getattr(chain, k) for k in
              ("N", "saved_iterations", "log_joint", "sweep_seconds")}
    if isinstance(chain, LtnChain):
        arrays.update(nk=chain.nk, psi=chain.psi, mu=chain.mu, tau=chain.tau)
    else:
        arrays.update(ndk=chain.ndk, nkv=chain.nkv)
    np.savez(path, **arrays)


def _load_fit(fit_dir):
    """Rebuild the chain, tree and labels of a fit directory."""
    fit_dir = Path(fit_dir)
    try:
        manifest = read_json(fit_dir / "manifest.json")
        data = np.load(fit_dir / "chain.npz")
    except OSError as exc:
        raise DataError(f"{fit_dir} is not a fit directory: {exc}") from None
    a = manifest["args"]
    config = ChainConfig(iterations=a["iterations"], burn_in=a["burn_in"], thin=a["thin"],
                         seed=a["seed"])
    labels = tuple(manifest["labels"])
    sample_ids = tuple(manifest["sample_ids"])
    if manifest["command"] == "fit-ltn":
        hyper = LtnHyperparams(**manifest["hyper"])
        chain = LtnChain(hyper=hyper, config=config, N=data["N"],
                         saved_iterations=data["saved_iterations"], nk=data["nk"],
                         psi=data["psi"], mu=data["mu"], tau=data["tau"],
                         log_joint=data["log_joint"], sweep_seconds=data["sweep_seconds"])
        tree = parse_newick(manifest["tree"])
    elif manifest["command"] == "fit-lda":
        hyper = LdaHyperparams(**manifest["hyper"])
        chain = LdaChain(hyper=hyper, config=config, N=data["N"],
                         saved_iterations=data["saved_iterations"], ndk=data["ndk"],
                         nkv=data["nkv"], log_joint=data["log_joint"],
                         sweep_seconds=data["sweep_seconds"])
        tree = None
    else:
        raise DataError(f"{fit_dir} holds a {manifest['command']} run, not a fit")
    return chain, tree, labels, sample_ids


def _summarize(chain, tree, labels, sample_ids):
    if isinstance(chain, LtnChain):
        return summarize_ltn(chain, tree, labels=labels, sample_ids=sample_ids)
    return summarize_lda(chain, labels=labels, sample_ids=sample_ids)


# -- subcommands --------------------------------------------------------

def cmd_simulate(args):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.model == "lda":
        hyper = LdaHyperparams(K=args.K, alpha=args.alpha, gamma=args.gamma)
        corpus, truth = generate_lda_corpus(hyper, args.V, args.D, args.N, seed=args.seed)
        tree = None
    else:
        tree = _load_tree(args.tree) if args.tree else generate_tree(
            args.V, args.tree_shape, seed=args.tree_seed)
        hyper = _ltn_hyper(args)
        mu = tau = None
        if args.truth:
            ref = read_json(args.truth)
            mu, tau = np.array(ref["mu"]), np.array(ref["tau"])
        corpus, truth = generate_ltn_corpus(tree, hyper, args.D, args.N, seed=args.seed,
                                            mu=mu, tau=tau, knockout=args.knockout)
        corpus = Corpus(corpus.counts, labels=tree.labels)
    outputs = ["counts.csv", "truth.json"]
    write_counts(corpus, out / "counts.csv")
    write_json(truth.to_dict(), out / "truth.json")
    if tree is not None:
        (out / "tree.nwk").write_text(tree.to_newick() + "\n", encoding="utf-8")
        outputs.append("tree.nwk")
    _write_manifest(args, outputs)


def cmd_fit_ltn(args):
    out = Path(args.out)
    tree = _load_tree(args.tree)
    corpus, tree, report = ingest_counts(args.counts, args.prune_threshold, tree)
    hyper = _ltn_hyper(args)
    config = _chain_config(args)
    chain = run_chain(corpus, tree, hyper, config)
    _check_finite(psi=chain.psi, mu=chain.mu, tau=chain.tau)
    summary = summarize_ltn(chain, tree, labels=corpus.labels, sample_ids=corpus.sample_ids)
    write_chain(chain, out, sample_ids=corpus.sample_ids)
    _save_chain_npz(chain, out / "chain.npz")
    write_summary(summary, out, top_n=args.top_n)
    _write_manifest(args, ["phi.csv", "beta_k.csv", "beta_dk.csv", "intervals.csv",
                           "top_asvs.json", "nk.csv", "psi.csv", "mu.csv", "tau.csv",
                           "log_joint.csv"],
                    {"hyper": hyper.to_dict(), "tree": tree.to_newick(),
                     "labels": list(corpus.labels), "sample_ids": list(corpus.sample_ids),
                     "ingest": report.to_dict()})


def cmd_fit_lda(args):
    out = Path(args.out)
    corpus, _, report = ingest_counts(args.counts, args.prune_threshold)
    try:
        hyper = LdaHyperparams(K=args.K, alpha=args.alpha, gamma=args.gamma)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    chain = run_lda_chain(corpus, hyper, _chain_config(args))
    summary = summarize_lda(chain, labels=corpus.labels, sample_ids=corpus.sample_ids)
    write_chain(chain, out, sample_ids=corpus.sample_ids)
    _save_chain_npz(chain, out / "chain.npz")
    write_summary(summary, out, top_n=args.top_n)
    _write_manifest(args, ["phi.csv", "beta_k.csv", "intervals.csv", "top_asvs.json",
                           "ndk.csv", "nkv.csv", "log_joint.csv"],
                    {"hyper": hyper.to_dict(), "labels": list(corpus.labels),
                     "sample_ids": list(corpus.sample_ids), "ingest": report.to_dict()})


def cmd_summarize(args):
    chain, tree, labels, sample_ids = _load_fit(args.fit)
    summary = _summarize(chain, tree, labels, sample_ids)
    write_summary(summary, args.out, top_n=args.top_n)
    outputs = ["phi.csv", "beta_k.csv", "intervals.csv", "top_asvs.json"]
    if summary.beta_dk is not None:
        outputs.append("beta_dk.csv")
    _write_manifest(args, outputs)


def cmd_perplexity(args):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    chain, tree, labels, _ = _load_fit(args.fit)
    summary = _summarize(chain, tree, labels, None)
    test, _, _ = ingest_counts(args.test_counts, 0, tree)
    if tree is None and test.labels != labels:
        pos = {lab: j for j, lab in enumerate(test.labels)}
        missing = [lab for lab in labels if lab not in pos]
        if missing or len(test.labels) != len(labels):
            raise DataError(f"test ASV labels do not match the fit: missing {missing}")
        test = Corpus(test.counts[:, [pos[lab] for lab in labels]], test.sample_ids, labels)
    config = _chain_config(args, fixed=True)
    try:
        if tree is not None:
            res = perplexity_ltn(summary, test, tree, chain.hyper, config)
        else:
            res = perplexity_lda(summary, test, chain.hyper, config)
    except ValueError as exc:
        raise DataError(str(exc)) from None
    _check_finite(loglik=res.loglik)
    with open(out / "perplexity.csv", "w", encoding="utf-8") as fh:
        fh.write("sample_id,loglik,tokens\n")
        for sid, ll, n in zip(test.sample_ids, res.loglik, res.tokens):
            fh.write(f"{sid},{fmt(ll)},{int(n)}\n")
    write_json({"perplexity": res.perplexity, "iterations": res.iterations,
                "tokens": int(res.tokens.sum()), "loglik": float(res.loglik.sum())},
               out / "perplexity.json")
    _write_manifest(args, ["perplexity.csv", "perplexity.json"])


def cmd_cv_grid(args):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.model == "ltn" and not args.tree:
        raise ConfigError("--tree is required for the ltn model")
    tree = _load_tree(args.tree) if args.tree else None
    corpus, tree, _ = ingest_counts(args.counts, args.prune_threshold, tree)
    fit_config = _chain_config(args)
    try:
        score_config = replace(SCORING_CONFIG, iterations=args.score_iterations,
                               burn_in=args.score_burn_in)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    hyper_kw = {"alpha": args.alpha} if args.model == "ltn" else {"alpha": args.alpha,
                                                                    "gamma": args.gamma}
    try:
        rows = cv_grid(corpus, tree, args.K, args.C, args.folds, fit_config, score_config,
                       seed=args.seed, model=args.model, hyper_kw=hyper_kw,
                       workers=max(1, args.workers))
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    write_grid_csv(rows, out / "perplexity_grid.csv")
    write_curves_csv(rows, out / "perplexity_curves.csv")
    write_json(two_stage_selection(rows, args.rtol), out / "selection.json")
    _write_manifest(args, ["perplexity_grid.csv", "perplexity_curves.csv", "selection.json"])


def cmd_compare(args):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    fits = []
    for d in args.fits:
        chain, tree, labels, sample_ids = _load_fit(d)
        fits.append((d, chain, tree, _summarize(chain, tree, labels, sample_ids)))
    truth = read_json(args.truth) if args.truth else None
    if truth is not None:
        if truth["model"] == "ltn":
            ttree = parse_newick(truth["tree"])
            ref_beta = psi_to_beta(ttree, np.array(truth["mu"]))
            true_bdk = psi_to_beta(ttree, np.array(truth["psi"]))
        else:
            ref_beta, true_bdk = np.array(truth["beta_k"]), None
        true_phi = np.array(truth["phi"])
    else:
        ref_beta = fits[0][3].beta_k
    ab_rows, l2_rows = [], []
    for d, chain, tree, s in fits:
        s = _align_to_reference(s, ref_beta)
        model = "ltn" if isinstance(chain, LtnChain) else "lda"
        for k in range(s.K):
            for j, sid in enumerate(s.sample_ids or range(s.phi.shape[0])):
                ab_rows.append([d, model, s.K, f"k{k + 1}", sid, s.phi[j, k]])
        if truth is not None:
            K0 = ref_beta.shape[0]
            if s.K == K0:
                l2_rows.append([d, model, s.K, "phi", l2_distance(s.phi, true_phi)])
                l2_rows.append([d, model, s.K, "beta_k", l2_distance(s.beta_k, ref_beta)])
                if true_bdk is not None and s.beta_dk is not None:
                    l2_rows.append([d, model, s.K, "beta_dk",
                                    l2_distance(s.beta_dk, true_bdk)])
    _write_rows(out / "abundance.csv", ["fit", "model", "K", "subcommunity", "sample_id",
                                        "phi"], ab_rows)
    outputs = ["abundance.csv"]
    if truth is not None:
        _write_rows(out / "l2.csv", ["fit", "model", "K", "quantity", "l2"], l2_rows)
        outputs.append("l2.csv")
    _write_manifest(args, outputs)


def _align_to_reference(summary, ref_beta):
    """Matched subcommunities first; extras follow in decreasing abundance."""
    return summary.permuted(match_subcommunities(ref_beta, summary.beta_k))


def _write_rows(path, header, rows):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(header) + "\n")
        for r in rows:
            fh.write(",".join(fmt(x) for x in r) + "\n")


def cmd_replay(args):
    try:
        manifest = read_json(args.manifest)
        recorded = dict(manifest["args"])
        command = manifest["command"]
    except (OSError, KeyError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read manifest {args.manifest}: {exc}") from None
    if args.out:
        recorded["out"] = args.out
    sp = _subparser(build_parser(), command)
    ns = argparse.Namespace(**recorded)
    ns.func = sp.get_default("func")
    ns.command = command
    ns.func(ns)


def main(argv=None):
    try:
        args = parse_args(argv)
        args.func(args)
    except ConfigError as exc:
        print(f"ltnlda: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, NewickError, FileNotFoundError) as exc:
        print(f"ltnlda: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NumericalError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"ltnlda: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
