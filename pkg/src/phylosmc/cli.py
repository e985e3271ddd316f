"""Command-line front end: ``phylosmc {simulate,infer,posterior,toycheck}``.

Exit codes: 0 success, 1 runtime failure, 2 domain outcome (extinct
simulation, every run failed, a self-check that did not pass), 64 usage.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from dataclasses import dataclass

import numpy as np

from . import phylo, smc
from .models import (
    BisseConfig,
    CrbdConfig,
    HiddenTreeExplosion,
    IndicatorConfig,
    LgssConfig,
    bisse_program,
    crbd_program,
    indicator_acceptance,
    indicator_program,
    kalman_log_evidence,
    lgss_program,
    posterior_mixture,
)

EXIT_OK, EXIT_FAILURE, EXIT_DOMAIN, EXIT_USAGE = 0, 1, 2, 64

MODELS = ("crbd", "bisse", "lgss", "indicator")
METHODS = ("bpf", "apf")
SAMPLINGS = ("immediate", "delayed", "fixed")
RUN_FIELDS = ("run", "method", "sampling", "N", "logZ", "propagations", "degenerate", "error")
MIXTURE_FIELDS = ("rate", "component", "weight", "shape", "scale")
QUANTILES = (0.025, 0.5, 0.975)

# spawn key of the stream that picks one particle per run for posterior mixtures
POSTERIOR_STREAM = 2**32


class UsageError(Exception):
    pass


class DomainOutcome(Exception):
    pass


@dataclass
class ExperimentSpec:
    model: str = "crbd"
    method: str = "apf"
    sampling: str = "delayed"
    N: int = 512
    M: int = 100
    seed: int = 0
    tree: str | None = None
    states: str | None = None
    prior_lambda: tuple = (1.0, 1.0)
    prior_mu: tuple = (1.0, 1.0)
    prior_sigma: tuple | None = None
    lam: tuple | None = None
    mu: tuple | None = None
    sigma: float | None = None
    observations: str | None = None
    b: float = 1.0
    step_var: float = 1.0
    checkpoints: int = 5
    max_attempts: int = smc.DEFAULT_MAX_ATTEMPTS

    def validate(self):
        if self.model not in MODELS:
            raise UsageError(f"unknown model {self.model!r}")
        if self.method not in METHODS:
            raise UsageError(f"unknown method {self.method!r}")
        if self.sampling not in SAMPLINGS:
            raise UsageError(f"unknown sampling {self.sampling!r}")
        if self.N < 1 or self.M < 1:
            raise UsageError("--particles and --runs must be at least 1")
        if self.max_attempts < 1:
            raise UsageError("--max-attempts must be at least 1")
        phylogenetic = self.model in ("crbd", "bisse")
        if not phylogenetic and self.sampling != "immediate":
            raise UsageError(f"--sampling {self.sampling} is not available for {self.model}; "
                             "toy models only support immediate sampling")
        if phylogenetic and self.tree is None:
            raise UsageError(f"{self.model} needs --tree")
        if self.states is not None and self.model != "bisse":
            raise UsageError("--states only applies to bisse")
        for name in ("prior_lambda", "prior_mu", "prior_sigma"):
            prior = getattr(self, name)
            if prior is not None and not all(v > 0 for v in prior):
                raise UsageError(f"--{name.replace('_', '-')} needs positive shape and scale")
        width = 1 if self.model == "crbd" else 2
        if self.sampling == "fixed":
            if self.lam is None or self.mu is None or (self.model == "bisse" and self.sigma is None):
                need = "--lambda and --mu" + (" and --sigma" if self.model == "bisse" else "")
                raise UsageError(f"fixed sampling needs {need}")
            if len(self.lam) != width or len(self.mu) != width:
                raise UsageError(f"{self.model} takes {width} value(s) for --lambda and --mu")
            if min(self.lam) <= 0 or min(self.mu) < 0 or (self.sigma or 0) < 0:
                raise UsageError("fixed rates need lambda > 0, mu >= 0, sigma >= 0")
        elif self.lam is not None or self.mu is not None or self.sigma is not None:
            raise UsageError("--lambda/--mu/--sigma only apply with --sampling fixed")
        if self.model == "indicator" and (self.b < 0 or self.step_var <= 0 or self.checkpoints < 1):
            raise UsageError("indicator needs --b >= 0, --step-var > 0, --checkpoints >= 1")
        return self


# ---------------------------------------------------------------------------
# model construction


def _read_observations(path):
    with open(path) as fh:
        text = fh.read().replace(",", " ")
    try:
        values = tuple(float(v) for v in text.split())
    except ValueError as exc:
        raise ValueError(f"{path}: observations must be numbers") from exc
    if not values:
        raise ValueError(f"{path}: no observations")
    return values


def build_program(spec: ExperimentSpec):
    if spec.model == "lgss":
        return lgss_program(_lgss_config(spec))
    if spec.model == "indicator":
        return indicator_program(_indicator_config(spec))
    tree = phylo.read_newick(spec.tree)
    if spec.model == "crbd":
        fixed = spec.sampling == "fixed"
        return crbd_program(CrbdConfig(
            tree, tuple(spec.prior_lambda), tuple(spec.prior_mu), spec.sampling,
            lam=spec.lam[0] if fixed else None, mu=spec.mu[0] if fixed else None,
        ))
    states = phylo.read_tip_states(spec.states) if spec.states else {}
    return bisse_program(BisseConfig(
        tree, states, tuple(spec.prior_lambda), tuple(spec.prior_mu),
        tuple(spec.prior_sigma) if spec.prior_sigma else None, spec.sampling,
        lambdas=tuple(spec.lam) if spec.lam else None,
        mus=tuple(spec.mu) if spec.mu else None, sigma=spec.sigma,
    ))


def _lgss_config(spec):
    if spec.observations:
        return LgssConfig(_read_observations(spec.observations))
    return LgssConfig()


def _indicator_config(spec):
    return IndicatorConfig(b=spec.b, step_var=spec.step_var, T=spec.checkpoints)


def _run_batch(spec, program, keep_particles=False, fail_fast=False):
    kw = {"max_attempts": spec.max_attempts} if spec.method == "apf" else {}
    return smc.batch(program, spec.method, spec.N, spec.M, spec.seed,
                     keep_particles=keep_particles, fail_fast=fail_fast, **kw)


# ---------------------------------------------------------------------------
# output helpers


def _num(x):
    """JSON-safe float: non-finite values become ``None``."""
    x = float(x)
    return x if math.isfinite(x) else None


def _dump_json(obj, path):
    text = json.dumps(obj, sort_keys=True, indent=2) + "\n"
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        with open(path, "w") as fh:
            fh.write(text)


def _write_csv(path, header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    if path == "-":
        sys.stdout.write(buf.getvalue())
    else:
        with open(path, "w", newline="") as fh:
            fh.write(buf.getvalue())


def run_rows(spec, result):
    for i, r in enumerate(result.runs):
        yield (i, spec.method, spec.sampling, spec.N, repr(float(r.log_z)),
               r.total_propagations, int(r.degenerate), r.error or "")


def summary_dict(spec, result):
    out = result.summary.to_dict()
    out.update(model=spec.model, method=spec.method, sampling=spec.sampling, seed=spec.seed)
    return out


def _z(estimate, target, se):
    if se > 0:
        return (estimate - target) / se
    # a batch with no spread is only consistent if it hits the target
    return 0.0 if estimate == target else math.nan


def z_score(log_z, oracle_log_z):
    """Batch z-score of the mean estimate against an exact evidence."""
    mean, se, _ = smc.scaled_mean_se(log_z, shift=oracle_log_z)
    return _z(mean, 1.0, se)


# ---------------------------------------------------------------------------
# commands


def cmd_simulate(args):
    if args.lam < 0 or args.mu < 0 or args.age <= 0:
        raise UsageError("need --lambda >= 0, --mu >= 0 and --age > 0")
    rng = np.random.default_rng(args.seed)
    complete = phylo.simulate_crbd(args.lam, args.mu, args.age, rng, max_nodes=args.max_nodes)
    with open(f"{args.out}.complete.nwk", "w") as fh:
        fh.write(phylo.write_newick(complete) + "\n")
    try:
        recon = phylo.prune(complete)
    except phylo.ExtinctTreeError:
        raise DomainOutcome("every lineage went extinct; no reconstructed tree written") from None
    with open(f"{args.out}.reconstructed.nwk", "w") as fh:
        fh.write(phylo.write_newick(recon) + "\n")
    n = sum(node.is_extant for node in recon.nodes)
    print(f"{n} extant species; wrote {args.out}.complete.nwk and {args.out}.reconstructed.nwk",
          file=sys.stderr)
    return EXIT_OK


def cmd_infer(args):
    spec = spec_from_args(args)
    if args.kalman_check and spec.model != "lgss":
        raise UsageError("--kalman-check needs --model lgss")
    program = build_program(spec)
    result = _run_batch(spec, program)
    if args.csv:
        _write_csv(args.csv, RUN_FIELDS, run_rows(spec, result))
    summary = summary_dict(spec, result)
    if args.kalman_check:
        oracle = kalman_log_evidence(program.cfg)
        summary["oracle_log_z"] = oracle
        summary["z_score"] = _num(z_score(result.log_z, oracle))
    _dump_json(summary, args.json)
    if result.summary.all_degenerate:
        reason = result.runs[0].error or "every run hit a checkpoint where all weights were zero"
        raise DomainOutcome(f"no run produced a finite estimate: {reason}")
    return EXIT_OK


def cmd_posterior(args):
    spec = spec_from_args(args)
    if spec.model not in ("crbd", "bisse"):
        raise UsageError("posterior needs --model crbd or bisse")
    if spec.sampling != "delayed":
        raise UsageError("posterior mixtures need --sampling delayed")
    program = build_program(spec)
    result = _run_batch(spec, program, keep_particles=True)
    if result.summary.all_degenerate:
        raise DomainOutcome(f"no run produced a finite estimate ({spec.M} runs)")
    rng = np.random.default_rng(np.random.SeedSequence(spec.seed, spawn_key=(POSTERIOR_STREAM,)))
    try:
        mixtures = posterior_mixture(result, program, rng)
    except ValueError as exc:
        raise DomainOutcome(str(exc)) from None
    good = [i for i, r in enumerate(result.runs) if math.isfinite(r.log_z)]
    rows = []
    rates = {}
    for name, mix in mixtures.items():
        for comp, w, k, th in zip(good, mix.weights, mix.shapes, mix.scales):
            rows.append((name, comp, repr(float(w)), repr(float(k)), repr(float(th))))
        rates[name] = {"mean": mix.mean(), "components": len(mix)}
        for q in QUANTILES:
            rates[name][f"q{q:g}"] = mix.quantile(q)
    _write_csv(args.out, MIXTURE_FIELDS, rows)
    summary = summary_dict(spec, result)
    summary["rates"] = rates
    _dump_json(summary, args.json)
    return EXIT_OK


def _lgss_check(spec):
    cfg = _lgss_config(spec)
    oracle = kalman_log_evidence(cfg)
    checks = []
    for method in METHODS:
        result = smc.batch(lgss_program(cfg), method, spec.N, spec.M, spec.seed)
        mean, se, _ = smc.scaled_mean_se(result.log_z, shift=oracle)
        z = z_score(result.log_z, oracle)
        checks.append({"check": "mean_evidence", "method": method, "estimate": mean * math.exp(oracle),
                       "se": se * math.exp(oracle), "oracle": math.exp(oracle), "z": _num(z),
                       "pass": bool(abs(z) < 3)})
    return {"oracle_log_z": oracle}, checks


def _indicator_check(spec):
    cfg = _indicator_config(spec)
    p = indicator_acceptance(cfg)
    head = {"acceptance_probability": p, "oracle_evidence": p**cfg.T}
    checks = []
    if p == 0.0:
        head["explanation"] = ("acceptance probability is zero (b = 0): no particle can ever "
                               "get positive weight, so the alive filter starves")
    try:
        apf = smc.batch(indicator_program(cfg), "apf", spec.N, spec.M, spec.seed,
                        fail_fast=True, max_attempts=spec.max_attempts)
    except smc.CheckpointStarvation as exc:
        checks.append({"check": "propagations", "method": "apf", "pass": False,
                       "error": f"starvation: {exc}"})
        return head, checks
    target = (spec.N + 1) / p
    counts = np.array([r.propagations for r in apf.runs], dtype=float)
    for t in range(cfg.T):
        mean = counts[:, t].mean()
        se = counts[:, t].std(ddof=1) / math.sqrt(spec.M) if spec.M > 1 else math.nan
        z = _z(mean, target, se)
        checks.append({"check": "propagations", "method": "apf", "checkpoint": t + 1,
                       "estimate": mean, "se": _num(se), "oracle": target, "z": _num(z),
                       "pass": bool(abs(z) < 3)})
    for method, result in (("bpf", smc.batch(indicator_program(cfg), "bpf", spec.N, spec.M,
                                             spec.seed)), ("apf", apf)):
        oracle = math.log(p) * cfg.T
        z = z_score(result.log_z, oracle)
        checks.append({"check": "mean_evidence", "method": method,
                       "estimate": float(np.mean(np.exp(result.log_z))), "oracle": p**cfg.T,
                       "z": _num(z), "pass": bool(abs(z) < 3)})
    return head, checks


def cmd_toycheck(args):
    spec = spec_from_args(args, sampling="immediate")
    if spec.model not in ("lgss", "indicator"):
        raise UsageError("toycheck needs --model lgss or indicator")
    head, checks = _lgss_check(spec) if spec.model == "lgss" else _indicator_check(spec)
    ok = all(c["pass"] for c in checks)
    report = {"model": spec.model, "N": spec.N, "M": spec.M, "seed": spec.seed,
              "checks": checks, "pass": ok, **head}
    _dump_json(report, args.json)
    for c in checks:
        where = f" t={c['checkpoint']}" if "checkpoint" in c else ""
        if "error" in c:
            detail = c["error"]
        else:
            detail = "z=nan" if c["z"] is None else f"z={c['z']:+.2f}"
        print(f"{'PASS' if c['pass'] else 'FAIL'} {c['check']} {c['method']}{where} {detail}",
              file=sys.stderr)
    if "explanation" in head:
        print(head["explanation"], file=sys.stderr)
    return EXIT_OK if ok else EXIT_DOMAIN


# ---------------------------------------------------------------------------
# argument parsing


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _spec_flags(p, *, toy=False):
    p.add_argument("--config", help="JSON file of default flag values (flags win)")
    p.add_argument("--model", choices=("lgss", "indicator") if toy else MODELS,
                   default="lgss" if toy else "crbd")
    if not toy:
        p.add_argument("--method", choices=METHODS, default="apf")
        p.add_argument("--sampling", choices=SAMPLINGS, default=None,
                       help="default: delayed for crbd/bisse, immediate for toy models")
    p.add_argument("-N", "--particles", type=int, default=None, dest="N")
    p.add_argument("-M", "--runs", type=int, default=None, dest="M")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-attempts", type=int, default=smc.DEFAULT_MAX_ATTEMPTS,
                   help="alive filter: propagations allowed per checkpoint")
    if not toy:
        p.add_argument("--tree", help="Newick file of the reconstructed tree")
        p.add_argument("--states", help="CSV with header label,state (bisse)")
        p.add_argument("--prior-lambda", nargs=2, type=float, metavar=("SHAPE", "SCALE"),
                       default=(1.0, 1.0))
        p.add_argument("--prior-mu", nargs=2, type=float, metavar=("SHAPE", "SCALE"),
                       default=(1.0, 1.0))
        p.add_argument("--prior-sigma", nargs=2, type=float, metavar=("SHAPE", "SCALE"),
                       help="bisse switch-rate prior; default shape 1, scale 10 / tree length")
        p.add_argument("--lambda", nargs="+", type=float, dest="lam",
                       help="fixed speciation rate(s): one for crbd, two for bisse")
        p.add_argument("--mu", nargs="+", type=float, help="fixed extinction rate(s)")
        p.add_argument("--sigma", type=float, help="fixed bisse switch rate")
    p.add_argument("--observations", help="lgss observations, whitespace or comma separated")
    p.add_argument("--b", type=float, default=1.0, help="indicator half-width")
    p.add_argument("--step-var", type=float, default=1.0, help="indicator step variance")
    p.add_argument("--checkpoints", type=int, default=5, help="indicator checkpoints")
    p.add_argument("--json", help="summary JSON path (default: stdout)")


def build_parser():
    parser = _Parser(prog="phylosmc", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", help="simulate a complete CRBD tree and its reconstruction")
    p.add_argument("--lambda", type=float, required=True, dest="lam")
    p.add_argument("--mu", type=float, required=True)
    p.add_argument("--age", type=float, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-nodes", type=int, default=1_000_000)
    p.add_argument("--out", required=True,
                   help="path prefix; writes PREFIX.complete.nwk and PREFIX.reconstructed.nwk")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("infer", help="run a batch of filters and summarise the evidence estimates")
    _spec_flags(p)
    p.add_argument("--csv", help="per-run CSV path ('-' for stdout)")
    p.add_argument("--kalman-check", action="store_true",
                   help="lgss only: add the exact evidence and the batch z-score")
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("posterior", help="gamma-mixture posteriors of the rates (delayed sampling)")
    _spec_flags(p)
    p.add_argument("--out", required=True, help="mixture CSV path ('-' for stdout)")
    p.set_defaults(func=cmd_posterior)

    p = sub.add_parser("toycheck", help="check both filters against exact answers on toy models")
    _spec_flags(p, toy=True)
    p.set_defaults(func=cmd_toycheck)
    return parser


TOY_DEFAULTS = {"N": 64, "M": 2000}
DEFAULTS = {"N": 512, "M": 100}


def spec_from_args(args, sampling=None):
    toy = args.command == "toycheck"
    base = TOY_DEFAULTS if toy else DEFAULTS
    if sampling is None:
        sampling = args.sampling or ("delayed" if args.model in ("crbd", "bisse") else "immediate")
    spec = ExperimentSpec(
        model=args.model,
        method=getattr(args, "method", "apf"),
        sampling=sampling,
        N=args.N if args.N is not None else base["N"],
        M=args.M if args.M is not None else base["M"],
        seed=args.seed,
        tree=getattr(args, "tree", None),
        states=getattr(args, "states", None),
        prior_lambda=tuple(getattr(args, "prior_lambda", (1.0, 1.0))),
        prior_mu=tuple(getattr(args, "prior_mu", (1.0, 1.0))),
        prior_sigma=tuple(args.prior_sigma) if getattr(args, "prior_sigma", None) else None,
        lam=tuple(args.lam) if getattr(args, "lam", None) else None,
        mu=tuple(args.mu) if getattr(args, "mu", None) else None,
        sigma=getattr(args, "sigma", None),
        observations=args.observations,
        b=args.b,
        step_var=args.step_var,
        checkpoints=args.checkpoints,
        max_attempts=args.max_attempts,
    )
    return spec.validate()


def _apply_config(parser, argv):
    """Re-parse with defaults from ``--config``; explicit flags still win."""
    args = parser.parse_args(argv)
    path = getattr(args, "config", None)
    if not path:
        return args
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from None
    if not isinstance(cfg, dict):
        raise UsageError("config file must hold a JSON object")
    sub = parser._subparsers._group_actions[0].choices[args.command]
    dests = {}
    for action in sub._actions:
        for opt in action.option_strings:
            if opt.startswith("--"):
                dests[opt[2:]] = action.dest
                dests[opt[2:].replace("-", "_")] = action.dest
    unknown = sorted(set(cfg) - set(dests))
    if unknown:
        raise UsageError(f"unknown config keys: {', '.join(unknown)}")
    sub.set_defaults(**{dests[k]: v for k, v in cfg.items()})
    return parser.parse_args(argv)


def main(argv=None):
    parser = build_parser()
    try:
        args = _apply_config(parser, argv)
        return args.func(args)
    except SystemExit as exc:
        # argparse exits on --help and on bad flags; hand the code back to the caller
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    except UsageError as exc:
        print(f"phylosmc: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DomainOutcome as exc:
        print(f"phylosmc: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    except (OSError, ValueError, HiddenTreeExplosion) as exc:
        print(f"phylosmc: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
