"""Experiment driver: problem construction, algorithm dispatch, CSV export.

Usage::

    qprecond run --algo qpgd --nodes 4 --eps 1e-6 --out runs/qpgd
    qprecond compare --algos qpgd,pgd,gd --eps 1e-6 --out runs/cmp
    qprecond sweep --algo gd --max-rounds 200

Exit codes: 0 success, 2 invariant violation or divergence, 3 input error.
"""

import argparse
import configparser
import json
import logging
import math
import os
import sys
from dataclasses import asdict, dataclass, fields

from . import baselines, data, qnewton, qpgd
from .errors import DivergenceError, InputError, InvariantViolation
from .net import Network, Topology
from .trace import write_trace_csv

ALGORITHMS = ("qpgd", "qnewton", "gd", "pgd", "qsgd")
DATASETS = ("synthetic-gaussian", "libsvm-file")


@dataclass
class ExperimentConfig:
    dataset: str = "synthetic-gaussian"
    data: str = ""
    loss: str = "quadratic"
    nodes: int = 4
    seed: int = 0
    algo: str = "qpgd"
    eps: float = 1e-6
    out: str = ""
    m: int = 200
    d: int = 5
    noise: float = 0.0
    rho: float = 1e-2
    penalty: str = "margin"
    eta: float = 0.0  # 0 picks 1/gamma for gd and qsgd
    alpha: float = 0.5
    levels: int = 16
    max_rounds: int = 500
    hessian_update: str = "lattice"
    sigma: float = 0.0  # 0 computes it from the data

    def validate(self):
        if self.dataset not in DATASETS:
            raise InputError(f"dataset must be one of {DATASETS}, got {self.dataset!r}")
        if self.algo not in ALGORITHMS:
            raise InputError(f"algo must be one of {ALGORITHMS}, got {self.algo!r}")
        if self.dataset == "libsvm-file" and not self.data:
            raise InputError("libsvm-file dataset needs --data PATH")
        if self.nodes < 1:
            raise InputError(f"need at least one node, got {self.nodes}")
        if not self.eps > 0:
            raise InputError(f"eps must be positive, got {self.eps}")
        return self


def _coerce(name, value):
    types = {f.name: f.type for f in fields(ExperimentConfig)}
    if name not in types:
        raise InputError(f"unknown config key {name!r}")
    kind = types[name]
    try:
        return kind(value)
    except ValueError:
        raise InputError(f"config key {name!r}: cannot parse {value!r} as {kind.__name__}") from None


def read_config(path):
    """Flat ``key = value`` file; ``#`` starts a comment."""
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",))
    try:
        with open(path) as fh:
            parser.read_string("[experiment]\n" + fh.read())
    except (OSError, configparser.Error) as exc:
        raise InputError(f"cannot read config {path}: {exc}") from None
    return {k.replace("-", "_"): _coerce(k.replace("-", "_"), v) for k, v in parser["experiment"].items()}


def build_problem(cfg):
    sigma = cfg.sigma or None
    if cfg.dataset == "synthetic-gaussian":
        prob = data.gen_synthetic(cfg.m, cfg.d, cfg.nodes, cfg.seed, kind=cfg.loss, noise=cfg.noise,
                                  rho=cfg.rho, penalty=cfg.penalty, sigma=sigma)
    else:
        A, t = data.load_libsvm(cfg.data, binary=cfg.loss == "logistic")
        prob = data.problem_from_arrays(A, t, cfg.nodes, cfg.seed, kind=cfg.loss, rho=cfg.rho,
                                        penalty=cfg.penalty, sigma=sigma)
    if cfg.algo == "qnewton":
        params = qnewton.NewtonParams.from_problem(prob, cfg.alpha)
        prob = prob.with_start(qnewton.shrink_start(prob, params, seed=cfg.seed))
    return prob


def _step_size(cfg, prob):
    return cfg.eta if cfg.eta > 0 else 1.0 / prob.gamma


def dispatch(cfg, prob, algo=None):
    algo = algo or cfg.algo
    net = Network(Topology(prob.n))
    T = cfg.max_rounds
    if algo == "qpgd":
        return qpgd.qpgd_run(prob, net=net, T=T, eps=cfg.eps)
    if algo == "qnewton":
        return qnewton.newton_run(prob, qnewton.NewtonParams.from_problem(prob, cfg.alpha), net=net, T=T,
                                  eps=cfg.eps, hessian_update=cfg.hessian_update, levels=cfg.levels,
                                  seed=cfg.seed)
    if algo == "gd":
        return baselines.gd_full(prob, _step_size(cfg, prob), T=T, eps=cfg.eps, net=net)
    if algo == "pgd":
        return baselines.pgd_full(prob, T=T, eps=cfg.eps, net=net)
    if algo == "qsgd":
        return baselines.qsgd_gd(prob, _step_size(cfg, prob), cfg.levels, T=T, eps=cfg.eps, seed=cfg.seed, net=net)
    raise InputError(f"unknown algorithm {algo!r}")


def full_precision_reference(cfg, prob):
    """The 32-bit baseline used for bit ratios: preconditioned GD when the loss is a GLM."""
    return dispatch(cfg, prob, "pgd" if prob.is_glm else "gd")


def summarize(result, reference=None):
    out = {
        "algorithm": result.algorithm,
        "fingerprint": result.fingerprint,
        "target_eps": result.target_eps,
        "reached": result.reached,
        "rounds": result.rounds,
        "total_bits": result.total_bits,
        "overhead_bits": result.total_overhead,
        "final_err": result.rows[-1].err,
        "final_fgap": result.rows[-1].fgap,
    }
    if reference is not None:
        out["reference"] = reference.algorithm
        out["reference_bits"] = reference.total_bits
        out["reference_reached"] = reference.reached
        out["bits_ratio"] = result.total_bits / reference.total_bits if reference.total_bits else math.nan
    return out


def _write_outputs(out_dir, result, stem=""):
    os.makedirs(out_dir, exist_ok=True)
    write_trace_csv(os.path.join(out_dir, f"trace{stem}.csv"), result.rows)
    result.ledger.to_csv(os.path.join(out_dir, f"ledger{stem}.csv"))


def run_experiment(cfg):
    cfg.validate()
    prob = build_problem(cfg)
    result = dispatch(cfg, prob)
    reference = full_precision_reference(cfg, prob)
    summary = summarize(result, reference)
    # the output location is not part of the experiment
    summary["config"] = {k: v for k, v in asdict(cfg).items() if k != "out"}
    if cfg.out:
        _write_outputs(cfg.out, result)
        with open(os.path.join(cfg.out, "summary.json"), "w") as fh:
            json.dump(summary, fh, indent=2, sort_keys=True)
    return result, summary


def compare_report(*results, reference="gd"):
    """Table rows ``(algorithm, rounds, total_bits, ratio)`` in input order.

    ``ratio`` is total bits over those of the ``reference`` algorithm's run
    (NaN when it is not among the inputs). All runs must share a problem and
    a target accuracy.
    """
    if not results:
        raise InputError("compare_report needs at least one run")
    prints = {r.fingerprint for r in results}
    if len(prints) > 1:
        raise InputError(f"runs were made on different problems: {sorted(prints)}")
    targets = {r.target_eps for r in results if not math.isnan(r.target_eps)}
    if len(targets) > 1:
        raise InputError(f"runs target different accuracies: {sorted(targets)}")
    ref = next((r for r in results if r.algorithm == reference), None)
    rows = []
    for r in results:
        ratio = r.total_bits / ref.total_bits if ref is not None and ref.total_bits else math.nan
        rows.append((r.algorithm, r.rounds if r.reached else None, r.total_bits, ratio))
    return rows


def format_table(rows):
    lines = [f"{'algorithm':<10} {'rounds':>8} {'total_bits':>12} {'ratio_vs_gd':>12}"]
    for algo, rounds, bits, ratio in rows:
        r = "-" if rounds is None else str(rounds)
        lines.append(f"{algo:<10} {r:>8} {bits:>12d} {ratio:>12.4g}")
    return "\n".join(lines)


def sweep(cfg, max_exponent=12):
    """Try step sizes 2^0, 2^-1, ... and return ``(largest stable eta, [(eta, status)])``.

    A step size is stable when the run neither diverges nor ends farther from
    ``x*`` than it started.
    """
    prob = build_problem(cfg)
    tried, best = [], None
    for k in range(max_exponent + 1):
        eta = 2.0**-k
        run_cfg = ExperimentConfig(**{**asdict(cfg), "eta": eta})
        try:
            res = dispatch(run_cfg, prob)
            ok = res.rows[-1].err < res.rows[0].err or res.rows[0].err == 0.0
            status = "stable" if ok else "no progress"
        except DivergenceError:
            ok, status = False, "diverged"
        tried.append((eta, status))
        if ok:
            best = eta
            break
    return best, tried


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        # usage errors are input errors, not invariant violations
        self.print_usage(sys.stderr)
        self.exit(3, f"{self.prog}: error: {message}\n")


def _parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat key=value file; flags override it")
    common.add_argument("--dataset", choices=DATASETS)
    common.add_argument("--data", help="LIBSVM file for --dataset libsvm-file")
    common.add_argument("--loss", choices=("quadratic", "logistic"))
    common.add_argument("--nodes", type=int)
    common.add_argument("--seed", type=int)
    common.add_argument("--eps", type=float, help="target f(x) - f*")
    common.add_argument("--out", help="output directory")
    common.add_argument("--m", type=int, help="synthetic rows")
    common.add_argument("--d", type=int, help="synthetic columns")
    common.add_argument("--noise", type=float)
    common.add_argument("--rho", type=float, help="logistic l2 weight")
    common.add_argument("--penalty", choices=("margin", "weight"))
    common.add_argument("--eta", type=float)
    common.add_argument("--alpha", type=float)
    common.add_argument("--levels", type=int)
    common.add_argument("--sigma", type=float)
    common.add_argument("--max-rounds", dest="max_rounds", type=int)
    common.add_argument("--hessian-update", dest="hessian_update", choices=("lattice", "qsgd"))
    common.add_argument("-v", "--verbose", action="store_true")

    p = _Parser(prog="qprecond", description=__doc__.split("\n")[0])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    run = sub.add_parser("run", parents=[common], help="run one algorithm")
    run.add_argument("--algo", choices=ALGORITHMS)
    cmp_ = sub.add_parser("compare", parents=[common], help="run several algorithms on one problem")
    cmp_.add_argument("--algos", default="qpgd,pgd,gd", help="comma-separated list")
    sw = sub.add_parser("sweep", parents=[common], help="largest stable step size on the 2^-k grid")
    sw.add_argument("--algo", choices=("gd", "qsgd"), default="gd")
    return p


def config_from_args(args):
    values = read_config(args.config) if args.config else {}
    for f in fields(ExperimentConfig):
        v = getattr(args, f.name, None)
        if v is not None:
            values[f.name] = v
    return ExperimentConfig(**values).validate()


def _run(args):
    cfg = config_from_args(args)
    result, summary = run_experiment(cfg)
    print(json.dumps({k: v for k, v in summary.items() if k != "config"}, indent=2, sort_keys=True))
    return 0


def _compare(args):
    cfg = config_from_args(args)
    algos = [a.strip() for a in args.algos.split(",") if a.strip()]
    for a in algos:
        if a not in ALGORITHMS:
            raise InputError(f"unknown algorithm {a!r}")
    results = []
    base = build_problem(cfg)
    for a in algos:
        acfg = ExperimentConfig(**{**asdict(cfg), "algo": a})
        prob = build_problem(acfg) if a == "qnewton" else base
        res = dispatch(acfg, prob)
        results.append(res)
        if cfg.out:
            _write_outputs(cfg.out, res, stem=f"_{a}")
    rows = compare_report(*results)
    print(format_table(rows))
    if cfg.out:
        with open(os.path.join(cfg.out, "compare.csv"), "w") as fh:
            fh.write("algorithm,rounds,total_bits,ratio_vs_gd\n")
            for algo, rounds, bits, ratio in rows:
                fh.write(f"{algo},{'' if rounds is None else rounds},{bits},{ratio!r}\n")
    return 0


def _sweep(args):
    cfg = config_from_args(args)
    best, tried = sweep(cfg)
    for eta, status in tried:
        print(f"eta={eta:<12g} {status}")
    print(f"largest stable eta: {best}")
    return 0 if best is not None else 2


def main(argv=None):
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    handler = {"run": _run, "compare": _compare, "sweep": _sweep}[args.command]
    try:
        return handler(args)
    except (InvariantViolation, DivergenceError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (InputError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
