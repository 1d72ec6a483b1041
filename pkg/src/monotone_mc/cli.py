"""Command-line front end.

Every subcommand reads an optional JSON scenario (``--config``) and flags that
override it, then prints a JSON verdict (or CSV where noted) to stdout or to
``--out``. Exit codes: 0 when a verdict was computed (including negative
verdicts), 1 for usage or configuration errors, 2 when an internal invariant
check fails.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import certify, coupling, gallery, kernel, order, regeneration
from .errors import (
    HypothesisFails,
    InvariantViolation,
    MonotoneMCError,
    NoSplit,
    NotDominated,
)

JOBS_ENV = "MONOTONE_MC_JOBS"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


# ---------------------------------------------------------------------------
# config resolution


def _load_config(path):
    if not path:
        return {}
    with open(path, encoding="utf-8") as fh:
        cfg = json.load(fh)
    if not isinstance(cfg, dict):
        raise UsageError("config must be a JSON object")
    return cfg


def _json_arg(text):
    if text is None:
        return None
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def _param(args, cfg, name, default=None):
    v = getattr(args, name, None)
    if v is not None:
        return v
    return cfg.get(name, default)


def _resolve_kernel(args, cfg):
    spec = cfg.get("kernel")
    if getattr(args, "fixture", None):
        spec = {"fixture": args.fixture}
        if getattr(args, "discretize", None):
            spec["discretize"] = args.discretize
    if spec is None:
        raise UsageError("no kernel given (use --fixture or a config with 'kernel')")
    if "fixture" in spec:
        fx = gallery.build(spec["fixture"], **spec.get("params", {}))
        if spec.get("discretize"):
            if fx.name != "average_chain":
                raise UsageError("only average_chain has a discretization")
            return gallery.average_discretized(int(spec["discretize"])), fx
        if spec.get("matrix"):
            return fx.extras["matrix"](), fx
        return fx.kernel, fx
    if "rows" in spec:
        return kernel.FiniteKernel.from_json(spec), None
    if "recursion" in spec:
        return kernel.recursion_from_config(spec["recursion"]), None
    raise UsageError(f"unrecognised kernel spec keys {sorted(spec)}")


def _finite(k):
    if not isinstance(k, kernel.FiniteKernel):
        raise UsageError("this subcommand needs a finite kernel")
    return k


def _pair_set(name_or_spec, k, cfg, fx):
    spec = name_or_spec
    if isinstance(spec, str):
        named = cfg.get("pair_sets", {})
        if spec in named:
            spec = named[spec]
        elif fx is not None and spec in fx.extras.get("pair_sets", {}):
            return coupling.PairIn(fx.extras["pair_sets"][spec], spec)
        elif fx is not None and spec in fx.extras and isinstance(fx.extras[spec], coupling.PairIn):
            return fx.extras[spec]
    if isinstance(spec, str):
        if not isinstance(k, kernel.FiniteKernel):
            raise UsageError(f"unknown pair set {spec!r}")
        n = k.n
        if spec == "M":
            return coupling.PairIn(coupling.order_pairs(k.poset), "M")
        if spec == "diagonal":
            return coupling.PairIn(coupling.diagonal_pairs(n), "diagonal")
        if spec == "all":
            return coupling.PairIn(coupling.all_pairs(n), "all")
        raise UsageError(f"unknown pair set {spec!r}")
    if isinstance(spec, dict) and "product" in spec:
        A, B = spec["product"]
        return coupling.PairIn(coupling.product_pairs(_finite(k).n, A, B))
    if isinstance(spec, dict) and "pairs" in spec:
        m = np.zeros((_finite(k).n, k.n), dtype=bool)
        for x, y in spec["pairs"]:
            m[x, y] = True
        return coupling.PairIn(m)
    raise UsageError(f"bad pair set {spec!r}")


def _predicate(spec, k, cfg, fx):
    if not isinstance(spec, dict) or len(spec) != 1:
        raise UsageError(f"bad predicate {spec!r}")
    (kind, val), = spec.items()
    if kind == "pair_in":
        return _pair_set(val, k, cfg, fx)
    if kind == "time_at_least":
        return coupling.TimeAtLeast(int(val))
    if kind == "steps_in_stage":
        return coupling.StepsInStage(int(val))
    if kind == "first_in":
        m = np.zeros(_finite(k).n, dtype=bool)
        m[list(val)] = True
        return coupling.FirstIn(m)
    if kind == "all":
        preds = [_predicate(p, k, cfg, fx) for p in val]
        out = preds[0]
        for p in preds[1:]:
            out = coupling.Both(out, p)
        return out
    raise UsageError(f"unknown predicate {kind!r}")


_BASIC = {
    "independent": coupling.Independent,
    "common_noise": coupling.CommonNoise,
    "strassen": coupling.StrassenMonotone,
}


def _policy(spec, k, cfg, fx):
    if spec is None:
        if fx is not None and "policy" in fx.extras:
            return fx.extras["policy"]
        return coupling.Independent()
    if isinstance(spec, str):
        spec = {"type": spec}
    kind = spec.get("type")
    if kind in _BASIC:
        return _BASIC[kind]()
    if kind == "joint":
        return coupling.JointMatrix(np.asarray(spec["matrix"], float))
    if kind == "lemma":
        inner = _policy(spec.get("inner", "independent"), k, cfg, fx)
        return coupling.build_lemma_coupling(_finite(k), spec["C"], spec["A"], spec["B"], int(spec["N"]), inner)
    if kind == "switched":
        stages = []
        raw = spec["stages"]
        for i, st in enumerate(raw):
            pol = _policy(st["policy"], k, cfg, fx)
            exits = []
            if "until" in st and i + 1 < len(raw):
                exits.append((_predicate(st["until"], k, cfg, fx), i + 1))
            for ex in st.get("exits", []):
                exits.append((_predicate(ex["when"], k, cfg, fx), int(ex["to"])))
            stages.append(coupling.Stage(pol, tuple(exits)))
        return coupling.Switched(tuple(stages))
    raise UsageError(f"unknown policy type {kind!r}")


def _state(k, v):
    if v is None:
        raise UsageError("missing start state")
    return int(v) if isinstance(k, kernel.FiniteKernel) else k.space.as_state(v)


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.floating):
        return float(x)
    if isinstance(x, float) and not np.isfinite(x):
        return "inf" if x > 0 else ("-inf" if x < 0 else "nan")
    return x


def _jobs(args):
    if args.jobs is not None:
        jobs = args.jobs
    else:
        raw = os.environ.get(JOBS_ENV, "1")
        try:
            jobs = int(raw)
        except ValueError:
            raise UsageError(f"{JOBS_ENV} must be an integer, got {raw!r}") from None
    if jobs < 1:
        raise UsageError("jobs must be >= 1")
    return jobs


def _seed(args, cfg):
    seed = _param(args, cfg, "seed")
    if seed is None:
        raise UsageError("this subcommand needs an explicit --seed")
    return int(seed)


# ---------------------------------------------------------------------------
# subcommands (each returns (json_obj, csv_text_or_None))


def cmd_check_monotone(args, cfg):
    k, fx = _resolve_kernel(args, cfg)
    if isinstance(k, kernel.FiniteKernel):
        res = kernel.is_monotone(k)
        out = {"monotone": res.monotone}
        if not res.monotone:
            out["pair"] = list(res.pair)
            out["witness"] = list(res.witness.members)
        return out, None
    if fx is None:
        raise UsageError("sampled monotonicity needs a gallery recursion")
    seed = int(_param(args, cfg, "seed", 0))
    return {"monotone": gallery.sampled_monotone(fx, 2000, seed), "method": "sampled", "seed": seed}, None


def _measures(args, cfg):
    poset_spec = cfg.get("poset")
    if poset_spec is None:
        raise UsageError("config needs 'poset', 'mu1' and 'mu2'")
    poset = order.Poset.from_json(poset_spec)
    try:
        return poset, order.Dist(cfg["mu1"]), order.Dist(cfg["mu2"])
    except KeyError as exc:
        raise UsageError(f"config is missing {exc}") from None


def cmd_dominates(args, cfg):
    poset, mu1, mu2 = _measures(args, cfg)
    ok, witness = order.dominates(mu1, mu2, poset, with_witness=True)
    out = {"dominates": bool(ok)}
    if not ok:
        out["witness"] = list(witness.members)
    return out, None


def cmd_strassen(args, cfg):
    poset, mu1, mu2 = _measures(args, cfg)
    try:
        c = order.strassen_coupling(mu1, mu2, poset)
    except NotDominated as exc:
        return {"dominated": False, "witness": list(exc.witness.members), "excess": exc.excess}, None
    return {
        "dominated": True,
        "coupling": c.lam.tolist(),
        "marginal_error": c.marginal_error(mu1, mu2),
        "off_order_mass": c.off_order_mass(poset),
    }, None


def cmd_distance(args, cfg):
    poset, mu1, mu2 = _measures(args, cfg)
    return {"distance": order.order_distance(mu1, mu2, poset)}, None


def _pair_run_inputs(args, cfg):
    k, fx = _resolve_kernel(args, cfg)
    policy = _policy(cfg.get("policy"), k, cfg, fx)
    x0 = _json_arg(args.x0) if args.x0 is not None else cfg.get("x0")
    y0 = _json_arg(args.y0) if args.y0 is not None else cfg.get("y0")
    if x0 is None and fx is not None and "starts" in fx.extras:
        x0, y0 = fx.extras["starts"]
    return k, fx, policy, _state(k, x0), _state(k, y0)


def cmd_simulate(args, cfg):
    k, fx, policy, x0, y0 = _pair_run_inputs(args, cfg)
    horizon = int(_param(args, cfg, "horizon", 100))
    seed = _seed(args, cfg)
    path = coupling.simulate_pair(k, k, policy, x0, y0, horizon, seed)
    out = {"seed": seed, "horizon": horizon, "xs": path.xs, "ys": path.ys, "stages": path.stages}
    lines = ["n,x,y,stage"]
    for n, (x, y, s) in enumerate(zip(path.xs, path.ys, path.stages)):
        fmt = lambda v: ";".join(map(str, v)) if isinstance(v, (tuple, list)) else repr(v)
        lines.append(f"{n},{fmt(x)},{fmt(y)},{s}")
    return out, "\n".join(lines) + "\n"


def _target(args, cfg, k, fx):
    H = args.H if getattr(args, "H", None) else cfg.get("H")
    if H is None:
        if fx is not None and "H" in fx.extras:
            return fx.extras["H"]
        H = "M"
    if isinstance(H, dict):
        return _predicate(H, k, cfg, fx)
    return _pair_set(H, k, cfg, fx)


def cmd_tau(args, cfg):
    k, fx, policy, x0, y0 = _pair_run_inputs(args, cfg)
    H = _target(args, cfg, k, fx)
    horizon = int(_param(args, cfg, "horizon", 1000))
    reps = int(_param(args, cfg, "reps", 1000))
    seed = _seed(args, cfg)
    est = coupling.estimate_tau(k, policy, H, x0, y0, horizon, reps, seed, jobs=_jobs(args))
    return est.to_json(), est.to_csv()


def cmd_exact_tau(args, cfg):
    k, fx, policy, x0, y0 = _pair_run_inputs(args, cfg)
    H = _target(args, cfg, k, fx)
    nmax = int(_param(args, cfg, "nmax", 100))
    tail = coupling.exact_tau_tail(_finite(k), k, policy, H, x0, y0, nmax)
    csv = "n,tail\n" + "".join(f"{n},{float(p)!r}\n" for n, p in enumerate(tail))
    return {"nmax": nmax, "tail": tail.tolist()}, csv


def _anchors(args, cfg, k, fx):
    x0 = args.x0 if args.x0 is not None else cfg.get("x0")
    y0 = args.y0 if args.y0 is not None else cfg.get("y0")
    if x0 is None and fx is not None and "anchors" in fx.extras:
        x0, y0 = fx.extras["anchors"]
    if x0 is None or y0 is None:
        raise UsageError("anchors x0 and y0 are required")
    return regeneration.RegenSpec(int(_json_arg(str(x0))), int(_json_arg(str(y0))))


def cmd_pi_regen(args, cfg):
    k, fx = _resolve_kernel(args, cfg)
    k = _finite(k)
    spec = _anchors(args, cfg, k, fx)
    pr = regeneration.check_pr(k, spec)
    out = {"x0": spec.x0, "y0": spec.y0, "e_nu_minus": pr.e_nu_minus, "e_nu_plus": pr.e_nu_plus, "pr_holds": pr.holds}
    if pr.holds:
        lo = regeneration.pi_minus_exact(k, spec)
        hi = regeneration.pi_plus_exact(k, spec)
        _, reach_lo = regeneration.restarted_kernel(k, spec.x0, spec.lower_restart(k))
        _, reach_hi = regeneration.restarted_kernel(k, spec.y0, spec.upper_restart(k))
        out.update(
            pi_minus=lo.pi.p.tolist(),
            pi_plus=hi.pi.p.tolist(),
            mean_cycle_minus=lo.mean_cycle,
            mean_cycle_plus=hi.mean_cycle,
            reachable_minus=reach_lo.tolist(),
            reachable_plus=reach_hi.tolist(),
            ordered=bool(order.dominates(lo.pi, hi.pi, k.poset)),
        )
    return out, None


def cmd_iterate(args, cfg):
    k, fx = _resolve_kernel(args, cfg)
    k = _finite(k)
    spec = _anchors(args, cfg, k, fx)
    lo = regeneration.pi_minus_exact(k, spec).pi
    hi = regeneration.pi_plus_exact(k, spec).pi
    nmax = int(_param(args, cfg, "nmax", regeneration.DEFAULT_NMAX))
    res = regeneration.monotone_iteration(k, lo, hi, nmax=nmax, keep_sequence=False)
    return {"x0": spec.x0, "y0": spec.y0, **res.to_json()}, None


def cmd_split(args, cfg):
    k, _ = _resolve_kernel(args, cfg)
    N = int(_param(args, cfg, "N", 1))
    C = cfg.get("C")
    cert = certify.find_split(_finite(k), N, C)
    return {"split": None if cert is None else cert.to_json(), "N": N}, None


def cmd_certify_rate(args, cfg):
    k, _ = _resolve_kernel(args, cfg)
    N = int(_param(args, cfg, "N", 1))
    c = _param(args, cfg, "c")
    seed = int(_param(args, cfg, "seed", 0))
    reps = int(_param(args, cfg, "reps", 100_000))
    try:
        cert = certify.bm_certificate(k, N, c=c, reps=reps, seed=seed)
    except NoSplit as exc:
        return {"certificate": None, "reason": str(exc), "N": N}, None
    out = {"certificate": cert.to_json()}
    if not isinstance(k, kernel.FiniteKernel):
        out["seed"] = seed
    return out, None


def cmd_verify_rate(args, cfg):
    k, _ = _resolve_kernel(args, cfg)
    k = _finite(k)
    N = int(_param(args, cfg, "N", 1))
    eps = _param(args, cfg, "eps")
    if eps is not None:
        split = certify.SplitCertificate("full", None, "given", "given", N, float(eps))
        cert = certify.RateCertificate.from_split(split)
    else:
        try:
            cert = certify.bm_certificate(k, N)
        except NoSplit as exc:
            return {"verified": False, "reason": str(exc)}, None
    nmax = int(_param(args, cfg, "nmax", 200))
    rep = certify.verify_rate(k, cert, nmax)
    return {"verified": rep.ok, "certificate": cert.to_json(), "nmax": nmax}, rep.to_csv()


def cmd_certify_unique(args, cfg):
    k, _ = _resolve_kernel(args, cfg)
    return certify.uniqueness_certificate(_finite(k)).to_json(), None


def cmd_hypotheses(args, cfg):
    k, _ = _resolve_kernel(args, cfg)
    k = _finite(k)
    N = int(_param(args, cfg, "N", 1))
    alpha = float(_param(args, cfg, "alpha", 2.0))
    C = cfg.get("C", list(range(k.n)))
    cert = certify.SplitCertificate(tuple(C), None, (), (), N, 0.0)
    try:
        return certify.check_achievability_hypotheses(k, cert, alpha), None
    except HypothesisFails as exc:
        return {"holds": False, "bullet": exc.bullet, "witness": exc.witness, "detail": str(exc)}, None


def cmd_gallery(args, cfg):
    if args.action == "list":
        return {"fixtures": gallery.list_fixtures()}, None
    if not args.name:
        raise UsageError("gallery export needs a fixture name")
    return gallery.export(args.name), None


COMMANDS = {
    "check-monotone": (cmd_check_monotone, "stochastic monotonicity of a kernel"),
    "dominates": (cmd_dominates, "stochastic dominance of mu1 by mu2"),
    "strassen": (cmd_strassen, "order-respecting coupling or a violated up-set"),
    "distance": (cmd_distance, "order distance between two laws"),
    "simulate": (cmd_simulate, "one coupled path (CSV with --csv)"),
    "tau": (cmd_tau, "Monte Carlo coupling-time tail (CSV: n,tail,halfwidth)"),
    "exact-tau": (cmd_exact_tau, "exact coupling-time tail (CSV: n,tail)"),
    "pi-regen": (cmd_pi_regen, "regeneration check and occupation measures"),
    "iterate": (cmd_iterate, "monotone iteration from the lower occupation measure"),
    "split": (cmd_split, "best canonical split"),
    "certify-rate": (cmd_certify_rate, "geometric rate certificate"),
    "verify-rate": (cmd_verify_rate, "check the rate bound (CSV: n,max_distance,bound,alt_bound)"),
    "certify-unique": (cmd_certify_unique, "uniqueness witnesses"),
    "hypotheses": (cmd_hypotheses, "return-time hypotheses on the N-skeleton"),
    "gallery": (cmd_gallery, "list or export fixtures"),
}

CSV_DEFAULT = {"verify-rate"}


def build_parser():
    p = _Parser(prog="monotone-mc", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name, (_, help_text) in COMMANDS.items():
        s = sub.add_parser(name, help=help_text)
        s.add_argument("--config", help="JSON scenario file")
        s.add_argument("--out", help="write output here instead of stdout")
        s.add_argument("--seed", type=int)
        s.add_argument("--reps", type=int)
        s.add_argument("--horizon", type=int)
        s.add_argument("--jobs", type=int, help=f"worker threads (default ${JOBS_ENV} or 1)")
        s.add_argument("--csv", action="store_true", help="emit CSV where available")
        s.add_argument("--json", action="store_true", help="emit JSON even where CSV is the default")
        if name == "gallery":
            s.add_argument("action", choices=["list", "export"])
            s.add_argument("name", nargs="?")
            continue
        s.add_argument("--fixture", help="gallery fixture name")
        s.add_argument("--discretize", type=int, help="cell count for average_chain")
        s.add_argument("--x0")
        s.add_argument("--y0")
        s.add_argument("--N", type=int)
        s.add_argument("--nmax", type=int)
        s.add_argument("--alpha", type=float)
        s.add_argument("--eps", type=float)
        s.add_argument("--c", type=float)
        s.add_argument("--H", help="target pair set name")
    return p


def _emit(text, out_path):
    if out_path:
        with open(out_path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        cfg = _load_config(args.config)
        fn = COMMANDS[args.command][0]
        obj, csv = fn(args, cfg)
        want_csv = csv is not None and (args.csv or (args.command in CSV_DEFAULT and not args.json))
        text = csv if want_csv else json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n"
        _emit(text, args.out)
        return 0
    except InvariantViolation as exc:
        print(f"invariant violated: {exc}", file=sys.stderr)
        return 2
    except (UsageError, MonotoneMCError, ValueError, KeyError, TypeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
