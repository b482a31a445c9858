"""Command-line interface.

Every subcommand reads a JSON scenario file (and/or explicit flags), calls
the library, and prints small CSV blocks to stdout, so results are
byte-identical to direct library calls with the same inputs and seeds.
Numbers print with 4 decimal places by default; --precision=full switches
to repr for lossless round-trips. Errors print one line to stderr and set
the exit code: 2 for configuration problems, 3 for refuted maintained
assumptions, 4 for infeasible or rank-deficient problems, 1 otherwise.

Scenario files hold a "population" (joint strata) or a "marginal_spec"
(shares plus effect contrasts), and optional "sweep", "simulate", and
"cluster" blocks with per-command defaults; command-line flags override
block values.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass
from typing import Optional

from .clustering import (
    ClusterScenario,
    NegNegRule,
    ScenarioKind,
    Semantics,
    check_cluster_exclusion,
    choose_clustering,
    cluster_estimand_constant_effects,
    cluster_estimand_formula,
    cluster_wald_oracle,
)
from .estimands import Regime, SweepAxis, bias_sweep, decompose, solve_moment_system
from .exceptions import ConfigError, IVStrataError
from .identification import (
    FirstStage,
    Maintained,
    defier_bounds,
    feasible_set_scan,
    first_stage_from_shares,
    shares_from_first_stage,
)
from .montecarlo import Target, estimate_2sls, generate, replicate
from .strata import (
    MarginalGroup,
    MarginalSpec,
    Population,
    _EFFECT_SLOTS,
    marginal_shares,
    marginalize,
    marginal_spec_from_dict,
    population_from_dict,
)

_GROUP_ORDER = ("C1", "ID1", "ND1", "AT1", "NT1", "OT1", "C2", "ID2", "ND2", "AT2", "NT2", "OT2")


@dataclass(frozen=True)
class ScenarioFile:
    """Parsed scenario file: the primitive plus per-command option blocks."""

    population: Optional[Population]
    spec: Optional[MarginalSpec]
    sweep: dict
    simulate: dict
    cluster: dict

    def require_population(self, command: str) -> Population:
        if self.population is None:
            raise ConfigError(f"{command} requires a scenario file with a population")
        return self.population

    def any_spec(self) -> MarginalSpec:
        if self.spec is not None:
            return self.spec
        return marginalize(self.population)


def _reject_unknown(doc: dict, allowed: tuple[str, ...], what: str) -> None:
    unknown = sorted(set(doc) - set(allowed))
    if unknown:
        raise ConfigError(f"unknown {what} key(s) {unknown}; allowed: {sorted(allowed)}")


def load_scenario(path: str) -> ScenarioFile:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as err:
        raise ConfigError(f"cannot read scenario file {path}: {err}") from err
    except json.JSONDecodeError as err:
        raise ConfigError(f"scenario file {path} is not valid JSON: {err}") from err
    if not isinstance(doc, dict):
        raise ConfigError(f"scenario file {path} must hold a JSON object")
    _reject_unknown(doc, ("population", "marginal_spec", "sweep", "simulate", "cluster"), "scenario")
    has_pop = "population" in doc
    has_spec = "marginal_spec" in doc
    if has_pop == has_spec:
        raise ConfigError("scenario file must hold exactly one of 'population' or 'marginal_spec'")
    blocks = {}
    for name, allowed in (
        ("sweep", ("axis", "grid", "levels", "defier")),
        ("simulate", ("n", "reps", "seed", "target", "scenario")),
        ("cluster", ("scenario", "sig_level", "neg_neg_rule", "semantics", "n", "seed", "constant_effects")),
    ):
        block = doc.get(name, {})
        if not isinstance(block, dict):
            raise ConfigError(f"scenario block {name!r} must be a JSON object")
        _reject_unknown(block, allowed, name)
        blocks[name] = block
    return ScenarioFile(
        population=population_from_dict(doc["population"]) if has_pop else None,
        spec=marginal_spec_from_dict(doc["marginal_spec"]) if has_spec else None,
        sweep=blocks["sweep"],
        simulate=blocks["simulate"],
        cluster=blocks["cluster"],
    )


def _pick(flag, block: dict, key: str, default):
    """Flag beats scenario block beats default."""
    if flag is not None:
        return flag
    if key in block:
        return block[key]
    return default


def _as_int(value, what: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"{what} must be an integer, got {value!r}")
    return value


def _as_float(value, what: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{what} must be a number, got {value!r}")
    return float(value)


def _enum(cls, value, what: str):
    try:
        return cls(value)
    except ValueError:
        choices = sorted(m.value for m in cls)
        raise ConfigError(f"{what} must be one of {choices}, got {value!r}") from None


def _fmt(x, precision: str) -> str:
    x = float(x)
    if precision == "full":
        return repr(x)
    return f"{x:.4f}"


def _parse_float_list(text: str, what: str) -> list[float]:
    try:
        return [float(part) for part in text.split(",") if part.strip() != ""]
    except ValueError as err:
        raise ConfigError(f"{what} must be comma-separated numbers, got {text!r}") from err


def _block_float_list(value, what: str) -> list[float]:
    if not isinstance(value, list) or not value:
        raise ConfigError(f"{what} must be a nonempty list of numbers")
    return [_as_float(v, what) for v in value]


def _cmd_validate(args: argparse.Namespace) -> int:
    sc = load_scenario(args.config)
    p = args.precision
    print("status,ok")
    if sc.population is not None:
        pop = sc.population
        print("kind,population")
        print(f"strata,{len(pop.entries)}")
        print("assignment," + ";".join(_fmt(a, p) for a in pop.assignment))
        shares = marginal_shares(pop)
        for name in _GROUP_ORDER:
            print(f"share,{name},{_fmt(shares[MarginalGroup[name]], p)}")
        fs = first_stage_from_shares(shares)
        for coef in ("a10", "a11", "a12", "a20", "a21", "a22"):
            print(f"first_stage,{coef},{_fmt(getattr(fs, coef), p)}")
    else:
        spec = sc.spec
        print("kind,marginal_spec")
        for attr in ("pC1", "pID1", "pND1", "pC2", "pID2", "pND2"):
            print(f"share,{attr[1:]},{_fmt(getattr(spec, attr), p)}")
        for slot in _EFFECT_SLOTS:
            value = getattr(spec, slot)
            if value is not None:
                print(f"effect,{slot},{_fmt(value, p)}")
    return 0


def _cmd_analyze(args: argparse.Namespace) -> int:
    sc = load_scenario(args.config)
    spec = sc.any_spec()
    regime = _enum(Regime, args.regime, "--regime") if args.regime else Regime.NEITHER
    dec1, dec2 = decompose(spec, regime)
    oracle1, oracle2 = solve_moment_system(spec)
    p = args.precision
    print(f"beta1,{_fmt(dec1.total, p)}")
    print(f"beta2,{_fmt(dec2.total, p)}")
    print(f"late1,{_fmt(dec1.late, p)}")
    print(f"late2,{_fmt(dec2.late, p)}")
    print(f"bias1,{_fmt(dec1.bias, p)}")
    print(f"bias2,{_fmt(dec2.bias, p)}")
    print(f"oracle_beta1,{_fmt(oracle1, p)}")
    print(f"oracle_beta2,{_fmt(oracle2, p)}")
    print(f"oracle_gap1,{_fmt(dec1.total - oracle1, p)}")
    print(f"oracle_gap2,{_fmt(dec2.total - oracle2, p)}")
    print(f"regime,{regime.value}")
    print(f"denominator,{_fmt(dec1.denominator, p)}")
    print()
    print("decomposition,term,weight,delta,sign,contribution")
    for which, dec in (("beta1", dec1), ("beta2", dec2)):
        for t in dec.terms:
            sign = "+" if t.sign > 0 else "-"
            print(f"{which},{t.label},{_fmt(t.weight, p)},{_fmt(t.delta, p)},{sign},{_fmt(t.contribution, p)}")
        print(f"{which},late,,,,{_fmt(dec.late, p)}")
        print(f"{which},total,,,,{_fmt(dec.total, p)}")
    return 0


def _first_stage_from_args(args: argparse.Namespace) -> FirstStage:
    flags = {name: getattr(args, name) for name in ("a10", "a11", "a12", "a20", "a21", "a22")}
    given = {name: v for name, v in flags.items() if v is not None}
    if given:
        missing = sorted(set(flags) - set(given))
        if missing:
            raise ConfigError(f"first-stage flags are all-or-none; missing --{', --'.join(missing)}")
        return FirstStage(**given)
    if args.config is None:
        raise ConfigError("bounds needs a scenario file with a population, or all six --a10..--a22 flags")
    sc = load_scenario(args.config)
    pop = sc.require_population("bounds (without explicit --aXY flags)")
    return first_stage_from_shares(marginal_shares(pop))


def _cmd_bounds(args: argparse.Namespace) -> int:
    fs = _first_stage_from_args(args)
    p = args.precision
    rows: list[str] = []
    if args.maintained:
        shares = shares_from_first_stage(fs, _enum(Maintained, args.maintained, "--maintained"))
        for name in _GROUP_ORDER:
            v = _fmt(shares[MarginalGroup[name]], p)
            rows.append(f"{name},{v},{v}")
    else:
        bounds = defier_bounds(fs)
        for name, (lo, hi) in bounds.intervals().items():
            rows.append(f"{name},{_fmt(lo, p)},{_fmt(hi, p)}")
        if args.scan:
            scan = feasible_set_scan(fs, step=args.step)
            for name, (lo, hi) in scan.intervals().items():
                rows.append(f"{name}_scan,{_fmt(lo, p)},{_fmt(hi, p)}")
    print("group,lo,hi")
    for row in rows:
        print(row)
    return 0


def _cmd_cluster(args: argparse.Namespace) -> int:
    sc = load_scenario(args.config)
    pop = sc.require_population("cluster")
    block = sc.cluster
    sig_level = _as_float(_pick(args.sig_level, block, "sig_level", 0.05), "sig_level")
    rule = _enum(NegNegRule, _pick(args.neg_neg_rule, block, "neg_neg_rule", "undefined"), "neg_neg_rule")
    semantics = _enum(Semantics, _pick(args.semantics, block, "semantics", "pooled"), "semantics")
    label = _pick(args.scenario, block, "scenario", None)
    n = _pick(args.n, block, "n", None)
    seed = _as_int(_pick(args.seed, block, "seed", 0), "seed")
    constant = args.constant_effects or bool(block.get("constant_effects", False))
    if label is not None:
        scenario = ClusterScenario.from_label(label)
    elif n is not None:
        est = estimate_2sls(generate(pop, _as_int(n, "n"), seed))
        scenario = choose_clustering(est.alphas, est.alpha_ses.a21, est.alpha_ses.a12, sig_level, rule)
    else:
        scenario = choose_clustering(
            first_stage_from_shares(marginal_shares(pop)), sig_level=sig_level, neg_neg_rule=rule
        )
    p = args.precision
    print("scenario,s0,s1")
    s0 = ";".join(str(v) for v in sorted(scenario.s0)) if scenario.s0 is not None else ""
    s1 = ";".join(str(v) for v in sorted(scenario.s1)) if scenario.s1 is not None else ""
    print(f"{scenario.label},{s0},{s1}")
    if scenario.kind not in (ScenarioKind.CONTROL, ScenarioKind.TREATMENT):
        return 0
    dec = (cluster_estimand_constant_effects if constant else cluster_estimand_formula)(pop, scenario)
    verdict = check_cluster_exclusion(pop, scenario)
    oracle = cluster_wald_oracle(pop, scenario, semantics)
    print()
    print(f"pi,{_fmt(dec.pi, p)}")
    print("component,label,weight,value,sign,contribution")
    for t in dec.a_terms:
        print(f"a,{t.label},{_fmt(t.weight, p)},{_fmt(t.effect, p)},+,{_fmt(t.contribution, p)}")
    for t in dec.bias_terms:
        sign = "+" if t.sign > 0 else "-"
        print(f"bias,{t.label},{_fmt(t.weight, p)},{_fmt(t.delta, p)},{sign},{_fmt(t.contribution, p)}")
    print(f"a_total,{_fmt(dec.a_total, p)}")
    print(f"bias_total,{_fmt(dec.bias, p)}")
    print(f"total,{_fmt(dec.total, p)}")
    print("exclusion," + ("holds" if verdict.holds else "violated:" + ";".join(verdict.violations)))
    print(f"semantics,{semantics.value}")
    print(f"oracle,{_fmt(oracle, p)}")
    print(f"oracle_gap,{_fmt(oracle - dec.total, p)}")
    return 0


def _cmd_simulate(args: argparse.Namespace) -> int:
    sc = load_scenario(args.config)
    pop = sc.require_population("simulate")
    block = sc.simulate
    n = _as_int(_pick(args.n, block, "n", 200000), "n")
    reps = _as_int(_pick(args.reps, block, "reps", 100), "reps")
    seed = _as_int(_pick(args.seed, block, "seed", 0), "seed")
    target = _enum(Target, _pick(args.target, block, "target", "field-2sls"), "target")
    scenario = None
    if target is Target.CLUSTER_WALD:
        label = _pick(args.scenario, block, "scenario", None)
        if label is not None:
            scenario = ClusterScenario.from_label(label)
        else:
            scenario = choose_clustering(first_stage_from_shares(marginal_shares(pop)))
    summary = replicate(pop, n=n, reps=reps, master_seed=seed, target=target, scenario=scenario)
    p = args.precision
    print(f"n,{summary.n}")
    print(f"reps,{summary.reps}")
    print(f"seed,{summary.master_seed}")
    print(f"target,{summary.target.value}")
    print()
    print("param,truth,mean,sd,bias,coverage")
    for row in summary.rows:
        print(
            f"{row.param},{_fmt(row.truth, p)},{_fmt(row.mean, p)},"
            f"{_fmt(row.sd, p)},{_fmt(row.bias, p)},{_fmt(row.coverage, p)}"
        )
    return 0


def _cmd_sweep(args: argparse.Namespace) -> int:
    sc = load_scenario(args.config)
    spec = sc.any_spec()
    block = sc.sweep
    axis = _enum(SweepAxis, _pick(args.axis, block, "axis", "defier-share"), "axis")
    defier = _pick(args.defier, block, "defier", "id1")
    if args.grid is not None:
        grid = _parse_float_list(args.grid, "--grid")
    elif "grid" in block:
        grid = _block_float_list(block["grid"], "sweep grid")
    else:
        grid = [round(0.05 * i, 10) for i in range(11)]
    if args.levels is not None:
        levels = _parse_float_list(args.levels, "--levels")
    elif "levels" in block:
        levels = _block_float_list(block["levels"], "sweep levels")
    else:
        late = spec.effect("eff_c1")
        levels = [0.1 * late, 0.2 * late, 0.5 * late]
    rows = bias_sweep(spec, axis, grid, levels, defier=defier)
    p = args.precision
    print("axis,level,beta,late,bias")
    for row in rows:
        print(
            f"{_fmt(row.axis, p)},{_fmt(row.level, p)},{_fmt(row.beta, p)},"
            f"{_fmt(row.late, p)},{_fmt(row.bias, p)}"
        )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ivstrata",
        description="Principal-strata analysis of instrumental variables with three unordered fields.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name: str, func, help_text: str, config_optional: bool = False) -> argparse.ArgumentParser:
        cmd = sub.add_parser(name, help=help_text)
        if config_optional:
            cmd.add_argument("config", nargs="?", default=None, help="scenario JSON file")
        else:
            cmd.add_argument("config", help="scenario JSON file")
        cmd.add_argument("--precision", choices=("4", "full"), default="4", help="output precision (default 4 dp)")
        cmd.set_defaults(func=func)
        return cmd

    add("validate", _cmd_validate, "parse and echo a scenario file")

    analyze = add("analyze", _cmd_analyze, "exact estimands and bias decomposition")
    analyze.add_argument("--regime", choices=("neither", "next-best", "irrelevance"), default=None)

    bounds = add("bounds", _cmd_bounds, "defier-share bounds from a first stage", config_optional=True)
    for coef in ("a10", "a11", "a12", "a20", "a21", "a22"):
        bounds.add_argument(f"--{coef}", type=float, default=None, help=f"first-stage coefficient {coef}")
    bounds.add_argument("--scan", action="store_true", help="add brute-force feasibility-scan intervals")
    bounds.add_argument("--step", type=float, default=0.05, help="scan grid step (default 0.05)")
    bounds.add_argument("--maintained", choices=("next-best", "irrelevance"), default=None,
                        help="point-identify all group shares under this assumption")

    cluster = add("cluster", _cmd_cluster, "choose a clustering and decompose its estimand")
    cluster.add_argument("--scenario", choices=("control-1", "control-2", "treatment", "no-clustering", "undefined"),
                         default=None, help="override the sign-based scenario choice")
    cluster.add_argument("--sig-level", dest="sig_level", type=float, default=None)
    cluster.add_argument("--neg-neg-rule", dest="neg_neg_rule",
                         choices=("undefined", "larger-magnitude", "fail"), default=None)
    cluster.add_argument("--semantics", choices=("pooled", "group-relevant"), default=None)
    cluster.add_argument("--n", type=int, default=None,
                         help="choose the scenario from an estimated first stage on a sample of this size")
    cluster.add_argument("--seed", type=int, default=None)
    cluster.add_argument("--constant-effects", dest="constant_effects", action="store_true",
                         help="use the constant-effects decomposition")

    simulate = add("simulate", _cmd_simulate, "seeded replication study against exact estimands")
    simulate.add_argument("--n", type=int, default=None)
    simulate.add_argument("--reps", type=int, default=None)
    simulate.add_argument("--seed", type=int, default=None)
    simulate.add_argument("--target", choices=("field-2sls", "cluster-wald"), default=None)
    simulate.add_argument("--scenario", choices=("control-1", "control-2", "treatment"), default=None)

    sweep = add("sweep", _cmd_sweep, "bias curves over defier share or effect gap")
    sweep.add_argument("--axis", choices=("defier-share", "effect-gap"), default=None)
    sweep.add_argument("--grid", type=str, default=None, help="comma-separated grid points")
    sweep.add_argument("--levels", type=str, default=None, help="comma-separated curve levels")
    sweep.add_argument("--defier", choices=("id1", "nd1"), default=None)

    return parser


def main(argv: Optional[list[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except IVStrataError as err:
        print(f"error: {err}", file=sys.stderr)
        return err.exit_code


if __name__ == "__main__":
    sys.exit(main())
