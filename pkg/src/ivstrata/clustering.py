"""First-stage-sign clustering: collapse three fields into two arms, then
characterize what the resulting two-arm Wald ratio estimates.

The cross slopes of the first stage (a21 and a12) decide the collapse. A
significantly negative cross slope says instrument k pulls people *out* of
the other field, so field k is grouped with the control state; significantly
positive cross slopes say the instruments only shuffle people between the
two treated fields, which are then pooled against control. The clustered
estimand is again a weighted average of field effects plus defier
contamination, with fewer and simpler terms than the three-field
decomposition.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from statistics import NormalDist
from typing import Optional

from .estimands import DEN_TOL
from .exceptions import ConfigError, AssumptionError, RankError
from .identification import FirstStage
from .strata import MarginalGroup, Population, group_effect, group_prob, marginal_shares

_STD_NORMAL = NormalDist()


class ScenarioKind(enum.Enum):
    CONTROL = "control"
    TREATMENT = "treatment"
    NO_CLUSTERING = "no-clustering"
    UNDEFINED = "undefined"


@dataclass(frozen=True)
class ClusterScenario:
    """A two-arm collapse of the three fields.

    `s0` and `s1` are the sets of original field values mapped to the
    pseudo-control and pseudo-treatment arms; they are None when the kind
    carries no collapse (no clustering needed, or the sign pattern is
    outside the catalogue). `treatment_field` is the field clustered with
    control under a control-clustering scenario, None otherwise.
    """

    kind: ScenarioKind
    treatment_field: Optional[int] = None
    s0: Optional[frozenset[int]] = None
    s1: Optional[frozenset[int]] = None

    def __post_init__(self):
        if self.kind is ScenarioKind.CONTROL:
            if self.treatment_field not in (1, 2):
                raise ConfigError("control clustering must name treatment field 1 or 2")
        elif self.treatment_field is not None:
            raise ConfigError(f"{self.kind.value} scenario does not take a treatment field")
        has_sets = self.s0 is not None and self.s1 is not None
        if self.kind in (ScenarioKind.CONTROL, ScenarioKind.TREATMENT):
            if not has_sets:
                raise ConfigError(f"{self.kind.value} scenario requires both arm sets")
            if self.s0 | self.s1 != {0, 1, 2} or self.s0 & self.s1:
                raise ConfigError(f"arms {set(self.s0)}, {set(self.s1)} must partition {{0, 1, 2}}")
        elif self.s0 is not None or self.s1 is not None:
            raise ConfigError(f"{self.kind.value} scenario does not take arm sets")

    @classmethod
    def control(cls, treatment_field: int) -> "ClusterScenario":
        """Field `treatment_field` stays a treatment arm; the other treated
        field joins the control arm."""
        if treatment_field not in (1, 2):
            raise ConfigError(f"treatment field must be 1 or 2, got {treatment_field}")
        other = 3 - treatment_field
        return cls(
            kind=ScenarioKind.CONTROL,
            treatment_field=treatment_field,
            s0=frozenset({0, other}),
            s1=frozenset({treatment_field}),
        )

    @classmethod
    def treatment(cls) -> "ClusterScenario":
        """Both treated fields pool into one arm against control."""
        return cls(kind=ScenarioKind.TREATMENT, s0=frozenset({0}), s1=frozenset({1, 2}))

    @classmethod
    def no_clustering(cls) -> "ClusterScenario":
        return cls(kind=ScenarioKind.NO_CLUSTERING)

    @classmethod
    def undefined(cls) -> "ClusterScenario":
        return cls(kind=ScenarioKind.UNDEFINED)

    @property
    def label(self) -> str:
        if self.kind is ScenarioKind.CONTROL:
            return f"control-{self.treatment_field}"
        return self.kind.value

    @classmethod
    def from_label(cls, label: str) -> "ClusterScenario":
        table = {
            "control-1": lambda: cls.control(1),
            "control-2": lambda: cls.control(2),
            "treatment": cls.treatment,
            "no-clustering": cls.no_clustering,
            "undefined": cls.undefined,
        }
        if label not in table:
            raise ConfigError(f"unknown cluster scenario {label!r}; expected one of {sorted(table)}")
        return table[label]()


class NegNegRule(enum.Enum):
    """Policy for the both-cross-slopes-negative pattern, which the
    scenario catalogue does not cover."""

    UNDEFINED = "undefined"
    LARGER_MAGNITUDE = "larger-magnitude"
    FAIL = "fail"


def _sign(coef: float, se: Optional[float], sig_level: float) -> int:
    """Sign classification, exact when no standard error is supplied."""
    if se is not None and se < 0.0:
        raise ConfigError(f"standard error must be nonnegative, got {se}")
    if se is None or se == 0.0:
        return 0 if coef == 0.0 else (1 if coef > 0.0 else -1)
    p = 2.0 * (1.0 - _STD_NORMAL.cdf(abs(coef) / se))
    if p >= sig_level:
        return 0
    return 1 if coef > 0.0 else -1


def choose_clustering(
    fs: FirstStage,
    se21: Optional[float] = None,
    se12: Optional[float] = None,
    sig_level: float = 0.05,
    neg_neg_rule: NegNegRule = NegNegRule.UNDEFINED,
) -> ClusterScenario:
    """Map the signs of the cross slopes (a21, a12) to a scenario.

    Signs come from two-sided z-tests at `sig_level` when standard errors
    are given, otherwise from exact comparison with zero. The catalogue:
    a negative cross slope (other one zero or positive) selects control
    clustering of the *other* field; a zero-zero pattern means no
    clustering is needed; any remaining pattern without a negative slope
    pools the treated fields. Both-negative is delegated to `neg_neg_rule`.

    Raises
    ------
    AssumptionError
        Under NegNegRule.FAIL when both cross slopes test negative.
    """
    if not (0.0 < sig_level < 1.0):
        raise ConfigError(f"significance level must be in (0, 1), got {sig_level}")
    s21 = _sign(fs.a21, se21, sig_level)
    s12 = _sign(fs.a12, se12, sig_level)
    if s21 < 0 and s12 < 0:
        if neg_neg_rule is NegNegRule.FAIL:
            raise AssumptionError(
                f"both cross slopes are negative (a21={fs.a21:.6g}, a12={fs.a12:.6g}); "
                "no catalogued clustering applies",
                violations=("a21 < 0", "a12 < 0"),
            )
        if neg_neg_rule is NegNegRule.LARGER_MAGNITUDE:
            return ClusterScenario.control(1 if fs.a21 <= fs.a12 else 2)
        return ClusterScenario.undefined()
    if s21 < 0:
        return ClusterScenario.control(1)
    if s12 < 0:
        return ClusterScenario.control(2)
    if s21 == 0 and s12 == 0:
        return ClusterScenario.no_clustering()
    return ClusterScenario.treatment()


@dataclass(frozen=True)
class ClusterATerm:
    """One weighted average-effect component of a clustered estimand."""

    label: str
    weight: float
    effect: float

    @property
    def contribution(self) -> float:
        return self.weight * self.effect


@dataclass(frozen=True)
class ClusterBiasTerm:
    """One defier contamination term of a clustered estimand."""

    label: str
    weight: float
    delta: float
    sign: int

    @property
    def contribution(self) -> float:
        return self.sign * self.weight * self.delta


@dataclass(frozen=True)
class ClusterDecomposition:
    """A clustered Wald estimand split into average-effect terms and bias."""

    scenario: ClusterScenario
    pi: float
    a_terms: tuple[ClusterATerm, ...]
    bias_terms: tuple[ClusterBiasTerm, ...]

    @property
    def a_total(self) -> float:
        return math.fsum(t.contribution for t in self.a_terms)

    @property
    def bias(self) -> float:
        return math.fsum(t.contribution for t in self.bias_terms)

    @property
    def total(self) -> float:
        return self.a_total + self.bias


def _require_estimand_scenario(scenario: ClusterScenario) -> None:
    if scenario.kind not in (ScenarioKind.CONTROL, ScenarioKind.TREATMENT):
        raise ConfigError(
            f"no clustered estimand under scenario {scenario.label!r}; "
            "only control and treatment clustering define one"
        )


def _pi(pop: Population, groups: tuple[MarginalGroup, ...], scenario: ClusterScenario) -> float:
    pi = group_prob(pop, groups)
    if pi <= DEN_TOL:
        raise RankError(
            f"clustered first stage is zero under scenario {scenario.label!r}: "
            f"P({' | '.join(g.name for g in groups)}) = {pi:.6g}"
        )
    return pi


def cluster_estimand_formula(pop: Population, scenario: ClusterScenario) -> ClusterDecomposition:
    """Exact clustered Wald estimand decomposed over marginal groups.

    Control clustering of field f (other field o): the estimand averages
    E[y(f)-y(0)] over C(f) with ND(o) and E[y(f)-y(o)] over C(o) with ND(f),
    both weighted by group share over the union probability pi, plus
    irrelevance-defier bias +P(IDf)/pi * E[y(o)-y(0) | IDf] and
    -P(IDo)/pi * E[y(o)-y(0) | IDo]. Treatment clustering mirrors with the
    roles of irrelevance and next-best defiers exchanged.
    """
    _require_estimand_scenario(scenario)
    g = MarginalGroup
    if scenario.kind is ScenarioKind.CONTROL:
        f = scenario.treatment_field
        o = 3 - f
        cf, co = g[f"C{f}"], g[f"C{o}"]
        ndf, ndo = g[f"ND{f}"], g[f"ND{o}"]
        idf, ido = g[f"ID{f}"], g[f"ID{o}"]
        pi = _pi(pop, (g.C1, g.C2, g.ND1, g.ND2), scenario)
        a_specs = (
            (f"C{f}|ND{o}", (cf, ndo), f, 0),
            (f"C{o}|ND{f}", (co, ndf), f, o),
        )
        bias_specs = (
            ("w~1", idf, o, 0, 1),
            ("w~2", ido, o, 0, -1),
        )
    else:
        pi = _pi(pop, (g.C1, g.C2, g.ID1, g.ID2), scenario)
        a_specs = (
            ("C1|ID2", (g.C1, g.ID2), 1, 0),
            ("C2|ID1", (g.C2, g.ID1), 2, 0),
        )
        bias_specs = (
            ("w~3", g.ND1, 1, 2, 1),
            ("w~4", g.ND2, 1, 2, -1),
        )
    a_terms = []
    for label, groups, j, kk in a_specs:
        p = group_prob(pop, groups)
        if p == 0.0:
            continue
        a_terms.append(ClusterATerm(label=label, weight=p / pi, effect=group_effect(pop, groups, j, kk)))
    bias_terms = []
    for label, grp, j, kk, sign in bias_specs:
        p = group_prob(pop, (grp,))
        if p == 0.0:
            continue
        bias_terms.append(
            ClusterBiasTerm(label=label, weight=p / pi, delta=group_effect(pop, (grp,), j, kk), sign=sign)
        )
    return ClusterDecomposition(scenario=scenario, pi=pi, a_terms=tuple(a_terms), bias_terms=tuple(bias_terms))


def _constant_effects(pop: Population) -> tuple[float, float]:
    """The common (E[y(1)-y(0)], E[y(2)-y(0)]) across positive-probability
    strata; levels may differ, effects may not (exact comparison)."""
    live = [e for e in pop.entries if e.prob > 0.0]
    tau1 = live[0].means[1] - live[0].means[0]
    tau2 = live[0].means[2] - live[0].means[0]
    for e in live[1:]:
        if e.means[1] - e.means[0] != tau1 or e.means[2] - e.means[0] != tau2:
            raise ConfigError(
                f"stratum {e.stratum.name} breaks constant effects: "
                f"({e.means[1] - e.means[0]:.6g}, {e.means[2] - e.means[0]:.6g}) "
                f"differs from ({tau1:.6g}, {tau2:.6g})"
            )
    return tau1, tau2


def cluster_estimand_constant_effects(pop: Population, scenario: ClusterScenario) -> ClusterDecomposition:
    """Clustered estimand when treatment effects are constant across strata.

    The contamination collapses to a single term driven by the *difference*
    of the two defier shares, so equal shares cancel the bias exactly even
    though both defier types are present.
    """
    _require_estimand_scenario(scenario)
    tau1, tau2 = _constant_effects(pop)
    shares = marginal_shares(pop)
    g = MarginalGroup
    if scenario.kind is ScenarioKind.CONTROL:
        f = scenario.treatment_field
        o = 3 - f
        tf = tau1 if f == 1 else tau2
        to = tau2 if f == 1 else tau1
        pi = _pi(pop, (g.C1, g.C2, g.ND1, g.ND2), scenario)
        a_specs = (
            (f"C{f}|ND{o}", group_prob(pop, (g[f"C{f}"], g[f"ND{o}"])), tf),
            (f"C{o}|ND{f}", group_prob(pop, (g[f"C{o}"], g[f"ND{f}"])), tf - to),
        )
        diff = shares[g[f"ID{f}"]] - shares[g[f"ID{o}"]]
        bias_label, delta = "w.1", to
    else:
        pi = _pi(pop, (g.C1, g.C2, g.ID1, g.ID2), scenario)
        a_specs = (
            ("C1|ID2", group_prob(pop, (g.C1, g.ID2)), tau1),
            ("C2|ID1", group_prob(pop, (g.C2, g.ID1)), tau2),
        )
        diff = shares[g.ND1] - shares[g.ND2]
        bias_label, delta = "w.2", tau1 - tau2
    a_terms = tuple(
        ClusterATerm(label=label, weight=p / pi, effect=effect) for label, p, effect in a_specs if p != 0.0
    )
    bias_terms = ()
    if diff != 0.0:
        bias_terms = (
            ClusterBiasTerm(label=bias_label, weight=abs(diff) / pi, delta=delta, sign=1 if diff > 0.0 else -1),
        )
    return ClusterDecomposition(scenario=scenario, pi=pi, a_terms=a_terms, bias_terms=bias_terms)


@dataclass(frozen=True)
class ExclusionVerdict:
    """Whether collapsing preserves the exclusion restriction, with the
    offending strata when it does not."""

    holds: bool
    violations: tuple[str, ...]


def check_cluster_exclusion(pop: Population, scenario: ClusterScenario) -> ExclusionVerdict:
    """Check that the collapsed instrument is excludable.

    Control clustering relabels field o observations as controls, so any
    irrelevance-defier stratum whose field-o outcome differs from its
    control outcome makes the pseudo-control arm instrument-dependent.
    Treatment clustering pools the treated fields, so any next-best-defier
    stratum with different outcomes across the two treated fields breaks
    the pooled arm. Comparisons are exact.
    """
    _require_estimand_scenario(scenario)
    g = MarginalGroup
    if scenario.kind is ScenarioKind.CONTROL:
        suspects = (g.ID1, g.ID2)
        j, kk = 3 - scenario.treatment_field, 0
    else:
        suspects = (g.ND1, g.ND2)
        j, kk = 1, 2
    members = frozenset().union(*(grp.members() for grp in suspects))
    violations = tuple(
        e.stratum.name
        for e in pop.entries
        if e.prob > 0.0 and e.stratum in members and e.means[j] != e.means[kk]
    )
    return ExclusionVerdict(holds=not violations, violations=violations)


class Semantics(enum.Enum):
    """What population the clustered Wald oracle targets."""

    POOLED = "pooled"
    GROUP_RELEVANT = "group-relevant"


def cluster_wald_oracle(
    pop: Population,
    scenario: ClusterScenario,
    semantics: Semantics = Semantics.POOLED,
) -> float:
    """Exact clustered Wald value, computed without any decomposition.

    POOLED takes the two-arm Wald ratio literally: expectations of the
    collapsed outcome and treatment indicator over the full population and
    assignment distribution, cell by instrument cell. GROUP_RELEVANT
    instead averages each stratum's own contrast over the marginal groups
    the decomposition says are relevant, which matches `cluster_estimand_formula`
    whenever no stratum is double-counted by the group union (control: no
    double compliers; treatment: additionally no irrelevance defiers).
    """
    _require_estimand_scenario(scenario)
    if semantics is Semantics.POOLED:
        return _pooled_wald(pop, scenario)
    return _group_relevant_wald(pop, scenario)


def _pooled_wald(pop: Population, scenario: ClusterScenario) -> float:
    s1 = scenario.s1
    p_z1 = math.fsum(pop.assignment[z] for z in s1)
    p_z0 = 1.0 - p_z1
    if p_z1 <= DEN_TOL or p_z0 <= DEN_TOL:
        raise RankError(
            f"instrument arm probabilities ({p_z0:.6g}, {p_z1:.6g}) leave an empty cell "
            f"under scenario {scenario.label!r}"
        )
    ey = [0.0, 0.0]
    ed = [0.0, 0.0]
    for e in pop.entries:
        for z in range(3):
            w = e.prob * pop.assignment[z]
            if w == 0.0:
                continue
            d = e.stratum.trajectory[z]
            cell = 1 if z in s1 else 0
            ey[cell] += w * e.means[d]
            ed[cell] += w * (1.0 if d in s1 else 0.0)
    first_stage = ed[1] / p_z1 - ed[0] / p_z0
    if abs(first_stage) <= DEN_TOL:
        raise RankError(
            f"pooled first stage is {first_stage:.6g} under scenario {scenario.label!r}; "
            "the Wald ratio is undefined"
        )
    return (ey[1] / p_z1 - ey[0] / p_z0) / first_stage


def _group_relevant_wald(pop: Population, scenario: ClusterScenario) -> float:
    g = MarginalGroup
    if scenario.kind is ScenarioKind.CONTROL:
        f = scenario.treatment_field
        o = 3 - f
        contrasts = {
            g[f"C{f}"]: (f, 0, 1),
            g[f"ND{o}"]: (f, 0, 1),
            g[f"C{o}"]: (f, o, 1),
            g[f"ND{f}"]: (f, o, 1),
            g[f"ID{f}"]: (o, 0, 1),
            g[f"ID{o}"]: (o, 0, -1),
        }
        den_groups = (g.C1, g.C2, g.ND1, g.ND2)
    else:
        contrasts = {
            g.C1: (1, 0, 1),
            g.ID2: (1, 0, 1),
            g.C2: (2, 0, 1),
            g.ID1: (2, 0, 1),
            g.ND1: (1, 2, 1),
            g.ND2: (1, 2, -1),
        }
        den_groups = (g.C1, g.C2, g.ID1, g.ID2)
    num = 0.0
    for e in pop.entries:
        if e.prob == 0.0:
            continue
        for grp, (j, kk, sign) in contrasts.items():
            if grp.contains(e.stratum):
                num += sign * e.prob * (e.means[j] - e.means[kk])
    shares = marginal_shares(pop)
    den = math.fsum(shares[grp] for grp in den_groups)
    if den <= DEN_TOL:
        raise RankError(
            f"relevant-group mass is {den:.6g} under scenario {scenario.label!r}; "
            "the Wald ratio is undefined"
        )
    return num / den
