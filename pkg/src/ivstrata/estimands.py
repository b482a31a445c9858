"""Field-level IV estimands: the exact moment-system solution and its
complier-LATE-plus-bias decompositions.

The estimand of a two-stage least squares regression of y on indicators for
fields 1 and 2, instrumented by indicators for instrument states 1 and 2, is
the solution of a 2x2 population moment system in the marginal shares and
group effects. `solve_moment_system` computes that solution directly and is
the independent oracle; `decompose` reproduces it as a complier LATE plus
labeled defier-weight terms under three assumption regimes, and `bias_sweep`
tabulates the bias over share and effect-gap grids.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace
from typing import Optional, Sequence

from .exceptions import AssumptionError, ConfigError, RankError
from .strata import MarginalSpec

DEN_TOL = 1e-10  # singularity threshold for system determinant and regime denominators


class Regime(enum.Enum):
    """Which auxiliary assumption is maintained when decomposing.

    NEXT_BEST_ONLY assumes away next-best defiers (requires pND1=pND2=0),
    IRRELEVANCE_ONLY assumes away irrelevance defiers (pID1=pID2=0), and
    NEITHER imposes nothing beyond exclusion, independence, rank and
    monotonicity.
    """

    NEXT_BEST_ONLY = "next-best"
    IRRELEVANCE_ONLY = "irrelevance"
    NEITHER = "neither"


@dataclass(frozen=True)
class BiasTerm:
    """One labeled bias term: signed weight times an effect difference."""

    label: str
    weight: float  # >= 0; the denominator's sign is folded into `sign`
    delta: float
    sign: int

    @property
    def contribution(self) -> float:
        return self.sign * self.weight * self.delta


@dataclass(frozen=True)
class BiasDecomposition:
    """A complier LATE plus bias terms, summing to the IV estimand.

    total = late + sum(sign * weight * delta) holds by construction;
    `denominator` is the regime's weight denominator before taking
    absolute values.
    """

    late: float
    terms: tuple[BiasTerm, ...]
    denominator: float
    total: float

    @property
    def bias(self) -> float:
        return math.fsum(t.contribution for t in self.terms)


# The nine-term table for the first instrument's estimand. Each row:
# (label, (share, share) weight product, (slot, slot) effect difference, sign).
# The other estimand follows by swapping instrument labels (MarginalSpec.swapped).
_TERMS = (
    ("w1", ("pID1", "pID2"), ("eff_c1", "eff_id2"), +1),
    ("w2", ("pID1", "pC2"), ("eff_c2", "eff_id1"), -1),
    ("w3", ("pND1", "pC2"), ("eff_nd1_1", "eff_c1"), +1),
    ("w4", ("pND1", "pC2"), ("eff_nd1_2", "eff_c2"), -1),
    ("w5", ("pND1", "pND2"), ("eff_nd1_1", "eff_nd2_1"), +1),
    ("w6", ("pND1", "pND2"), ("eff_nd1_2", "eff_nd2_2"), -1),
    ("w7", ("pND1", "pID2"), ("eff_c1", "eff_id2"), -1),
    ("w8", ("pID1", "pND2"), ("eff_nd2_1", "eff_c1"), +1),
    ("w9", ("pID1", "pND2"), ("eff_nd2_2", "eff_id1"), -1),
)

_REGIME_TERMS = {
    Regime.NEXT_BEST_ONLY: _TERMS[0:2],
    Regime.IRRELEVANCE_ONLY: _TERMS[2:6],
    Regime.NEITHER: _TERMS,
}


def _denominator(spec: MarginalSpec, regime: Regime) -> float:
    if regime is Regime.NEXT_BEST_ONLY:
        return spec.pC1 * spec.pC2 - spec.pID1 * spec.pID2
    if regime is Regime.IRRELEVANCE_ONLY:
        return spec.pC1 * spec.pC2 + spec.pC1 * spec.pND2 + spec.pND1 * spec.pC2
    # Full denominator; reduces bitwise to the two above when the excluded
    # shares are exactly zero (term order matters for that).
    return (
        spec.pC1 * spec.pC2
        + spec.pC1 * spec.pND2
        + spec.pND1 * spec.pC2
        + spec.pND1 * spec.pID2
        + spec.pID1 * spec.pND2
        - spec.pID1 * spec.pID2
    )


def solve_moment_system(spec: MarginalSpec) -> tuple[float, float]:
    """Exact IV estimands (beta1, beta2) from the population moment system.

    The two instrument contrasts give a 2x2 linear system: the coefficient
    matrix holds the treatment-share responses of each field indicator to
    each instrument, and the right side holds the corresponding outcome
    responses. This is closed-form algebra with no decomposition structure,
    which is what makes it an independent oracle.

    Raises
    ------
    RankError
        If the system determinant is within 1e-10 of zero (the instrument
        relevance / rank condition fails).
    ConfigError
        If an effect slot multiplied by a nonzero share is absent.
    """
    a11 = spec.pC1 + spec.pND1
    a21 = spec.pID1 - spec.pND1
    a12 = spec.pID2 - spec.pND2
    a22 = spec.pC2 + spec.pND2
    det = a11 * a22 - a21 * a12
    if abs(det) <= DEN_TOL:
        raise RankError(f"moment system is singular (determinant {det!r}); instruments do not shift choices")

    def rf(pC: float, pND: float, pID: float, c: str, nd_own: str, nd_other: str, idg: str) -> float:
        # Outcome response to one instrument contrast: compliers move 0->k,
        # next-best defiers move k'->k, irrelevance defiers move 0->k'.
        total = 0.0
        if pC != 0.0:
            total += pC * spec.effect(c)
        if pND != 0.0:
            total += pND * (spec.effect(nd_own) - spec.effect(nd_other))
        if pID != 0.0:
            total += pID * spec.effect(idg)
        return total

    b1 = rf(spec.pC1, spec.pND1, spec.pID1, "eff_c1", "eff_nd1_1", "eff_nd1_2", "eff_id1")
    b2 = rf(spec.pC2, spec.pND2, spec.pID2, "eff_c2", "eff_nd2_2", "eff_nd2_1", "eff_id2")
    beta1 = (b1 * a22 - a21 * b2) / det
    beta2 = (a11 * b2 - b1 * a12) / det
    return beta1, beta2


def complier_late(spec: MarginalSpec) -> tuple[float, float]:
    """The complier LATEs (E[y1-y0|C1], E[y2-y0|C2]), valid only without defiers.

    Raises
    ------
    AssumptionError
        If any defier share is nonzero, naming the offending share.
    RankError
        If there are no compliers for one of the instruments.
    """
    for name in ("pID1", "pID2"):
        v = getattr(spec, name)
        if v != 0.0:
            raise AssumptionError(f"irrelevance violated: P({name[1:]})={v} must be 0 for a complier LATE")
    for name in ("pND1", "pND2"):
        v = getattr(spec, name)
        if v != 0.0:
            raise AssumptionError(f"next-best violated: P({name[1:]})={v} must be 0 for a complier LATE")
    det = spec.pC1 * spec.pC2
    if abs(det) <= DEN_TOL:
        raise RankError(f"no complier mass (P(C1)*P(C2)={det!r}); the estimands are not identified")
    return spec.effect("eff_c1"), spec.effect("eff_c2")


def _check_regime(spec: MarginalSpec, regime: Regime) -> None:
    if regime is Regime.NEXT_BEST_ONLY and (spec.pND1 != 0.0 or spec.pND2 != 0.0):
        raise AssumptionError(
            f"regime {regime.value!r} requires pND1=pND2=0, got pND1={spec.pND1}, pND2={spec.pND2}"
        )
    if regime is Regime.IRRELEVANCE_ONLY and (spec.pID1 != 0.0 or spec.pID2 != 0.0):
        raise AssumptionError(
            f"regime {regime.value!r} requires pID1=pID2=0, got pID1={spec.pID1}, pID2={spec.pID2}"
        )


def _decompose_first(spec: MarginalSpec, regime: Regime) -> BiasDecomposition:
    den = _denominator(spec, regime)
    if abs(den) <= DEN_TOL:
        raise RankError(f"degenerate identification: regime denominator {den!r} is near zero")
    late = spec.effect("eff_c1")
    terms = []
    for label, (sa, sb), (ea, eb), base_sign in _REGIME_TERMS[regime]:
        product = getattr(spec, sa) * getattr(spec, sb)
        if product != 0.0:
            delta = spec.effect(ea) - spec.effect(eb)
        else:
            # Weight is exactly zero, so the value is immaterial; avoid
            # demanding effect slots no term actually uses.
            va, vb = getattr(spec, ea), getattr(spec, eb)
            delta = (va - vb) if (va is not None and vb is not None) else 0.0
        omega = product / den
        if omega < 0.0:  # fold the denominator's sign into the term sign
            terms.append(BiasTerm(label=label, weight=-omega, delta=delta, sign=-base_sign))
        else:
            terms.append(BiasTerm(label=label, weight=omega, delta=delta, sign=base_sign))
    total = late + math.fsum(t.contribution for t in terms)
    return BiasDecomposition(late=late, terms=tuple(terms), denominator=den, total=total)


def decompose(
    spec: MarginalSpec, regime: Regime = Regime.NEITHER
) -> tuple[BiasDecomposition, BiasDecomposition]:
    """Decompose both IV estimands into complier LATE plus bias terms.

    The term list mirrors the regime's closed form exactly: 2 terms when
    next-best defiers are assumed away, 4 under irrelevance only, all 9
    otherwise (weights may be zero). The second estimand's decomposition is
    the first one evaluated on the label-swapped spec.

    Raises
    ------
    AssumptionError
        If the spec violates the regime's share restrictions.
    RankError
        If the regime denominator is within 1e-10 of zero.
    """
    _check_regime(spec, regime)
    return _decompose_first(spec, regime), _decompose_first(spec.swapped(), regime)


class SweepAxis(enum.Enum):
    DEFIER_SHARE = "defier-share"
    EFFECT_GAP = "effect-gap"


@dataclass(frozen=True)
class SweepRow:
    """One sweep evaluation: NaN entries flag an infeasible grid point."""

    axis: float
    level: float
    beta: float
    late: float
    bias: float

    @property
    def feasible(self) -> bool:
        return not math.isnan(self.beta)


def _sweep_spec(base: MarginalSpec, p: float, gap: float, defier: str) -> MarginalSpec:
    # No always/never takers on the varied instrument: compliers absorb the
    # complement. The gap is applied so only the first bias delta is nonzero.
    if defier == "id1":
        return replace(
            base,
            pID1=p,
            pC1=1.0 - p,
            pND1=0.0,
            eff_id2=base.effect("eff_c1") - gap,
            eff_id1=base.effect("eff_c2"),
        )
    return replace(
        base,
        pND1=p,
        pC1=1.0 - p,
        pID1=0.0,
        eff_nd1_1=base.effect("eff_c1") + gap,
        eff_nd1_2=base.effect("eff_c2"),
    )


def bias_sweep(
    base: MarginalSpec,
    axis: SweepAxis,
    grid: Sequence[float],
    levels: Sequence[float],
    defier: str = "id1",
) -> tuple[SweepRow, ...]:
    """Tabulate the first estimand's bias over a share/effect-gap grid.

    For DEFIER_SHARE the grid varies the defier share p (P(ID1) by default,
    P(ND1) with defier="nd1") with P(C1)=1-p, holding the instrument-2 side
    of `base` fixed; each level is an effect gap between compliers and the
    varied defier group. EFFECT_GAP transposes the roles: the grid varies
    the gap, each level is a defier share. Rows come out in grid-major
    order; a grid point with invalid shares or a degenerate denominator
    yields a NaN-valued row rather than being dropped.
    """
    if defier not in ("id1", "nd1"):
        raise ConfigError(f"defier must be 'id1' or 'nd1', got {defier!r}")
    if axis is SweepAxis.DEFIER_SHARE:
        points = [(g, lv, g, lv) for g in grid for lv in levels]  # (axis, level, p, gap)
    else:
        points = [(g, lv, lv, g) for g in grid for lv in levels]
    rows = []
    for axis_value, level, p, gap in points:
        try:
            dec = _decompose_first(_sweep_spec(base, p, gap, defier), Regime.NEITHER)
            rows.append(
                SweepRow(axis=axis_value, level=level, beta=dec.total, late=dec.late, bias=dec.total - dec.late)
            )
        except (ConfigError, AssumptionError, RankError):
            nan = float("nan")
            rows.append(SweepRow(axis=axis_value, level=level, beta=nan, late=nan, bias=nan))
    return tuple(rows)
