"""First-stage identities, point identification under a maintained
assumption, and partial-identification bounds for defier shares.

Regressing each field indicator on the two instrument indicators gives six
coefficients. Their population values are share combinations: the intercepts
are the always-taker shares, the own-instrument slopes combine compliers and
next-best defiers, and the cross-instrument slopes are the *difference*
between irrelevance and next-best defier shares. The cross slopes therefore
bound, but do not point-identify, the defier shares; maintaining one of the
auxiliary assumptions collapses the bounds to a point and makes the sign of
the cross slope a refutation test of the other assumption.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .exceptions import AssumptionError, ConfigError, InfeasibleError
from .strata import MarginalGroup

SHARE_ATOL = 1e-9  # slack for float dust when shares derive from arithmetic


@dataclass(frozen=True)
class FirstStage:
    """The six first-stage coefficients.

    `aJZ` is the coefficient of the instrument-Z indicator in the linear
    projection of the field-J indicator (Z=0 denotes the intercept), so
    a10, a11, a12 belong to the field-1 equation and a20, a21, a22 to the
    field-2 equation.

    The constructor is deliberately permissive: estimated coefficients can
    stray outside the population inequalities. Call `validate()` before
    treating an instance as population-consistent.
    """

    a10: float
    a11: float
    a12: float
    a20: float
    a21: float
    a22: float

    def __post_init__(self):
        for name in ("a10", "a11", "a12", "a20", "a21", "a22"):
            v = getattr(self, name)
            if not math.isfinite(v):
                raise ConfigError(f"first-stage coefficient {name}={v} is not finite")
            object.__setattr__(self, name, float(v))

    @property
    def nt1(self) -> float:
        """Implied never-taker share for instrument 1."""
        return 1.0 - self.a10 - self.a20 - self.a11 - self.a21

    @property
    def nt2(self) -> float:
        return 1.0 - self.a10 - self.a20 - self.a22 - self.a12

    def validate(self, atol: float = SHARE_ATOL) -> "FirstStage":
        """Check the population inequalities; raise InfeasibleError listing
        every violated one."""
        checks = (
            ("a10", self.a10, 0.0, 1.0),
            ("a20", self.a20, 0.0, 1.0),
            ("a11", self.a11, 0.0, 1.0),
            ("a22", self.a22, 0.0, 1.0),
            ("a21", self.a21, -1.0, 1.0),
            ("a12", self.a12, -1.0, 1.0),
            ("implied P(NT1)", self.nt1, 0.0, 1.0),
            ("implied P(NT2)", self.nt2, 0.0, 1.0),
        )
        violations = [
            f"{name} = {value:.6g} outside [{lo:g}, {hi:g}]"
            for name, value, lo, hi in checks
            if value < lo - atol or value > hi + atol
        ]
        if violations:
            raise InfeasibleError("first stage is not population-consistent: " + "; ".join(violations))
        return self


def first_stage_from_shares(shares: Mapping[MarginalGroup, float]) -> FirstStage:
    """Population first-stage coefficients implied by marginal group shares."""
    g = MarginalGroup
    return FirstStage(
        a10=shares[g.AT1],
        a11=shares[g.C1] + shares[g.ND1],
        a12=shares[g.ID2] - shares[g.ND2],
        a20=shares[g.AT2],
        a21=shares[g.ID1] - shares[g.ND1],
        a22=shares[g.C2] + shares[g.ND2],
    )


class Maintained(enum.Enum):
    """Which auxiliary assumption is maintained when inverting a first stage."""

    NEXT_BEST = "next-best"
    IRRELEVANCE = "irrelevance"


def shares_from_first_stage(fs: FirstStage, maintained: Maintained) -> dict[MarginalGroup, float]:
    """Point-identify all twelve group shares under a maintained assumption.

    Maintaining next-best sets the next-best defier shares to zero, so the
    cross slopes *are* the irrelevance defier shares; maintaining
    irrelevance sets the irrelevance shares to zero, so the cross slopes are
    the negated next-best shares. Either way every share must land in
    [0, 1]; any that does not refutes the maintained assumption.

    Raises
    ------
    AssumptionError
        Listing each share inequality the data violate (the empirical test
        verdict). Exit code 3 at the CLI.
    """
    g = MarginalGroup
    if maintained is Maintained.NEXT_BEST:
        c1, id1, nd1 = fs.a11, fs.a21, 0.0
        c2, id2, nd2 = fs.a22, fs.a12, 0.0
    else:
        c1, id1, nd1 = fs.a11 + fs.a21, 0.0, -fs.a21
        c2, id2, nd2 = fs.a22 + fs.a12, 0.0, -fs.a12
    shares = {
        g.C1: c1,
        g.ID1: id1,
        g.ND1: nd1,
        g.C2: c2,
        g.ID2: id2,
        g.ND2: nd2,
        g.AT1: fs.a10,
        g.AT2: fs.a20,
        g.NT1: fs.nt1,
        g.NT2: fs.nt2,
        g.OT1: fs.a20 - nd1,
        g.OT2: fs.a10 - nd2,
    }
    violations = [
        f"P({grp.name}) = {v:.6g} outside [0, 1]"
        for grp, v in shares.items()
        if v < -SHARE_ATOL or v > 1.0 + SHARE_ATOL
    ]
    if violations:
        raise AssumptionError(
            f"data refute maintained assumption {maintained.value!r}: " + "; ".join(violations),
            violations=tuple(violations),
        )
    # Clamp float dust so downstream probability checks see clean values.
    return {grp: min(1.0, max(0.0, v)) for grp, v in shares.items()}


@dataclass(frozen=True)
class DefierBounds:
    """Closed intervals [lo, hi] for the four defier shares."""

    nd1: tuple[float, float]
    id1: tuple[float, float]
    nd2: tuple[float, float]
    id2: tuple[float, float]

    def intervals(self) -> dict[str, tuple[float, float]]:
        return {"ND1": self.nd1, "ID1": self.id1, "ND2": self.nd2, "ID2": self.id2}


def defier_bounds(fs: FirstStage) -> DefierBounds:
    """Sharp-by-formula bounds on the defier shares from a first stage.

    For instrument 1: P(ND1) lies in [max(0, -a21), min(a11, a20)] (a
    next-best defier both depresses the cross slope and is an always taker
    of the other field), and P(ID1) = a21 + P(ND1) translates that interval.
    Instrument 2 mirrors with the indices swapped.

    Raises
    ------
    InfeasibleError
        If an interval inverts (lo > hi): no population satisfying the
        maintained choice model can produce this first stage.
    """
    fs.validate()

    def one(cross: float, own_slope: float, other_intercept: float, k: int) -> tuple[tuple[float, float], tuple[float, float]]:
        nd_lo = max(0.0, -cross)
        nd_hi = min(own_slope, other_intercept)
        if nd_lo > nd_hi:
            raise InfeasibleError(
                f"no feasible P(ND{k}): requires at least {nd_lo:.6g} from the cross slope "
                f"but at most {nd_hi:.6g} from the own slope and other-field intercept"
            )
        id_lo = max(0.0, cross)
        id_hi = max(0.0, cross + nd_hi)
        return (nd_lo, nd_hi), (id_lo, id_hi)

    nd1, id1 = one(fs.a21, fs.a11, fs.a20, 1)
    nd2, id2 = one(fs.a12, fs.a22, fs.a10, 2)
    return DefierBounds(nd1=nd1, id1=id1, nd2=nd2, id2=id2)


def feasible_set_scan(fs: FirstStage, step: float = 0.05) -> DefierBounds:
    """Attained defier-share ranges from brute-force feasibility, the
    independent check on `defier_bounds`.

    Enumerates every probability vector over the ten joint strata on the
    1/round(1/step) grid that sums to one and reproduces all six first-stage
    coefficients within step/2, and reports the min/max of each defier share
    over the kept set. The six coefficient equations pin seven of the ten
    probabilities given the two next-best defier masses and the mass of the
    double-complier stratum, so only those three dimensions are enumerated;
    the kept set is identical to a full ten-dimensional scan.

    Raises
    ------
    ConfigError
        If step is outside (0, 0.1].
    InfeasibleError
        If the kept set is empty (the first stage is infeasible at this
        resolution).
    """
    if not (0.0 < step <= 0.1):
        raise ConfigError(f"scan step must be in (0, 0.1], got {step}")
    k = round(1.0 / step)
    tol = k * step / 2.0 + 1e-9  # grid units; half-step match window, boundary-inclusive

    def candidates(alpha: float) -> range:
        target = alpha * k
        return range(math.ceil(target - tol), math.floor(target + tol) + 1)

    lo = {name: math.inf for name in ("nd1", "id1", "nd2", "id2")}
    hi = {name: -math.inf for name in ("nd1", "id1", "nd2", "id2")}
    found = False
    for m10 in candidates(fs.a10):
        for m20 in candidates(fs.a20):
            for m11 in candidates(fs.a11):
                for m22 in candidates(fs.a22):
                    for m21 in candidates(fs.a21):
                        for m12 in candidates(fs.a12):
                            # Free masses: n1 = P(ND1)*k, n2 = P(ND2)*k. For a given
                            # pair, a valid double-complier mass exists iff the
                            # remaining strata stay nonnegative, which is an interval
                            # condition.
                            n1 = np.arange(max(0, -m21), m20 + 1)
                            n2 = np.arange(max(0, -m12), m10 + 1)
                            if n1.size == 0 or n2.size == 0:
                                continue
                            s = n1[:, None] + n2[None, :]
                            upper = min(m11 - m12, m22 - m21) - s
                            lower = (m10 + m20 + m11 + m22 - k) - s
                            mask = (upper >= 0) & (upper >= lower)
                            if not mask.any():
                                continue
                            found = True
                            n1_ok = n1[mask.any(axis=1)]
                            n2_ok = n2[mask.any(axis=0)]
                            for name, values in (
                                ("nd1", n1_ok),
                                ("id1", m21 + n1_ok),
                                ("nd2", n2_ok),
                                ("id2", m12 + n2_ok),
                            ):
                                lo[name] = min(lo[name], int(values.min()) / k)
                                hi[name] = max(hi[name], int(values.max()) / k)
    if not found:
        raise InfeasibleError(
            f"no stratum probability vector on the 1/{k} grid reproduces these "
            f"first-stage coefficients within {step / 2:g}"
        )
    return DefierBounds(
        nd1=(lo["nd1"], hi["nd1"]),
        id1=(lo["id1"], hi["id1"]),
        nd2=(lo["nd2"], hi["nd2"]),
        id2=(lo["id2"], hi["id2"]),
    )
