"""Shared random generators for the test suite. Everything is driven by an
explicit numpy Generator so test modules stay reproducible."""

from __future__ import annotations

import numpy as np

from ivstrata import JointStratum, MarginalSpec, Population, StratumEntry

EFFECT_SLOTS = (
    "eff_c1", "eff_c2", "eff_id1", "eff_id2",
    "eff_nd1_1", "eff_nd1_2", "eff_nd2_1", "eff_nd2_2",
)

ALL_STRATA = tuple(JointStratum)


def wbar(spec: MarginalSpec) -> float:
    # Independent restatement of the full-regime denominator.
    return (
        spec.pC1 * spec.pC2
        + spec.pC1 * spec.pND2
        + spec.pND1 * spec.pC2
        + spec.pND1 * spec.pID2
        + spec.pID1 * spec.pND2
        - spec.pID1 * spec.pID2
    )


def random_spec(
    rng: np.random.Generator,
    nd_free: bool = False,
    id_free: bool = False,
    defier_free: bool = False,
    den_floor: float = 0.05,
    effects: dict | None = None,
) -> MarginalSpec:
    """Admissible random MarginalSpec with |denominator| >= den_floor."""
    while True:
        shares = {}
        for k in (1, 2):
            c, idg, nd, _ = rng.dirichlet((2.0, 0.7, 0.7, 0.8))
            if nd_free or defier_free:
                nd = 0.0
            if id_free or defier_free:
                idg = 0.0
            shares[f"pC{k}"] = c
            shares[f"pID{k}"] = idg
            shares[f"pND{k}"] = nd
        if effects is None:
            slot_values = {slot: float(rng.uniform(-1000.0, 1000.0)) for slot in EFFECT_SLOTS}
        else:
            slot_values = dict(effects)
        spec = MarginalSpec(**shares, **slot_values)
        if abs(wbar(spec)) >= den_floor:
            return spec


def constant_effects_spec(rng: np.random.Generator, den_floor: float = 0.05) -> tuple[MarginalSpec, float, float]:
    """Random-share spec whose effect slots all come from one (tau1, tau2)."""
    tau1 = float(rng.uniform(-1000.0, 1000.0))
    tau2 = float(rng.uniform(-1000.0, 1000.0))
    effects = {
        "eff_c1": tau1, "eff_id2": tau1, "eff_nd1_1": tau1, "eff_nd2_1": tau1,
        "eff_c2": tau2, "eff_id1": tau2, "eff_nd1_2": tau2, "eff_nd2_2": tau2,
    }
    return random_spec(rng, den_floor=den_floor, effects=effects), tau1, tau2


def random_population(
    rng: np.random.Generator,
    strata: tuple[JointStratum, ...] = ALL_STRATA,
    noise_sd: float = 0.0,
    alpha: float = 0.6,
    assignment: tuple[float, float, float] | None = None,
    means: dict[JointStratum, tuple[float, float, float]] | None = None,
) -> Population:
    probs = rng.dirichlet(np.full(len(strata), alpha))
    entries = []
    for s, p in zip(strata, probs):
        m = means[s] if means is not None else tuple(float(v) for v in rng.uniform(-500.0, 500.0, size=3))
        entries.append(StratumEntry(stratum=s, prob=float(p), means=m, noise_sd=noise_sd))
    kwargs = {} if assignment is None else {"assignment": assignment}
    return Population(entries=tuple(entries), **kwargs)


def grid_population(rng: np.random.Generator, step: float = 0.02, alpha: float = 0.6) -> Population:
    """Random population whose stratum probabilities are exact multiples of
    `step` (largest-remainder rounding), so implied first stages sit on the
    scan grid."""
    k = round(1.0 / step)
    raw = rng.dirichlet(np.full(len(ALL_STRATA), alpha)) * k
    counts = np.floor(raw).astype(int)
    short = k - int(counts.sum())
    for i in np.argsort(-(raw - counts))[:short]:
        counts[i] += 1
    entries = tuple(
        StratumEntry(
            stratum=s,
            prob=int(c) / k,
            means=tuple(float(v) for v in rng.uniform(-500.0, 500.0, size=3)),
        )
        for s, c in zip(ALL_STRATA, counts)
        if c > 0
    )
    return Population(entries=entries)
