"""Secrecy quantification: typical deciphering sets, concentration, bounds.

The security of a running-key cipher against an unbounded adversary is
measured by the set of near-equiprobable plaintexts that carry almost all
posterior mass given the ciphertext.  This module constructs that set
exhaustively at desk scale, measures its mass / internal probability spread
/ growth exponent, runs finite-length Monte Carlo experiments showing the
per-letter posterior log-probability concentrating at the equivocation rate
h(X|Z), and certifies the closed-form lower bounds

    h(X|Z)  >=  h(X) + h(Y) - log2 n
            ==  h(X) - r_Y  ==  h(Y) - r_X  ==  log2 n - (r_X + r_Y)

together with their redundancy rewritings.  A bias sweep over key models
P(0) = 0.5 - tau quantifies how gracefully security degrades as the key
stream drifts away from the one-time pad.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cipher import CipherSpec
from .errors import CertificationError, UnsupportedCipherError
from .inference import (
    DEFAULT_STATE_CAP,
    DEFAULT_WORD_CAP,
    EntropyBracket,
    _map_ordered,
    _ProductChain,
    hxz_bracket,
    posterior,
)
from .sources import SourceModel, _walk_batch, make_bernoulli

DEFAULT_MEMBER_CAP = 1 << 22

# fixed Monte Carlo batch width; never derived from the worker count, so
# grouping (and therefore every float) is identical for any parallelism
_SAMPLE_CHUNK = 2048


@dataclass(frozen=True)
class TypicalSet:
    """Plaintexts whose per-letter posterior surprisal sits within eps/2 of h_ref.

    ``mass`` is the total posterior probability of the members (its
    complement is the measured delta), ``spread`` the largest per-letter
    log-posterior difference between two members (strictly below epsilon by
    construction), and ``growth`` the exponent ``log2(count) / t``.
    ``members`` holds packed plaintext indices, or None when the set is
    larger than ``member_cap`` and only the summary statistics are kept.
    """

    ciphertext: np.ndarray
    epsilon: float
    h_ref: float
    member_count: int
    mass: float
    spread: float
    growth: float
    members: np.ndarray | None
    member_cap: int

    def __post_init__(self):
        if not 0.0 <= self.mass <= 1.0 + 1e-12:
            raise CertificationError(f"typical-set mass {self.mass!r} outside [0, 1]")
        if self.member_count >= 2 and not self.spread < self.epsilon:
            raise CertificationError(
                f"member spread {self.spread!r} reached epsilon {self.epsilon!r}"
            )

    @property
    def length(self) -> int:
        return int(self.ciphertext.size)

    def satisfies_counting_bound(self, threshold: float) -> bool:
        """Check ``count > threshold * 2^(t (h_ref - eps))`` when mass >= threshold."""
        if self.mass < threshold:
            return True
        floor = threshold * 2.0 ** (self.length * (self.h_ref - self.epsilon))
        return self.member_count > floor

    def as_dict(self) -> dict:
        return {
            "t": self.length,
            "epsilon": self.epsilon,
            "h_ref": self.h_ref,
            "member_count": self.member_count,
            "mass": self.mass,
            "spread": self.spread,
            "growth": self.growth,
            "members_kept": self.members is not None,
        }


def build_typical_set(
    xm: SourceModel,
    ym: SourceModel,
    spec: CipherSpec,
    ciphertext,
    epsilon: float,
    h_ref: float | None = None,
    *,
    bracket_order: int = 8,
    member_cap: int = DEFAULT_MEMBER_CAP,
    cap: int = DEFAULT_WORD_CAP,
    state_cap: int = DEFAULT_STATE_CAP,
    workers: int = 1,
) -> TypicalSet:
    """Exhaustively construct the typical deciphering set of a ciphertext.

    Membership is the strict band ``|-(1/t) log2 P(x|z) - h_ref| < eps/2``
    evaluated on the exact posterior table.  When ``h_ref`` is omitted it
    defaults to the midpoint of :func:`runkey.inference.hxz_bracket` at
    ``bracket_order``; the bracket width is then a stated slack on top of
    epsilon and is the caller's to account for.
    """
    if epsilon <= 0.0:
        raise ValueError("epsilon must be positive")
    if h_ref is None:
        h_ref = hxz_bracket(
            xm, ym, spec, bracket_order, cap=cap, state_cap=state_cap, workers=workers
        ).midpoint
    table = posterior(xm, ym, spec, ciphertext, cap=cap, workers=workers)
    t = table.length
    rate = -table.log_posterior / t
    band = np.abs(rate - h_ref) < 0.5 * epsilon
    count = int(band.sum())
    if count:
        selected = table.log_posterior[band]
        mass = float(np.exp2(selected).sum())
        spread = float((selected.max() - selected.min()) / t) if count >= 2 else 0.0
        growth = float(np.log2(count) / t)
    else:
        mass, spread, growth = 0.0, 0.0, float("-inf")
    members = np.flatnonzero(band) if count <= member_cap else None
    return TypicalSet(
        ciphertext=table.ciphertext,
        epsilon=float(epsilon),
        h_ref=float(h_ref),
        member_count=count,
        mass=min(mass, 1.0),
        spread=spread,
        growth=growth,
        members=members,
        member_cap=member_cap,
    )


@dataclass(frozen=True)
class GrowthPoint:
    """One sampled (length, growth exponent, mass) measurement."""

    t: int
    growth: float
    mass: float

    def as_dict(self) -> dict:
        return {"t": self.t, "growth": self.growth, "mass": self.mass}


def typical_set_growth(
    xm: SourceModel,
    ym: SourceModel,
    spec: CipherSpec,
    t_list,
    epsilon: float,
    seed: int,
    *,
    h_ref: float | None = None,
    bracket_order: int = 8,
    member_cap: int = DEFAULT_MEMBER_CAP,
    cap: int = DEFAULT_WORD_CAP,
    state_cap: int = DEFAULT_STATE_CAP,
    workers: int = 1,
) -> list[GrowthPoint]:
    """Growth exponent of the typical set along a ladder of lengths.

    For each length a fresh (plaintext, key) pair is sampled from the models
    (seeds derived from ``(seed, t, stream)``), enciphered, and measured
    with :func:`build_typical_set`.
    """
    if h_ref is None:
        h_ref = hxz_bracket(
            xm, ym, spec, bracket_order, cap=cap, state_cap=state_cap, workers=workers
        ).midpoint
    points = []
    for t in t_list:
        x = xm.sample(t, np.random.SeedSequence((seed, t, 0)))
        y = ym.sample(t, np.random.SeedSequence((seed, t, 1)))
        z = spec.encrypt(x, y)
        built = build_typical_set(
            xm, ym, spec, z, epsilon, h_ref,
            member_cap=member_cap, cap=cap, state_cap=state_cap, workers=workers,
        )
        points.append(GrowthPoint(t=int(t), growth=built.growth, mass=built.mass))
    return points


@dataclass(frozen=True)
class ConcentrationReport:
    """Finite-length concentration of the posterior surprisal rate.

    For each tested length t, ``band_fractions`` holds the empirical
    probability that ``-(1/t) log2 P(x|z)`` falls strictly within epsilon of
    ``h_ref``; ``onset_length`` is the smallest tested t whose fraction
    reaches ``1 - delta`` (an empirical stand-in for an existence threshold,
    not an estimate of it).
    """

    lengths: tuple[int, ...]
    sample_counts: tuple[int, ...]
    band_fractions: tuple[float, ...]
    means: tuple[float, ...]
    variances: tuple[float, ...]
    onset_length: int | None
    epsilon: float
    delta: float
    h_ref: float

    def as_dict(self) -> dict:
        rows = [
            {
                "t": t,
                "samples": count,
                "band_fraction": frac,
                "mean": mean,
                "variance": var,
            }
            for t, count, frac, mean, var in zip(
                self.lengths,
                self.sample_counts,
                self.band_fractions,
                self.means,
                self.variances,
            )
        ]
        return {
            "epsilon": self.epsilon,
            "delta": self.delta,
            "h_ref": self.h_ref,
            "onset_length": self.onset_length,
            "rows": rows,
        }


def concentration_experiment(
    xm: SourceModel,
    ym: SourceModel,
    spec: CipherSpec,
    t_list,
    samples: int,
    epsilon: float,
    delta: float,
    seed: int,
    *,
    h_ref: float | None = None,
    bracket_order: int = 10,
    cap: int = DEFAULT_WORD_CAP,
    state_cap: int = DEFAULT_STATE_CAP,
    workers: int = 1,
) -> ConcentrationReport:
    """Monte Carlo check that the posterior surprisal rate concentrates.

    Draws ``samples`` independent (plaintext, key) pairs per length, computes
    ``W = -(1/t) (log2 P_X(x) + log2 P_Y(y) - log2 P(z))`` with the marginal
    ``log2 P(z)`` from the forward recursion (so lengths up to 10^4 stay
    cheap), and reports the fraction landing strictly inside the epsilon band
    around ``h_ref``.  Per-sample seeds derive from
    ``(seed, t, sample_index, stream)``; results are independent of batching
    and worker count.
    """
    if epsilon <= 0.0 or not 0.0 < delta < 1.0:
        raise ValueError("need epsilon > 0 and 0 < delta < 1")
    if samples < 1:
        raise ValueError("need at least one sample per length")
    if spec.key_table is None:
        raise UnsupportedCipherError(
            "the surprisal statistic needs a key-recoverable cipher"
        )
    if h_ref is None:
        h_ref = hxz_bracket(
            xm, ym, spec, bracket_order, cap=cap, state_cap=state_cap, workers=workers
        ).midpoint
    chain = _ProductChain(xm, ym, spec, state_cap)

    lengths: list[int] = [int(t) for t in t_list]
    fractions: list[float] = []
    means: list[float] = []
    variances: list[float] = []
    for t in lengths:
        chunks = [
            (start, min(start + _SAMPLE_CHUNK, samples))
            for start in range(0, samples, _SAMPLE_CHUNK)
        ]

        def run(bounds: tuple[int, int]) -> np.ndarray:
            start, stop = bounds
            width = stop - start
            ux = np.empty((width, t + 1))
            uy = np.empty((width, t + 1))
            for row, index in enumerate(range(start, stop)):
                ux[row] = np.random.default_rng(
                    np.random.SeedSequence((seed, t, index, 0))
                ).random(t + 1)
                uy[row] = np.random.default_rng(
                    np.random.SeedSequence((seed, t, index, 1))
                ).random(t + 1)
            x_words, log_px = _walk_batch(xm, ux)
            y_words, log_py = _walk_batch(ym, uy)
            z_words = spec.coder[x_words, y_words]
            log_pz = chain.forward_log2(z_words)
            return -(log_px + log_py - log_pz) / t

        stats = np.concatenate(_map_ordered(run, chunks, workers))
        fractions.append(float(np.mean(np.abs(stats - h_ref) < epsilon)))
        means.append(float(stats.mean()))
        variances.append(float(stats.var()))

    onset = next(
        (t for t, frac in zip(lengths, fractions) if frac >= 1.0 - delta), None
    )
    return ConcentrationReport(
        lengths=tuple(lengths),
        sample_counts=tuple(samples for _ in lengths),
        band_fractions=tuple(fractions),
        means=tuple(means),
        variances=tuple(variances),
        onset_length=onset,
        epsilon=float(epsilon),
        delta=float(delta),
        h_ref=float(h_ref),
    )


@dataclass(frozen=True)
class SecrecyReport:
    """Entropy rates, redundancies, and certified equivocation bounds."""

    h_x: float
    h_y: float
    r_x: float
    r_y: float
    bracket: EntropyBracket
    bound_corollary: float
    bound_forms: tuple[float, float, float]
    growth_series: tuple[GrowthPoint, ...] = ()
    tau: float | None = None

    def as_dict(self) -> dict:
        out = {
            "h_x": self.h_x,
            "h_y": self.h_y,
            "r_x": self.r_x,
            "r_y": self.r_y,
            "h_xz_lower": self.bracket.lower,
            "h_xz_upper": self.bracket.upper,
            "bracket_order": self.bracket.order_used,
            "bound_corollary": self.bound_corollary,
            "bound_hx_minus_ry": self.bound_forms[0],
            "bound_hy_minus_rx": self.bound_forms[1],
            "bound_logn_minus_redundancy": self.bound_forms[2],
        }
        if self.tau is not None:
            out["tau"] = self.tau
        if self.growth_series:
            out["growth_series"] = [p.as_dict() for p in self.growth_series]
        return out


def certify_bounds(
    xm: SourceModel,
    ym: SourceModel,
    spec: CipherSpec,
    m: int,
    *,
    cap: int = DEFAULT_WORD_CAP,
    state_cap: int = DEFAULT_STATE_CAP,
    workers: int = 1,
) -> SecrecyReport:
    """Compute and certify the closed-form equivocation bounds at order m.

    Raises CertificationError if the three redundancy forms of the bound
    disagree beyond 1e-10 or the bracket lower end undercuts the bound by
    more than 1e-9; both would indicate a numerical defect, never a property
    of the models.
    """
    log_n = float(np.log2(spec.alphabet_size))
    h_x, h_y = xm.entropy_rate(), ym.entropy_rate()
    r_x, r_y = xm.redundancy(), ym.redundancy()
    bracket = hxz_bracket(
        xm, ym, spec, m, cap=cap, state_cap=state_cap, workers=workers
    )
    bound = h_x + h_y - log_n
    forms = (h_x - r_y, h_y - r_x, log_n - (r_x + r_y))
    for value in forms:
        if abs(value - bound) > 1e-10:
            raise CertificationError(
                f"redundancy form {value!r} deviates from bound {bound!r}"
            )
    if bracket.lower < bound - 1e-9:
        raise CertificationError(
            f"bracket lower {bracket.lower!r} undercuts corollary bound {bound!r}"
        )
    return SecrecyReport(
        h_x=h_x,
        h_y=h_y,
        r_x=r_x,
        r_y=r_y,
        bracket=bracket,
        bound_corollary=bound,
        bound_forms=forms,
    )


def robustness_sweep(
    xm: SourceModel,
    spec: CipherSpec,
    taus,
    m: int,
    *,
    t_list=None,
    epsilon: float = 0.05,
    seed: int | None = None,
    member_cap: int = DEFAULT_MEMBER_CAP,
    cap: int = DEFAULT_WORD_CAP,
    state_cap: int = DEFAULT_STATE_CAP,
    workers: int = 1,
) -> list[SecrecyReport]:
    """Certified bounds for key models ``P(0) = 0.5 - tau, P(1) = 0.5 + tau``.

    At tau = 0 the key is the exact one-time pad and the report collapses to
    ``h(X|Z) = h(X)`` with zero key redundancy.  With ``t_list`` given (and a
    seed for sampling), each report also carries a typical-set growth series.
    """
    if spec.alphabet_size != 2 or xm.alphabet_size != 2:
        raise ValueError("the bias sweep is defined for the binary alphabet")
    if t_list is not None and seed is None:
        raise ValueError("growth series sampling needs a seed")
    reports = []
    for tau in taus:
        tau = float(tau)
        if not 0.0 <= tau < 0.5:
            raise ValueError(f"tau {tau!r} outside [0, 0.5)")
        ym = make_bernoulli((0.5 - tau, 0.5 + tau))
        base = certify_bounds(
            xm, ym, spec, m, cap=cap, state_cap=state_cap, workers=workers
        )
        series: tuple[GrowthPoint, ...] = ()
        if t_list is not None:
            series = tuple(
                typical_set_growth(
                    xm, ym, spec, t_list, epsilon, seed,
                    h_ref=base.bracket.midpoint, member_cap=member_cap,
                    cap=cap, state_cap=state_cap, workers=workers,
                )
            )
        reports.append(
            SecrecyReport(
                h_x=base.h_x,
                h_y=base.h_y,
                r_x=base.r_x,
                r_y=base.r_y,
                bracket=base.bracket,
                bound_corollary=base.bound_corollary,
                bound_forms=base.bound_forms,
                growth_series=series,
                tau=tau,
            )
        )
    return reports
