"""Closed-form fidelity, latency, and success-probability models.

Single source of truth for the Werner-pair swap/purification algebra, the
GHZ purification case analysis, and the decoherence-aware pumping update.
All functions are pure and evaluated in double precision; grid flooring is
applied by callers, never here.
"""

import math
from dataclasses import dataclass

from .errors import DomainError
from .netmodel import WERNER_FLOOR


@dataclass(frozen=True)
class PurifyOutcome:
    """Fidelity and success probability after a pumping step."""

    fidelity: float
    success_prob: float


@dataclass(frozen=True)
class GhzPurifyOutcome:
    """Result of purifying an n-GHZ target with an m-GHZ sacrifice.

    ``case_probs`` holds (P1, P2, P3): correct phase, flipped phase, and
    non-GHZ leakage, conditioned on all measurement outcomes reading 0.
    """

    fidelity: float
    success_prob: float
    case_probs: tuple


def _check_werner(f, name="fidelity"):
    if not (WERNER_FLOOR < f <= 1.0):
        raise DomainError(f"{name}={f} outside (0.25, 1]")


def swap_fidelity(f_l, f_r):
    """Fidelity of the pair produced by swapping two Werner pairs."""
    _check_werner(f_l, "f_l")
    _check_werner(f_r, "f_r")
    return 0.25 * (1.0 + (4.0 * f_l - 1.0) * (4.0 * f_r - 1.0) / 3.0)


def swap_latency(l_l, l_r, params):
    """Expected latency of a swap over children with latencies l_l, l_r.

    The 3/2 factor is the mean of the max of two exponentials with similar
    means; the swap and classical-communication latencies are added before
    dividing by the swap success probability.
    """
    if l_l <= 0 or l_r <= 0:
        raise DomainError("child latencies must be positive")
    return (1.5 * max(l_l, l_r) + params.t_s + params.t_c) / params.p_s


def ep_purify(f_t, f_s):
    """One purification of target fidelity f_t by sacrificial fidelity f_s."""
    _check_werner(f_t, "f_t")
    _check_werner(f_s, "f_s")
    et = (1.0 - f_t) / 3.0
    es = (1.0 - f_s) / 3.0
    p = f_t * f_s + f_t * es + et * f_s + 5.0 * et * es
    f = (f_t * f_s + et * es) / p
    return PurifyOutcome(f, p)


def iterated_purify(f_s, i):
    """Pumping with identical sacrificial copies of fidelity f_s.

    Returns outcomes for steps 0..i; element j holds the target fidelity
    after j steps and the success probability of the j-th step (step 0 is
    the untouched state with probability 1).
    """
    if not (0.5 < f_s <= 1.0):
        raise DomainError(f"pumping requires f_s in (0.5, 1], got {f_s}")
    if i < 0:
        raise DomainError("i must be >= 0")
    out = [PurifyOutcome(f_s, 1.0)]
    for _ in range(i):
        step = ep_purify(out[-1].fidelity, f_s)
        out.append(step)
    return out


def iterated_purify_latency(l, f, i, params):
    """Expected latency of i pumping steps over a producer with latency l.

    Recursion: L_0 = l, L_i = (L_{i-1} + l + t_p + t_c) / rho_{i-1}, where
    rho_j is the success probability of the j-th pumping step at sacrificial
    fidelity f (rho_0 = 1).
    """
    if l <= 0:
        raise DomainError("producer latency must be positive")
    if not 1 <= i <= params.i_max:
        raise DomainError(f"i={i} outside 1..{params.i_max}")
    steps = iterated_purify(f, i - 1)
    lat = l
    for j in range(1, i + 1):
        lat = (lat + l + params.t_p + params.t_c) / steps[j - 1].success_prob
    return lat


def ghz_purify(n, m, f_t, f_s):
    """Purify an n-GHZ target (fidelity f_t) with an m-GHZ sacrifice (f_s).

    The procedure succeeds when every sacrificial measurement reads 0; the
    three retained-outcome cases give the success probability and expected
    fidelity.  At n = m = 2 this reduces to the two-qubit formula of
    :func:`ep_purify` in the homogeneous case f_t = f_s.
    """
    if m < 2 or m > n:
        raise DomainError(f"need 2 <= m <= n, got n={n}, m={m}")
    if not (0.0 < f_t <= 1.0) or not (0.0 < f_s <= 1.0):
        raise DomainError("fidelities must lie in (0, 1]")
    dn = float(2**n - 1)
    dm = float(2**m - 1)
    p1 = f_t * f_s + (1.0 - f_t) * (1.0 - f_s) / (dn * dm)
    p2 = f_t * (1.0 - f_s) / dm + f_s * (1.0 - f_t) / dn
    p3 = (2.0 ** (n + 1) - 4.0) * (1.0 - f_t) * (1.0 - f_s) / (dn * dm)
    p = p1 + p2 + p3
    return GhzPurifyOutcome(p1 / p, p, (p1, p2, p3))


def decoherent_purify_step(r, f, gamma):
    """Fidelity after waiting one generation period 1/r under decoherence
    rate gamma."""
    if r <= 0:
        raise DomainError("rate must be positive")
    if gamma < 0:
        raise DomainError("gamma must be >= 0")
    return 0.5 * (1.0 + (2.0 * f - 1.0) * math.exp(-4.0 * gamma / r))


def decoherent_pumping_sequence(r_1, f_1, gamma, p_p, i_max, rate_grid=None):
    """Rate/fidelity trajectory of pumping when the target decoheres while
    waiting for each sacrificial copy.

    Element 1 is the untouched (r_1, f_1).  Element i+1 carries rate
    ``p_p**(i-1) / i * r_1`` and the fidelity obtained by combining f_1 with
    the decohered fidelity of element i.  ``p_p`` may be a constant or a
    callable ``(f_t, f_s) -> probability`` evaluated once at (f_1, f_1).
    When ``rate_grid`` is given, rates are snapped up to the next grid value
    (conservative resource accounting for this operation only).
    """
    if i_max < 1:
        raise DomainError("i_max must be >= 1")
    prob = p_p(f_1, f_1) if callable(p_p) else float(p_p)
    if not (0.0 < prob <= 1.0):
        raise DomainError(f"p_p={prob} outside (0, 1]")

    def snap(rate):
        if rate_grid is None:
            return rate
        snapped = rate_grid.ceil(rate)
        return rate if snapped is None else snapped

    seq = [(snap(r_1), f_1)]
    for i in range(1, i_max):
        r_i, f_i = seq[-1]
        f_prime = decoherent_purify_step(r_i, f_i, gamma)
        f_next = f_1 * f_prime / (f_1 * f_prime + (1.0 - f_1) * (1.0 - f_prime))
        r_next = prob ** (i - 1) / i * r_1
        seq.append((snap(r_next), f_next))
    return seq
