"""
Statistics Tools

Exact independence-model quantities for an episode's minimal windows:
- pgreedy: probability that a random sequence drives greedy into a state set
- moments: closed-form Σ_L f(L) pgreedy(x, Y, L) for f(L-1) = c f(L) + h(L)
- episode_moments: p, v, q, E[Z1^2], w
- cross-moments f(P, Q, R) coupling overlapping minimal windows
- assemble / score / p_value: covariance, mean, variance and the Z-score
"""

import math
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
import structlog
from scipy import sparse
from scipy.sparse.linalg import SuperLU, splu
from scipy.special import erfc

from scripts.errors import ConvergenceError, ParameterError, VarianceError
from scripts.fsm_tools import CrossJoin, Machine, MinimalWindowMachine, build_cross_join
from scripts.schema import EpisodeStatistics
from scripts.seq_tools import ProbabilityModel

log = structlog.get_logger(__name__)

MomentTable = np.ndarray

VARIANCE_TOLERANCE = 1e-9
CROSS_TRIPLES = ((0, 0, 0), (1, 1, 0), (0, 1, 1), (1, 2, 1))


@dataclass(frozen=True)
class Weights:
    """
    Move probabilities of a simple machine: ``stay[x]``, whether ``x`` can move
    at all, and ``step[x, parent]``. Factorisations of the moment system are
    kept per constant c.
    """

    stay: np.ndarray
    moving: np.ndarray
    step: sparse.csr_matrix
    factors: Dict[float, SuperLU] = field(default_factory=dict, repr=False, compare=False)

    def factor(self, c: float) -> SuperLU:
        """
        LU of (c - stay) on the diagonal minus ``step``; rows of states that
        cannot move are pinned to 0.

        Raises:
            ConvergenceError: If c - stay <= 0 at a state that can move.
        """
        lu = self.factors.get(c)
        if lu is None:
            r_denom = c - self.stay
            stuck = np.flatnonzero(self.moving & (r_denom <= 0.0))
            if stuck.size:
                x = int(stuck[0])
                raise ConvergenceError(f"r_denom = {r_denom[x]} at state {x}")
            diag = np.where(self.moving, r_denom, 1.0)
            lu = self.factors[c] = splu((sparse.diags(diag) - self.step).tocsc())
        return lu


def _weights(m: Machine, model: ProbabilityModel) -> Weights:
    """Per-state move probabilities; the wildcard edge takes the residual mass."""
    if not m.is_simple:
        raise ParameterError("probabilities need a simple machine")
    probs = model.probs
    n = len(m)
    stay = np.zeros(n)
    moving = np.zeros(n, dtype=bool)
    rows: List[int] = []
    cols: List[int] = []
    vals: List[float] = []
    for x in range(n):
        explicit_mass = 0.0
        for a, parent in sorted(m.explicit[x].items()):
            if a >= len(probs):
                raise ParameterError(f"machine label {a} is outside the probability model")
            rows.append(x)
            cols.append(parent)
            vals.append(float(probs[a]))
            explicit_mass += float(probs[a])
        residual = max(0.0, 1.0 - explicit_mass)
        if m.wildcard[x] is not None:
            rows.append(x)
            cols.append(m.wildcard[x])
            vals.append(residual)
        else:
            stay[x] = residual
        moving[x] = bool(m.explicit[x]) or m.wildcard[x] is not None
    # duplicate (x, parent) entries are summed
    step = sparse.csr_matrix((vals, (rows, cols)), shape=(n, n))
    return Weights(stay=stay, moving=moving, step=step)


def indicator(n: int, states: Iterable[int]) -> np.ndarray:
    vec = np.zeros(n)
    for x in states:
        vec[x] = 1.0
    return vec


def _check_rho(rho: float) -> None:
    if not 0.0 < rho < 1.0:
        raise ParameterError(f"rho must lie in (0, 1), got {rho}")


# =============================================================================
# PGREEDY AND MOMENTS
# =============================================================================

def pgreedy(m: Machine, x: int, targets: Iterable[int], length: int, model: ProbabilityModel) -> float:
    """
    P(greedy(x, s) in targets) for a random s of ``length`` symbols.

    pgreedy(x, Y, L) = Σ_a p(a) pgreedy(step(x, a), Y, L - 1),
    pgreedy(x, Y, 0) = [x in Y].
    """
    if length < 0:
        raise ParameterError("length must be >= 0")
    weights = _weights(m, model)
    table = indicator(len(m), targets)
    for _ in range(length):
        table = weights.stay * table + weights.step @ table
    return float(table[x])


def moments(
    m: Machine,
    init: Sequence[float],
    hmap: Sequence[float],
    c: float,
    model: ProbabilityModel,
    weights: Optional[Weights] = None,
) -> MomentTable:
    """
    Moment recursion over the machine:

        m(x) = (q init(x) - hmap(x) + Σ_{a, y = step(x, a)} p(a) (m(y) + init(y))) / (c - q)

    with q the probability of staying at x. States that cannot move get 0.
    Every move leaves its state, so the system is triangular in ``m.order``;
    its factorisation is kept on ``weights`` and reused for the same c.

    Raises:
        ConvergenceError: If c - q <= 0 at a state that can move.
    """
    if weights is None:
        weights = _weights(m, model)
    init = np.asarray(init, dtype=np.float64)
    hmap = np.asarray(hmap, dtype=np.float64)
    lu = weights.factor(c)
    rhs = np.where(weights.moving, weights.stay * init - hmap + weights.step @ init, 0.0)
    return lu.solve(rhs)


# =============================================================================
# EPISODE MOMENTS
# =============================================================================

def episode_moments(
    mw: MinimalWindowMachine,
    rho: float,
    model: ProbabilityModel,
    weights: Optional[Weights] = None,
) -> Tuple[float, float, float, float, float]:
    """
    (p, v, q, z2, w) = (E[X1], E[Y1], E[Z1], E[Z1^2], E[Y1 Z1]) read at alpha
    from five moment runs against Omega.
    """
    _check_rho(rho)
    m = mw.machine
    if weights is None:
        weights = _weights(m, model)
    n = len(m)
    at_omega = indicator(n, mw.omega)
    zero = np.zeros(n)

    m_one = moments(m, at_omega, zero, 1.0, model, weights)
    m_len = moments(m, zero, -m_one, 1.0, model, weights)
    m_rho = moments(m, at_omega, zero, 1.0 / rho, model, weights)
    m_rho2 = moments(m, at_omega, zero, 1.0 / rho ** 2, model, weights)
    m_rho_len = moments(m, zero, -m_rho / rho, 1.0 / rho, model, weights)

    a = mw.alpha
    return (
        float(m_one[a]),
        float(m_len[a]),
        float(m_rho[a]),
        float(m_rho2[a]),
        float(m_rho_len[a]),
    )


# =============================================================================
# CROSS-MOMENTS
# =============================================================================

def cross_moment_tables(
    mw: MinimalWindowMachine,
    rho: float,
    big_p: int,
    big_q: int,
    big_r: int,
    model: ProbabilityModel,
    cross: Optional[CrossJoin] = None,
    weights: Optional[Weights] = None,
    cross_weights: Optional[Weights] = None,
) -> Optional[Tuple[MomentTable, MomentTable, MomentTable]]:
    """
    The three moment tables of the cross-moment recursion (None if Θ is empty):
    on MW against Ω, on the cross join seeded at (ω, θ), and on MW seeded at θ.
    """
    _check_rho(rho)
    if not mw.theta:
        return None
    if cross is None:
        cross = build_cross_join(mw)
    m = mw.machine
    n = len(m)
    if weights is None:
        weights = _weights(m, model)

    first = moments(m, indicator(n, mw.omega), np.zeros(n), rho ** -big_p, model, weights)

    seed = np.zeros(len(cross.machine))
    for (z1, z2), sid in cross.index.items():
        if z1 in mw.omega and z2 in mw.theta:
            seed[sid] = first[z2]
    second = moments(cross.machine, seed, np.zeros(len(cross.machine)), rho ** -big_q, model, cross_weights)

    entry = np.zeros(n)
    for theta in mw.theta:
        entry[theta] = second[cross.index[(theta, mw.alpha)]]
    third = moments(m, entry, np.zeros(n), rho ** -big_r, model, weights)
    return first, second, third


def cross_moment_f(
    mw: MinimalWindowMachine,
    rho: float,
    big_p: int,
    big_q: int,
    big_r: int,
    model: ProbabilityModel,
    cross: Optional[CrossJoin] = None,
    weights: Optional[Weights] = None,
    cross_weights: Optional[Weights] = None,
) -> float:
    """
    f(P, Q, R) = E[X1 Σ_{k=2}^{Y1} ρ^(P(k-1) + Q A_k + R(Y_k - Y1)) X_k] with
    A_k = Y1 - k + 1: the coupling between the window starting at 1 and the
    windows starting inside it. Zero when Θ is empty.
    """
    tables = cross_moment_tables(mw, rho, big_p, big_q, big_r, model, cross, weights, cross_weights)
    if tables is None:
        return 0.0
    return float(tables[2][mw.alpha])


def cross_moment_triple_sum(
    mw: MinimalWindowMachine,
    rho: float,
    big_p: int,
    big_q: int,
    big_r: int,
    model: ProbabilityModel,
) -> float:
    """
    Unoptimised form Σ_{β, γ in Θ} m(α, ρ^R, {β}) m(γ, ρ^P, Ω) m((β, α), ρ^Q, Ω × {γ}).
    Quadratic in |Θ| moment runs; used to validate ``cross_moment_f``.
    """
    _check_rho(rho)
    if not mw.theta:
        return 0.0
    cross = build_cross_join(mw)
    m = mw.machine
    n = len(m)
    zero = np.zeros(n)
    cross_zero = np.zeros(len(cross.machine))

    to_omega = moments(m, indicator(n, mw.omega), zero, rho ** -big_p, model)
    total = 0.0
    for beta in sorted(mw.theta):
        reach_beta = moments(m, indicator(n, [beta]), zero, rho ** -big_r, model)[mw.alpha]
        if reach_beta == 0.0:
            continue
        for gamma in sorted(mw.theta):
            targets = [sid for (z1, z2), sid in cross.index.items() if z1 in mw.omega and z2 == gamma]
            if not targets:
                continue
            joint = moments(cross.machine, indicator(len(cross.machine), targets), cross_zero, rho ** -big_q, model)
            total += reach_beta * to_omega[gamma] * joint[cross.index[(beta, mw.alpha)]]
    return float(total)


# =============================================================================
# ASSEMBLY AND SCORE
# =============================================================================

def assemble(stats: EpisodeStatistics) -> EpisodeStatistics:
    """
    Fill D, C, mu and sigma^2 from the moments and the four cross-moments.

    Returns the input unchanged (mu None) when p = 0: the episode is unscorable.

    Raises:
        VarianceError: If sigma^2 is below -1e-9.
    """
    p, q, v, w, z2 = stats.p, stats.q, stats.v, stats.w, stats.z2
    if p <= 0.0:
        return stats

    d22 = stats.f000 - (v - p) * p
    d12 = stats.f110 - (w - q) * p
    d21 = stats.f011 - (v - p) * q
    d11 = stats.f121 - (w - q) * q
    c11 = (z2 - q * q) + 2.0 * d11
    c22 = p * (1.0 - p) + 2.0 * d22
    c12 = (q - p * q) + d12 + d21
    mu = q / p
    sigma2 = (c11 - 2.0 * mu * c12 + mu * mu * c22) / (p * p)

    clamped = False
    if sigma2 < 0.0:
        if sigma2 < -VARIANCE_TOLERANCE:
            raise VarianceError(f"sigma^2 = {sigma2!r} is negative")
        log.warning("stats.sigma_clamped", sigma2=sigma2)
        sigma2 = 0.0
        clamped = True

    return stats.model_copy(update=dict(
        d11=d11, d12=d12, d21=d21, d22=d22,
        c11=c11, c12=c12, c22=c22,
        mu=mu, sigma2=sigma2, sigma_clamped=clamped,
    ))


def compute_statistics(
    mw: MinimalWindowMachine,
    rho: float,
    model: ProbabilityModel,
    cross: Optional[CrossJoin] = None,
) -> EpisodeStatistics:
    """episode_moments + the four cross-moments + assemble."""
    weights = _weights(mw.machine, model)
    p, v, q, z2, w = episode_moments(mw, rho, model, weights)
    f = {triple: 0.0 for triple in CROSS_TRIPLES}
    if mw.theta:
        if cross is None:
            cross = build_cross_join(mw)
        cross_weights = _weights(cross.machine, model)
        f = {
            triple: cross_moment_f(
                mw, rho, *triple, model=model, cross=cross,
                weights=weights, cross_weights=cross_weights,
            )
            for triple in CROSS_TRIPLES
        }
    stats = EpisodeStatistics(
        rho=rho, p=p, v=v, q=q, z2=z2, w=w,
        f000=f[(0, 0, 0)], f110=f[(1, 1, 0)], f011=f[(0, 1, 1)], f121=f[(1, 2, 1)],
    )
    return assemble(stats)


def score(stats: EpisodeStatistics, r: Optional[float], n: int, length: int) -> Optional[float]:
    """
    sqrt(L) (r - mu) / sigma with L the test-sequence length; None when the
    episode is unscorable (no windows, p = 0 or sigma = 0).
    """
    if n == 0 or r is None or stats.mu is None or not stats.sigma2:
        return None
    return math.sqrt(length) * (r - stats.mu) / math.sqrt(stats.sigma2)


def p_value(z: float) -> float:
    """Phi(-z) = erfc(z / sqrt(2)) / 2."""
    return float(0.5 * erfc(z / math.sqrt(2.0)))
