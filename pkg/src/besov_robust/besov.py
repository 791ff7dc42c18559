"""Sequence-space Besov norms, dual-metric IPMs, and ball utilities.

Everything here operates on `CoefficientTree` objects, so norms and metrics
are computed exactly in coefficient space. The integral probability metric
over a Besov ball of discriminators has a closed dual form there: with
conjugate exponents it is the weighted dual sequence norm of the coefficient
difference, and the supremum is attained by an explicitly constructible
witness function (`ipm_witness`).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .coefficients import CoefficientTree, tree_axpy
from .errors import NotSupBounded, RegimeMismatch, ZeroDelta
from .wavelets import WaveletFamily, WaveletIndex

_ROLES = ("generator", "discriminator", "contamination")


def conjugate(p: float) -> float:
    """Holder conjugate with the conventions 1' = inf and inf' = 1."""
    if p == 1.0:
        return math.inf
    if p == math.inf:
        return 1.0
    if p <= 1.0:
        raise ValueError(f"exponent {p} outside [1, inf]")
    return p / (p - 1.0)


@dataclass(frozen=True)
class BesovParams:
    """Smoothness ball parameters (sigma, p, q, radius L) plus a role tag.

    The role records which side of the problem the ball describes: the class
    the true density lives in ("generator"), the function class defining the
    loss ("discriminator"), or the class constraining the contaminator.
    """

    sigma: float
    p: float
    q: float
    L: float = 1.0
    role: str = "generator"

    def __post_init__(self):
        if self.sigma < 0.0:
            raise ValueError("smoothness must be nonnegative")
        for name, v in (("p", self.p), ("q", self.q)):
            if not (1.0 <= v):
                raise ValueError(f"{name} must lie in [1, inf], got {v}")
        if self.L <= 0.0:
            raise ValueError("ball radius must be positive")
        if self.role not in _ROLES:
            raise ValueError(f"role must be one of {_ROLES}")

    def sigma_prime(self, dim: int) -> float:
        """The level-weight exponent sigma + D/2 - D/p."""
        return self.sigma + dim / 2.0 - (0.0 if self.p == math.inf else dim / self.p)


# named discriminator balls for common losses; radius 1 throughout
LOSS_PRESETS: dict[str, BesovParams] = {
    "tv": BesovParams(0.0, math.inf, math.inf, 1.0, "discriminator"),
    "wasserstein1": BesovParams(1.0, math.inf, math.inf, 1.0, "discriminator"),
    "l2": BesovParams(0.0, 2.0, 2.0, 1.0, "discriminator"),
    "ks": BesovParams(1.0, 1.0, math.inf, 1.0, "discriminator"),
}


def loss_params(name: str) -> BesovParams:
    try:
        return LOSS_PRESETS[name]
    except KeyError:
        raise ValueError(f"unknown loss {name!r}; choose from {sorted(LOSS_PRESETS)}") from None


def _lp(values: np.ndarray, p: float) -> float:
    if values.size == 0:
        return 0.0
    a = np.abs(values)
    if p == math.inf:
        return float(a.max())
    if p == 1.0:
        return float(a.sum())
    if p == 2.0:
        return float(math.sqrt(np.sum(a * a)))
    return float(np.sum(a**p) ** (1.0 / p))


def besov_norm(tree: CoefficientTree, params: BesovParams) -> float:
    """|alpha| + l^q norm over levels of 2^{j(sigma + D/2 - D/p)} ||beta_j||_p."""
    sp = params.sigma_prime(tree.dim)
    terms = np.array(
        [2.0 ** (j * sp) * _lp(tree.level_values(j), params.p) for j in tree.levels()]
    )
    return abs(tree.alpha) + _lp(terms, params.q)


def in_ball(tree: CoefficientTree, params: BesovParams, slack: float = 1e-9) -> bool:
    """Whether the tree lies in the ball of radius L, up to relative slack."""
    return besov_norm(tree, params) <= params.L * (1.0 + slack)


def pairing(f: CoefficientTree, g: CoefficientTree) -> float:
    """The L2 pairing <f, g> computed in coefficient space."""
    f.check_compatible(g)
    total = f.alpha * g.alpha
    a, b = (f, g) if f.n_coefficients <= g.n_coefficients else (g, f)
    for idx, v in a.items():
        total += v * b.get(idx)
    return total


def _dual_parts(delta: CoefficientTree, disc: BesovParams) -> tuple[float, float, np.ndarray]:
    """(alpha part, beta part, per-level dual terms) of the dual norm of delta."""
    pd = conjugate(disc.p)
    qd = conjugate(disc.q)
    sp = disc.sigma_prime(delta.dim)
    levels = delta.levels()
    u = np.array([2.0 ** (-j * sp) * _lp(delta.level_values(j), pd) for j in levels])
    return abs(delta.alpha), _lp(u, qd), u


def besov_ipm(t1: CoefficientTree, t2: CoefficientTree, disc: BesovParams) -> float:
    """Exact IPM over the discriminator ball, between level-limited projections.

    Equals L * max(|delta alpha|, || {2^{-j sigma_d'} ||delta beta_j||_{p'}}_j ||_{q'})
    with delta the coefficient difference and (p', q') the conjugate exponents.
    Symmetric, zero iff the trees agree on all stored levels.
    """
    delta = tree_axpy(-1.0, t2, t1)
    a_part, b_part, _ = _dual_parts(delta, disc)
    return disc.L * max(a_part, b_part)


def ipm_witness(delta: CoefficientTree, disc: BesovParams) -> CoefficientTree:
    """The discriminator attaining the IPM supremum against `delta`.

    The witness has Besov norm exactly L and pairing with delta exactly equal
    to the IPM. Finite exponents align coefficients with dual-exponent powers
    of |delta|; infinite exponents concentrate on the argmax; unit exponents
    spread a sign pattern.

    Raises ZeroDelta when delta has no stored coefficients and zero alpha.
    """
    a_part, b_part, u = _dual_parts(delta, disc)
    if a_part == 0.0 and b_part == 0.0:
        raise ZeroDelta("the coefficient difference is identically zero")
    out = CoefficientTree(delta.family, delta.dim)
    L = disc.L
    if a_part >= b_part:
        out.alpha = L * math.copysign(1.0, delta.alpha)
        return out

    levels = delta.levels()
    q, qd = disc.q, conjugate(disc.q)
    # level budgets s_j with ||s||_q = L, maximizing sum s_j u_j = L ||u||_{q'}
    if qd == math.inf:
        s = np.zeros(len(levels))
        s[int(np.argmax(u))] = L
    elif qd == 1.0:
        s = np.where(u > 0.0, L, 0.0)
    else:
        s = L * (u / b_part) ** (qd - 1.0)

    p, pd = disc.p, conjugate(disc.p)
    sp = disc.sigma_prime(delta.dim)
    for j, budget in zip(levels, s):
        if budget == 0.0:
            continue
        target = budget * 2.0 ** (-j * sp)  # the p-norm the level must carry
        entries = sorted(delta.beta[j].items())
        vals = np.array([v for _, v in entries])
        if pd == math.inf:
            i_star = int(np.argmax(np.abs(vals)))
            ke, v = entries[i_star]
            out.set(WaveletIndex(j, ke[0], ke[1]), target * math.copysign(1.0, v))
            continue
        norm_pd = _lp(vals, pd)
        if pd == 1.0:
            shape = np.sign(vals)
        else:
            shape = np.sign(vals) * (np.abs(vals) / norm_pd) ** (pd - 1.0)
        for (ke, _), f in zip(entries, target * shape):
            if f != 0.0:
                out.set(WaveletIndex(j, ke[0], ke[1]), float(f))
    return out


def sup_norm_bound(params: BesovParams, family: WaveletFamily, dim: int = 1) -> float:
    """A uniform bound on the sup-norm of every function in the ball.

    Finite only when sigma > D/p: the levelwise sup of the synthesized series
    is controlled by kappa * L * (1 - 2^{(D/p - sigma) q'})^{-1/q'}, where
    kappa collects the father term and the overlap constants of the family
    (the periodized absolute translate sums, tensorized over axes).
    """
    dp = 0.0 if params.p == math.inf else dim / params.p
    if params.sigma <= dp:
        raise NotSupBounded(f"sup bound needs sigma > D/p, got sigma={params.sigma}, D/p={dp}")
    qd = conjugate(params.q)
    if qd == math.inf:
        series = 1.0
    else:
        series = (1.0 - 2.0 ** ((dp - params.sigma) * qd)) ** (-1.0 / qd)
    overlap = (family.pb_phi + family.pb_psi) ** dim
    kappa = max(4.0 * family.psi_sup, overlap)
    return kappa * params.L * series


def ipm_nesting_check(
    t1: CoefficientTree, t2: CoefficientTree, disc: BesovParams, p_g: float
) -> tuple[float, float]:
    """IPM under the given ball and under the ball with p replaced by p_g'.

    When the dual exponent p' does not exceed p_g, the second metric dominates
    the first (exactly so in one dimension), which is the reduction that sends
    dense-regime losses to a class matched to the generator. Returns the pair
    (original, dominating); raises RegimeMismatch when p' > p_g.
    """
    pd = conjugate(disc.p)
    if pd > p_g:
        raise RegimeMismatch(f"nesting needs p' <= p_g, got p'={pd}, p_g={p_g}")
    wider = replace(disc, p=conjugate(p_g))
    return besov_ipm(t1, t2, disc), besov_ipm(t1, t2, wider)
