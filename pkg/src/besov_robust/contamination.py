"""Contaminated sampling and indistinguishable adversarial density pairs.

The pair constructors build two truths (p, p~) and two contaminators (g, g~)
whose Huber mixtures coincide exactly: (1-eps) p + eps g = (1-eps) p~ + eps g~.
Data drawn from the common mixture carries no information about which truth
produced it, so any estimator must pay at least half the separation between
the truths against one of them. Both constructions perturb the uniform base
with a single daughter wavelet, which keeps every membership and mass check
closed-form, and for the Haar family the contaminators are realized exactly
as dyadic piecewise-constant densities.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.stats import ks_2samp

from .besov import BesovParams, besov_norm
from .coefficients import (
    CoefficientTree,
    PiecewiseConstant,
    SpikePerturbation,
    exact_coeffs,
    tree_axpy,
    uniform_density,
)
from .coefficients import sample_huber as _mix_samples
from .errors import BallViolation, InfeasibleEpsilon, NotSupBounded
from .wavelets import WaveletFamily, WaveletIndex, eval_wavelet

MODES = ("structured", "unstructured", "adversarial-spike", "lecam-pair")


def grid_sup(model, points_budget: int = 32768) -> float:
    """Max of the pdf over a uniform midpoint grid with about the given size."""
    d = model.dim
    per_axis = max(2, int(round(points_budget ** (1.0 / d))))
    axis = (np.arange(per_axis) + 0.5) / per_axis
    mesh = np.meshgrid(*([axis] * d), indexing="ij")
    pts = np.column_stack([m.ravel() for m in mesh])
    return float(np.max(model.pdf(pts)))


@dataclass(frozen=True)
class ContaminationSpec:
    """How the data is contaminated.

    "structured" and "unstructured" carry an explicit contaminating density
    `g`; structured additionally certifies the sup-norm budget M against a
    grid check. The two pair modes carry ball parameters instead and are
    realized through `adversarial_spike_pair` / `lecam_structured_pair`.
    """

    eps: float
    mode: str = "unstructured"
    g: object = None
    M: Optional[float] = None
    gen: Optional[BesovParams] = None
    disc: Optional[BesovParams] = None
    idx: Optional[WaveletIndex] = None
    c: Optional[float] = None

    def __post_init__(self):
        if not (0.0 <= self.eps < 1.0):
            raise ValueError("contamination proportion must lie in [0, 1)")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if self.mode in ("structured", "unstructured") and self.g is None:
            raise ValueError(f"{self.mode} contamination needs an explicit density g")
        if self.mode == "structured":
            if self.M is None or self.M <= 0.0:
                raise ValueError("structured contamination needs a sup-norm budget M > 0")
            seen = grid_sup(self.g)
            if seen > self.M * (1.0 + 1e-9):
                raise NotSupBounded(
                    f"contaminator reaches {seen:.6g} on the check grid, over the budget {self.M}"
                )
        if self.mode == "adversarial-spike" and (self.gen is None or self.disc is None):
            raise ValueError("the spike pair needs generator and discriminator parameters")
        if self.mode == "lecam-pair" and (self.gen is None or self.idx is None):
            raise ValueError("the two-point pair needs generator parameters and an index")


def sample_huber(p, spec: ContaminationSpec, n: int, seed) -> np.ndarray:
    """Draw n points from (1-eps) p + eps g for an explicit-g spec."""
    if spec.mode not in ("structured", "unstructured"):
        raise ValueError(
            "sampling needs an explicit contaminator; build the pair first for "
            f"mode {spec.mode!r} and sample its mixture"
        )
    return _mix_samples(p, spec.g, spec.eps, n, seed)


def adversarial_spike_pair(
    gen: BesovParams, disc: BesovParams, eps: float, dim: int, family: WaveletFamily
):
    """Two truths a level-j daughter apart, with contaminators absorbing the gap.

    The level is the smallest j with 2^{-j(sigma_g + D - D/p_g)} <= eps, which
    makes the transferred mass ||h||_1 = ((1-eps)/eps) c_g ||psi||_1 at most 1.
    Returns (p, p_tilde, g, g_tilde, predicted_separation) where the
    separation is the exact IPM between the truths: L_d * c_g * 2^{-j sigma_d'}.
    """
    if not family.is_haar:
        raise ValueError("exact flat realizations of the pair need the Haar family")
    dpg = 0.0 if gen.p == math.inf else dim / gen.p
    if gen.sigma < dpg:
        raise ValueError(f"the spike construction needs sigma_g >= D/p_g, got {gen.sigma} < {dpg}")
    if eps <= 0.0:
        raise InfeasibleEpsilon("the construction needs a positive contamination budget")
    margin = min(1.0, gen.L - 1.0)
    if margin <= 0.0:
        raise BallViolation("the generator ball must have radius above 1 to fit the uniform base")
    denom = gen.sigma + dim - dpg
    j = max(0, math.ceil(-math.log2(eps) / denom - 1e-12))
    sig_g = gen.sigma_prime(dim)
    c_g = margin * min(2.0 ** (-dim * j / 2.0), 2.0 ** (-j * sig_g))
    idx = WaveletIndex(j, (0,) * dim, (1,) * dim)

    base = uniform_density(dim)
    p_tilde = SpikePerturbation(base, family, idx, c_g)
    tree = CoefficientTree(family, dim, alpha=1.0)
    tree.set(idx, c_g)
    if besov_norm(tree, gen) > gen.L * (1.0 + 1e-12):
        raise BallViolation("perturbed truth left the generator ball")

    h_amp = (1.0 - eps) / eps * c_g
    l1 = h_amp * 2.0 ** (-dim * j / 2.0)
    if l1 > 2.0 + 1e-12:
        raise InfeasibleEpsilon(
            f"the contaminators would need L1 mass {l1:.3g} > 2 at level {j}"
        )
    s = j + 1
    axis = (np.arange(2**s) + 0.5) / 2**s
    mesh = np.meshgrid(*([axis] * dim), indexing="ij")
    pts = np.column_stack([m.ravel() for m in mesh])
    h_vals = h_amp * eval_wavelet(family, idx, pts)
    slack = 1.0 - l1 / 2.0
    shape = (2**s,) * dim
    g = PiecewiseConstant((np.maximum(h_vals, 0.0) + slack).reshape(shape), s)
    g_tilde = PiecewiseConstant((np.maximum(-h_vals, 0.0) + slack).reshape(shape), s)

    c_d = 2.0 ** (-j * disc.sigma_prime(dim))
    predicted = disc.L * c_g * c_d
    return base, p_tilde, g, g_tilde, predicted


def lecam_structured_pair(
    gen: BesovParams, eps: float, idx: WaveletIndex, family: WaveletFamily
):
    """A two-point pair whose truths differ by eps times a fixed daughter.

    p is uniform and p~ = p + eps c psi; the contaminators g = p + (1-eps) c psi
    and g~ = p make the mixtures agree identically. The separation is linear
    in eps by construction, and g stays bounded: ||g||_inf <= 2.
    """
    if not (0.0 < eps < 1.0):
        raise ValueError("the two-point pair needs eps in (0, 1)")
    dim = len(idx.k)
    sup = 2.0 ** (dim * idx.j / 2.0)
    for ei in idx.e:
        sup *= family.psi_sup if ei else family.phi_sup
    room = (gen.L - 1.0) * 2.0 ** (-idx.j * gen.sigma_prime(dim))
    c = min(1.0 / sup, room)
    if c <= 0.0:
        raise BallViolation("the generator ball must have radius above 1 to fit the uniform base")
    base = uniform_density(dim)
    p_tilde = SpikePerturbation(base, family, idx, eps * c)
    g = SpikePerturbation(base, family, idx, (1.0 - eps) * c)

    tree = CoefficientTree(family, dim, alpha=1.0)
    tree.set(idx, eps * c)
    if besov_norm(tree, gen) > gen.L * (1.0 + 1e-12):
        raise BallViolation("perturbed truth left the generator ball")
    return base, p_tilde, g, base


@dataclass(frozen=True)
class IndistinguishabilityReport:
    """Outcome of the empirical same-law check between two mixtures."""

    n: int
    ks_statistic: float
    p_value: float
    ks_passed: bool
    tree_difference: Optional[float]
    passed: bool


def verify_indistinguishable(
    pair_a, pair_b, eps: float, n: int, seed, family: WaveletFamily | None = None,
    j_max: int | None = None, alpha: float = 0.01,
) -> IndistinguishabilityReport:
    """Two-sample KS test between draws of the two mixtures, axiswise.

    `pair_a` and `pair_b` are (truth, contaminator) tuples. When a family and
    level are given, the exact coefficient trees of the two mixtures are also
    compared; the reported tree difference is the largest coefficient gap.
    """
    pa, ga = pair_a
    pb, gb = pair_b
    kid_a, kid_b = np.random.SeedSequence(seed).spawn(2)
    xa = _mix_samples(pa, ga, eps, n, np.random.default_rng(kid_a))
    xb = _mix_samples(pb, gb, eps, n, np.random.default_rng(kid_b))
    stat, pval = 0.0, 1.0
    for axis in range(pa.dim):
        r = ks_2samp(xa[:, axis], xb[:, axis])
        if r.statistic > stat:
            stat, pval = float(r.statistic), float(r.pvalue)
    ks_passed = pval > alpha / pa.dim
    tree_diff = None
    if family is not None:
        top = j_max if j_max is not None else 4

        def mixture_tree(p_model, g_model):
            tp = exact_coeffs(p_model, family, top)
            tg = exact_coeffs(g_model, family, top)
            return tree_axpy(eps, tg, tree_axpy(-eps, tp, tp))

        d = tree_axpy(-1.0, mixture_tree(pb, gb), mixture_tree(pa, ga))
        tree_diff = max([abs(d.alpha)] + [abs(v) for _, v in d.items()])
    passed = ks_passed and (tree_diff is None or tree_diff < 1e-12)
    return IndistinguishabilityReport(n, stat, pval, ks_passed, tree_diff, passed)
