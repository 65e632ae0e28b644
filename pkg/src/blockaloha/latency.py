"""Latency and age analytics over a history of per-block success probabilities.

Implements the closed-form expected peak latency and peak age of the first
input of a successful block, the peak-control-latency distribution between
controllable blocks, the current-block latency contribution under regime
uncertainty, and the two CDF terms consumed by the access-policy cost.

Block 0 is a virtual successful block that anchors the gap variables.  Its
slot statistics are not pinned down by the model, so two conventions are
supported: ``extend`` reuses the first real block's success probability
(p0 = p1, the default), ``boundary`` places a sure success on the final
slot of block 0 (p0 = 1, which makes the gap weights a proper
distribution).  The two give slightly different values for small histories;
both are exact against direct enumeration of their own convention.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .controllability import first_time_controllability, instantaneous_controllability
from .runlength import BlockShape, truncated_geometric_mean
from .spatial import AccessPolicy

__all__ = [
    "BlockHistory",
    "LatencyMetrics",
    "CurrentBlockLatency",
    "DegenerateHistoryError",
    "DegeneratePolicyError",
    "VIRTUAL_BLOCK_MODES",
    "expected_peak_latency",
    "expected_paoi",
    "pcl_pmf",
    "expected_pcl",
    "current_block_latency",
    "cdf_terms",
    "latency_metrics",
]

VIRTUAL_BLOCK_MODES = ("extend", "boundary")


class DegenerateHistoryError(ValueError):
    """Raised when every candidate previous controllable block has probability 0."""


class DegeneratePolicyError(ValueError):
    """Raised when no access regime can produce a successful transmission."""


def _as_prob_seq(seq, name):
    arr = np.asarray(seq, dtype=float)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be a 1-D sequence")
    if arr.size and (arr.min() < 0.0 or arr.max() > 1.0):
        raise ValueError(f"{name} entries must lie in [0, 1]")
    return arr


@dataclass(frozen=True)
class BlockHistory:
    """Per-block series through the current block k (1-based, k = len(p)).

    p[i] is the scalar slot-success probability of block i+1, P_O_tilde[i]
    its instantaneous controllability probability, chi_C[i] the
    post-controllability run probability chi(delta_C * rho) of that block.
    """

    T: int
    p: tuple[float, ...]
    P_O_tilde: tuple[float, ...]
    chi_C: tuple[float, ...]

    def __post_init__(self):
        if self.T < 1:
            raise ValueError(f"T must be >= 1, got {self.T}")
        p = _as_prob_seq(self.p, "p")
        pt = _as_prob_seq(self.P_O_tilde, "P_O_tilde")
        cc = _as_prob_seq(self.chi_C, "chi_C")
        if not (len(p) == len(pt) == len(cc)):
            raise ValueError("history sequences must share one length")
        object.__setattr__(self, "p", tuple(map(float, p)))
        object.__setattr__(self, "P_O_tilde", tuple(map(float, pt)))
        object.__setattr__(self, "chi_C", tuple(map(float, cc)))

    def __len__(self) -> int:
        return len(self.p)

    def extended(self, p: float, P_O_tilde: float, chi_C: float) -> "BlockHistory":
        """History with one more block appended."""
        return BlockHistory(
            self.T,
            self.p + (float(p),),
            self.P_O_tilde + (float(P_O_tilde),),
            self.chi_C + (float(chi_C),),
        )


@dataclass(frozen=True)
class LatencyMetrics:
    """Bundle of the per-block latency outputs.

    theta_pl and theta_pa are in slots, theta_pcl_mean in blocks; the pmf
    covers gaps tau = 1..k.
    """

    theta_pl: float
    theta_pa: float
    theta_pcl_pmf: np.ndarray
    theta_pcl_mean: float
    theta_curr: float


@dataclass(frozen=True)
class CurrentBlockLatency:
    """Regime-averaged current-block latency term and its success normalizer."""

    expected_slots: float
    block_success_prob: float  # P(Z(k) = 1): sum of regime fraction * (1 - q^T)


def _padded_q_powers(hist: BlockHistory, virtual_block: str):
    """(p, q, q^T) arrays indexed 0..k with the virtual block 0 prepended."""
    if virtual_block not in VIRTUAL_BLOCK_MODES:
        raise ValueError(f"virtual_block must be one of {VIRTUAL_BLOCK_MODES}")
    if len(hist) == 0:
        raise ValueError("history must cover at least one block")
    p0 = hist.p[0] if virtual_block == "extend" else 1.0
    p = np.concatenate(([p0], hist.p))
    q = 1.0 - p
    return p, q, q**hist.T


def _suffix_products(qT: np.ndarray, k: int) -> np.ndarray:
    """suffix[m] = prod_{i=m}^{k-1} q_i^T for m = 0..k (factors <= 1, so
    underflow of long products rounds to an exact 0 contribution)."""
    suffix = np.ones(k + 1)
    suffix[:k] = np.multiply.accumulate(qT[k - 1 :: -1])[::-1]
    return suffix


def _gap_weights(qT: np.ndarray, k: int) -> np.ndarray:
    """weights[m] = (1 - q_m^T) prod_{i=m+1}^{k-1} q_i^T for m = 0..k-1.

    weights[k - kappa] is the probability that the most recent successful
    block before k is block k-kappa (sub-stochastic in 'extend' mode, where
    the all-failed event keeps the leftover mass).
    """
    suffix = _suffix_products(qT, k)
    return (1.0 - qT[:k]) * suffix[1 : k + 1]


def _x_term(p_k: float, q_k: float, qT_k: float, T: int) -> float:
    if p_k <= 0.0:
        raise ValueError("current block must have p_k > 0")
    return q_k / p_k - T * qT_k / (1.0 - qT_k)


def expected_peak_latency(hist: BlockHistory, virtual_block: str = "extend") -> float:
    """Expected peak latency of the first input of block k, given Z(k)=1.

    Sum over the gap kappa to the previous successful block of the trailing
    failure run of that block, the T(kappa-1) failed blocks in between, and
    the leading failure run of block k, plus the success slot itself.
    """
    T = hist.T
    k = len(hist)
    p, q, qT = _padded_q_powers(hist, virtual_block)
    x_term = _x_term(p[k], q[k], qT[k], T)
    w = _gap_weights(qT, k)
    kappa = np.arange(k, 0, -1)  # kappa for m = k - kappa = 0..k-1
    # q_m / p_m only matters where the gap weight is nonzero (p_m > 0 there)
    trailing = np.where(w > 0.0, q[:k] / np.where(p[:k] > 0.0, p[:k], 1.0), 0.0)
    s1 = float(np.sum(w * (trailing + T * kappa)))
    s2 = float(np.sum(_suffix_products(qT, k)[:k]))
    return s1 - T * s2 - T + x_term + 1.0


def expected_paoi(hist: BlockHistory, virtual_block: str = "extend") -> float:
    """Expected peak age of information of the first input of block k, given Z(k)=1.

    kappa full blocks of staleness plus the leading failure run of block k
    plus the success slot.
    """
    T = hist.T
    k = len(hist)
    p, q, qT = _padded_q_powers(hist, virtual_block)
    x_term = _x_term(p[k], q[k], qT[k], T)
    w = _gap_weights(qT, k)
    kappa = np.arange(k, 0, -1)
    return T * float(np.sum(kappa * w)) + x_term + 1.0


def _pcl_weights(past_P_tilde, past_chi_C) -> np.ndarray:
    """Unnormalized P(gap = tau) for tau = 1..k at block k = len(past)+1.

    Entry tau-1 is P_tilde[k-tau] * prod_{i=k-tau+1}^{k-1} (1 - chi_C[i]),
    with the virtual block 0 contributing probability 1 at tau = k.
    """
    pt = np.concatenate(([1.0], np.asarray(past_P_tilde, dtype=float)))  # index 0..k-1
    g = 1.0 - np.asarray(past_chi_C, dtype=float)  # failures for blocks 1..k-1
    k = pt.size
    # prod_{i=m+1}^{k-1} g_i for m = 0..k-1
    prods = np.ones(k)
    if k > 1:
        prods[:-1] = np.multiply.accumulate(g[::-1])[::-1]
    weights = pt * prods  # index m = k - tau
    return weights[::-1]  # tau = 1..k


def pcl_pmf(hist: BlockHistory) -> np.ndarray:
    """PMF of the peak control latency at block k = len(hist), over tau = 1..k.

    Only the history strictly before block k enters; the current block's own
    run probability cancels between numerator and normalizer.
    """
    if len(hist) == 0:
        raise ValueError("history must cover at least one block")
    w = _pcl_weights(hist.P_O_tilde[:-1], hist.chi_C[:-1])
    total = w.sum()
    if total <= 0.0:
        raise DegenerateHistoryError(
            "all candidate previous controllable blocks have probability 0"
        )
    return w / total


def expected_pcl(hist: BlockHistory) -> float:
    """Expected number of blocks back to the previous controllable block."""
    pmf = pcl_pmf(hist)
    return float(np.sum(np.arange(1, pmf.size + 1) * pmf))


def _regime_table(policy: AccessPolicy, rho_k: float, P_O_prev: float):
    """Per-regime (fraction, slot success) pairs for (block, pre-slot, post-slot)."""
    pre = 1.0 - P_O_prev
    fractions = np.array(
        [
            pre * policy.delta_B,
            pre * (1.0 - policy.delta_B) * policy.delta_S,
            P_O_prev * policy.delta_C,
        ]
    )
    slot_p = np.array([rho_k, policy.delta_S * rho_k, policy.delta_C * rho_k])
    return fractions, slot_p


def current_block_latency(
    shape: BlockShape, policy: AccessPolicy, rho_k: float, P_O_prev: float
) -> CurrentBlockLatency:
    """Expected leading-failure run of the current block under regime uncertainty.

    Mixes the per-regime truncated-geometric means with posterior regime
    weights proportional to fraction * (1 - q^T); also reports the
    normalizer, the block success probability P(Z(k)=1).
    """
    if not 0.0 <= rho_k <= 1.0:
        raise ValueError(f"rho_k must lie in [0, 1], got {rho_k}")
    if not 0.0 <= P_O_prev <= 1.0:
        raise ValueError(f"P_O_prev must lie in [0, 1], got {P_O_prev}")
    fractions, slot_p = _regime_table(policy, rho_k, P_O_prev)
    success = np.where(slot_p > 0.0, 1.0 - (1.0 - slot_p) ** shape.T, 0.0)
    mass = fractions * success
    total = float(mass.sum())
    if total <= 0.0:
        raise DegeneratePolicyError(
            "no regime can transmit successfully under this policy"
        )
    value = 0.0
    for m, p in zip(mass, slot_p):
        if m > 0.0:
            value += m * truncated_geometric_mean(float(p), shape.T)
    return CurrentBlockLatency(expected_slots=value / total, block_success_prob=total)


def cdf_terms(
    shape: BlockShape,
    policy: AccessPolicy,
    rho_k: float,
    P_O_prev: float,
    hist: BlockHistory | None,
    eta_curr: float,
    eta_pcl: float,
) -> tuple[float, float]:
    """Joint CDF terms of the cost at thresholds (eta_curr slots, eta_pcl blocks).

    ``hist`` covers blocks 1..k-1 before the one being evaluated (None for
    k=1).  The current-block term uses the deterministic-indicator form
    1{theta_curr <= eta} * P(Z(k)=1); the control-latency term is the exact
    gap CDF times the instantaneous controllability probability.
    """
    if eta_curr < 0.0 or eta_pcl < 0.0:
        raise ValueError("thresholds must be >= 0")
    pi_k = first_time_controllability(shape, policy, rho_k)
    p_tilde_k = instantaneous_controllability(P_O_prev, pi_k, shape, policy.delta_C, rho_k)
    try:
        curr = current_block_latency(shape, policy, rho_k, P_O_prev)
        p_curr = float(curr.expected_slots <= eta_curr) * curr.block_success_prob
    except DegeneratePolicyError:
        p_curr = 0.0
    if hist is None:
        past_pt, past_cc = (), ()
    else:
        past_pt, past_cc = hist.P_O_tilde, hist.chi_C
    weights = _pcl_weights(past_pt, past_cc)
    total = weights.sum()
    if total <= 0.0:
        cdf = 0.0
    else:
        n_in = min(len(weights), int(math.floor(eta_pcl)))
        cdf = float(weights[:n_in].sum() / total)
    return p_curr, cdf * p_tilde_k


def latency_metrics(
    shape: BlockShape,
    policy: AccessPolicy,
    rho_k: float,
    P_O_prev: float,
    hist: BlockHistory,
    virtual_block: str = "extend",
) -> LatencyMetrics:
    """All latency outputs of the current block (``hist`` runs through it)."""
    curr = current_block_latency(shape, policy, rho_k, P_O_prev)
    pmf = pcl_pmf(hist)
    return LatencyMetrics(
        theta_pl=expected_peak_latency(hist, virtual_block),
        theta_pa=expected_paoi(hist, virtual_block),
        theta_pcl_pmf=pmf,
        theta_pcl_mean=float(np.sum(np.arange(1, pmf.size + 1) * pmf)),
        theta_curr=curr.expected_slots,
    )
