"""Per-block grid search over access probabilities and the horizon driver.

Each block k scans the (delta_B, delta_S, delta_C) grid, scoring every
candidate with J = P_O + rho1 * P(theta_curr <= eta, Z=1)
+ rho2 * P(pcl <= eta, controllable), and picks the maximizer under a
deterministic tie-break.  The chosen block's scalar statistics are appended
to the running history that feeds the next block's gap distribution.

The grid scan is vectorized over candidates; ``evaluate_candidate`` is the
scalar reference path built from the public module operations, and the two
must agree exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .controllability import first_time_controllability, instantaneous_controllability
from .latency import (
    VIRTUAL_BLOCK_MODES,
    BlockHistory,
    DegeneratePolicyError,
    cdf_terms,
    current_block_latency,
    expected_paoi,
    expected_peak_latency,
    _pcl_weights,
)
from .runlength import BlockShape, chi
from .spatial import (
    AccessPolicy,
    NetworkParams,
    effective_densities,
    interference_integral,
    slot_success_prob,
)

__all__ = [
    "OptimizerConfig",
    "MetricsRecord",
    "PolicyTrace",
    "evaluate_candidate",
    "optimize_block",
    "run_horizon",
]

CDF_MODES = ("indicator", "grid-rank")
HISTORY_SCALAR_MODES = ("posterior", "predominant")
_TIE_TOL = 1e-12


@dataclass(frozen=True)
class OptimizerConfig:
    """Grid resolution, cost weights, thresholds, horizon and convention flags."""

    K: int = 400
    grid_step: float = 0.05
    rho1: float = 0.5
    rho2: float = 0.5
    eta_curr: float = 3.0
    eta_pcl: float = 3.0
    cdf_mode: str = "indicator"
    history_scalar: str = "posterior"
    virtual_block: str = "extend"

    def __post_init__(self):
        if self.K < 1:
            raise ValueError(f"horizon K must be >= 1, got {self.K}")
        n = round(1.0 / self.grid_step)
        if n < 1 or abs(n * self.grid_step - 1.0) > 1e-9:
            raise ValueError(f"grid_step must divide 1, got {self.grid_step}")
        for name in ("rho1", "rho2"):
            val = getattr(self, name)
            if not 0.0 < val < 1.0:
                raise ValueError(f"{name} must lie in (0, 1), got {val}")
        if self.eta_curr < 0.0 or self.eta_pcl < 0.0:
            raise ValueError("thresholds must be >= 0")
        if self.cdf_mode not in CDF_MODES:
            raise ValueError(f"cdf_mode must be one of {CDF_MODES}")
        if self.history_scalar not in HISTORY_SCALAR_MODES:
            raise ValueError(f"history_scalar must be one of {HISTORY_SCALAR_MODES}")
        if self.virtual_block not in VIRTUAL_BLOCK_MODES:
            raise ValueError(f"virtual_block must be one of {VIRTUAL_BLOCK_MODES}")

    @property
    def grid_values(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, round(1.0 / self.grid_step) + 1)


@dataclass(frozen=True)
class MetricsRecord:
    """Outputs of the evaluation pipeline for one candidate at one block."""

    k: int
    delta_B: float
    delta_S: float
    delta_C: float
    rho: float
    pi: float
    P_O: float
    P_O_tilde: float
    chi_C: float
    p_scalar: float  # scalar slot-success entry appended to the history
    theta_curr: float  # nan for a degenerate candidate
    block_success_prob: float
    pcl_mean: float
    cdf_curr: float
    cdf_pcl: float
    cost: float
    theta_pl: float | None = None
    theta_pa: float | None = None

    @property
    def policy(self) -> AccessPolicy:
        return AccessPolicy(self.delta_B, self.delta_S, self.delta_C)


@dataclass
class PolicyTrace:
    """Chosen per-block records plus the threaded history of a horizon run."""

    params: NetworkParams
    shape: BlockShape
    config: OptimizerConfig
    records: list[MetricsRecord] = field(default_factory=list)

    @property
    def history(self) -> BlockHistory:
        return BlockHistory(
            self.shape.T,
            tuple(r.p_scalar for r in self.records),
            tuple(r.P_O_tilde for r in self.records),
            tuple(r.chi_C for r in self.records),
        )


def _empty_history(T: int) -> BlockHistory:
    return BlockHistory(T, (), (), ())


def _ex_term(p: np.ndarray, T: int) -> np.ndarray:
    """Vectorized q/p - T q^T / (1 - q^T), zero where p is 0 (weight is 0 there)."""
    p = np.asarray(p, dtype=float)
    safe = np.where(p > 0.0, p, 1.0)
    q = 1.0 - safe
    qT = q**T
    return np.where(p > 0.0, q / safe - T * qT / (1.0 - qT), 0.0)


def _history_scalar(mode, m, slot_p, pz, d_eff, rho):
    if mode == "predominant":
        return d_eff * rho
    post = np.where(pz > 0.0, (m * slot_p).sum(axis=0) / np.where(pz > 0.0, pz, 1.0), 0.0)
    return post


def _pcl_context(hist: BlockHistory, eta_pcl: float):
    """(conditional cdf at eta, mean) of the gap distribution at the next block."""
    weights = _pcl_weights(hist.P_O_tilde, hist.chi_C)
    total = weights.sum()
    if total <= 0.0:
        return 0.0, math.nan
    pmf = weights / total
    n_in = min(pmf.size, int(math.floor(eta_pcl)))
    cdf = float(pmf[:n_in].sum())
    mean = float(np.sum(np.arange(1, pmf.size + 1) * pmf))
    return cdf, mean


def _evaluate_grid(k, P_O_prev, hist, params, shape, config, dB, dS, dC):
    """Vectorized per-block evaluation pipeline over candidate arrays."""
    T = shape.T
    pre = 1.0 - P_O_prev
    d_eff = dB + (1.0 - dB) * dS
    lam_eff = params.lam * (pre * d_eff + P_O_prev * dC)
    noise = params.gamma * params.N0 * params.r0**params.alpha / params.xi
    b = 2.0 * math.pi * interference_integral(params)
    rho = np.exp(-noise - b * lam_eff)

    chi_rho = chi(shape, rho)
    chi_S = chi(shape, dS * rho)
    chi_C = chi(shape, dC * rho)
    pi = dB * chi_rho + (1.0 - dB) * chi_S
    P_O = P_O_prev + pre * pi
    P_tilde = pre * pi + P_O_prev * chi_C

    m = np.stack([pre * dB, pre * (1.0 - dB) * dS, P_O_prev * dC])
    slot_p = np.stack([rho, dS * rho, dC * rho])
    m = m * (1.0 - (1.0 - slot_p) ** T)  # regime fraction * block success
    pz = m.sum(axis=0)
    valid = pz > 0.0
    ex = _ex_term(slot_p, T)
    theta_curr = np.where(valid, (m * ex).sum(axis=0) / np.where(valid, pz, 1.0), np.nan)

    if config.cdf_mode == "indicator":
        cdf_curr = np.where(valid & (theta_curr <= config.eta_curr), pz, 0.0)
    else:
        # rank score: fraction of valid candidates this one strictly beats
        # (larger theta_curr elsewhere), so smaller latency scores higher
        cdf_curr = np.zeros_like(pz)
        if valid.any():
            vals = theta_curr[valid]
            order = np.sort(vals)
            n_valid = vals.size
            worse = n_valid - np.searchsorted(order, vals, side="right")
            cdf_curr[valid] = worse / n_valid * pz[valid]

    cdf_pcl_cond, pcl_mean = _pcl_context(hist, config.eta_pcl)
    cdf_pcl = cdf_pcl_cond * P_tilde
    cost = P_O + config.rho1 * cdf_curr + config.rho2 * cdf_pcl
    p_scalar = _history_scalar(config.history_scalar, m, slot_p, pz, d_eff, rho)
    return {
        "rho": rho,
        "pi": pi,
        "P_O": P_O,
        "P_O_tilde": P_tilde,
        "chi_C": chi_C,
        "p_scalar": p_scalar,
        "theta_curr": theta_curr,
        "block_success_prob": pz,
        "pcl_mean": np.full_like(pz, pcl_mean),
        "cdf_curr": cdf_curr,
        "cdf_pcl": cdf_pcl,
        "cost": cost,
    }


def _record_from_fields(k, policy, fields, idx) -> MetricsRecord:
    return MetricsRecord(
        k=k,
        delta_B=float(policy[0]),
        delta_S=float(policy[1]),
        delta_C=float(policy[2]),
        **{name: float(arr[idx]) for name, arr in fields.items()},
    )


def evaluate_candidate(
    k: int,
    policy: AccessPolicy,
    P_O_prev: float,
    hist: BlockHistory | None,
    params: NetworkParams,
    shape: BlockShape,
    config: OptimizerConfig,
) -> MetricsRecord:
    """Scalar reference evaluation of one candidate policy at block k.

    Composes the public module operations step by step; a degenerate
    candidate (no regime can transmit) yields zero CDF terms instead of an
    error so a grid scan never aborts.  ``hist`` covers blocks 1..k-1.
    """
    hist = hist if hist is not None else _empty_history(shape.T)
    if len(hist) != k - 1:
        raise ValueError(f"history covers {len(hist)} blocks, expected {k - 1}")
    dens = effective_densities(params, policy, P_O_prev)
    rho = slot_success_prob(params, dens.lambda_eff)
    pi = first_time_controllability(shape, policy, rho)
    P_O = P_O_prev + (1.0 - P_O_prev) * pi
    P_tilde = instantaneous_controllability(P_O_prev, pi, shape, policy.delta_C, rho)
    chi_C_k = chi(shape, policy.delta_C * rho)
    try:
        curr = current_block_latency(shape, policy, rho, P_O_prev)
        theta_curr, pz = curr.expected_slots, curr.block_success_prob
    except DegeneratePolicyError:
        theta_curr, pz = math.nan, 0.0
    cdf_curr, cdf_pcl = cdf_terms(
        shape, policy, rho, P_O_prev, hist, config.eta_curr, config.eta_pcl
    )
    cdf_pcl_cond, pcl_mean = _pcl_context(hist, config.eta_pcl)
    cost = P_O + config.rho1 * cdf_curr + config.rho2 * cdf_pcl

    if pz > 0.0:
        fractions = np.array(
            [
                (1.0 - P_O_prev) * policy.delta_B,
                (1.0 - P_O_prev) * (1.0 - policy.delta_B) * policy.delta_S,
                P_O_prev * policy.delta_C,
            ]
        )
        slot_p = np.array([rho, policy.delta_S * rho, policy.delta_C * rho])
        mass = fractions * (1.0 - (1.0 - slot_p) ** shape.T)
        p_scalar = float((mass * slot_p).sum() / pz)
    else:
        p_scalar = 0.0
    if config.history_scalar == "predominant":
        d_eff = policy.delta_B + (1.0 - policy.delta_B) * policy.delta_S
        p_scalar = d_eff * rho

    record = MetricsRecord(
        k=k,
        delta_B=policy.delta_B,
        delta_S=policy.delta_S,
        delta_C=policy.delta_C,
        rho=float(rho),
        pi=float(pi),
        P_O=float(P_O),
        P_O_tilde=float(P_tilde),
        chi_C=float(chi_C_k),
        p_scalar=p_scalar,
        theta_curr=theta_curr,
        block_success_prob=pz,
        pcl_mean=pcl_mean,
        cdf_curr=float(cdf_curr),
        cdf_pcl=float(cdf_pcl),
        cost=float(cost),
    )
    return _with_peak_metrics(record, hist, config)


def _with_peak_metrics(record, hist, config) -> MetricsRecord:
    """Fill theta_pl / theta_pa from the candidate-extended history."""
    if record.p_scalar <= 0.0:
        return replace(record, theta_pl=math.nan, theta_pa=math.nan)
    full = hist.extended(record.p_scalar, record.P_O_tilde, record.chi_C)
    return replace(
        record,
        theta_pl=expected_peak_latency(full, config.virtual_block),
        theta_pa=expected_paoi(full, config.virtual_block),
    )


def optimize_block(
    k: int,
    P_O_prev: float,
    hist: BlockHistory | None,
    params: NetworkParams,
    shape: BlockShape,
    config: OptimizerConfig,
) -> tuple[AccessPolicy, MetricsRecord]:
    """Exhaustive grid scan at block k with a deterministic tie-break.

    Candidates within 1e-12 of the maximum cost are ties; among them the
    smallest delta_B, then the largest delta_S, then the smallest delta_C
    wins.  (Full slot access is indistinguishable from block access in the
    model, and once P_O saturates numerically the cost goes exactly flat in
    delta_S, so the slot-access side of the flat ridge is kept to preserve
    the post-transition policy.)
    """
    hist = hist if hist is not None else _empty_history(shape.T)
    if len(hist) != k - 1:
        raise ValueError(f"history covers {len(hist)} blocks, expected {k - 1}")
    vals = config.grid_values
    B, S, C = np.meshgrid(vals, vals, vals, indexing="ij")
    dB, dS, dC = B.ravel(), S.ravel(), C.ravel()
    fields = _evaluate_grid(k, P_O_prev, hist, params, shape, config, dB, dS, dC)
    cost = fields["cost"]
    ties = np.flatnonzero(cost >= cost.max() - _TIE_TOL)
    order = np.lexsort((dC[ties], -dS[ties], dB[ties]))
    best = int(ties[order[0]])
    policy = AccessPolicy(float(dB[best]), float(dS[best]), float(dC[best]))
    record = _record_from_fields(k, policy.as_tuple(), fields, best)
    return policy, _with_peak_metrics(record, hist, config)


def run_horizon(
    params: NetworkParams, shape: BlockShape, config: OptimizerConfig
) -> PolicyTrace:
    """Optimize blocks 1..K, threading the controllability state and history."""
    trace = PolicyTrace(params=params, shape=shape, config=config)
    hist = _empty_history(shape.T)
    P_O = 0.0
    for k in range(1, config.K + 1):
        policy, record = optimize_block(k, P_O, hist, params, shape, config)
        trace.records.append(record)
        hist = hist.extended(record.p_scalar, record.P_O_tilde, record.chi_C)
        P_O = record.P_O
    return trace
