"""Two-tier Monte Carlo validation of the analytic formulas.

Bernoulli tier: slot outcomes drawn from given per-block success
probabilities, measuring empirical run, latency, age, and controllability
statistics.  Spatial tier: full PPP + Rayleigh fading + SINR simulation of
the typical link.  All estimators are seed-deterministic and independent of
the worker count: episodes are split into fixed-size batches, each batch
gets its own counter-based random stream keyed by (seed, batch index), and
sufficient statistics are merged in batch order.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .runlength import BlockShape
from .spatial import AccessPolicy, NetworkParams, default_disk_radius, effective_densities

__all__ = [
    "Estimate",
    "EmpiricalReport",
    "episode_rng",
    "simulate_bernoulli",
    "simulate_spatial",
    "simulate_renewal_pcl",
    "simulate_policy_chain",
]

_DEFAULT_BATCH = 50_000


@dataclass(frozen=True)
class Estimate:
    """Point estimate with standard error and the sample count behind it."""

    value: float
    stderr: float
    n: int

    def z_against(self, reference: float) -> float:
        if self.stderr == 0.0:
            return 0.0 if self.value == reference else math.inf
        return (self.value - reference) / self.stderr


@dataclass
class EmpiricalReport:
    """Named estimates produced by one simulation run."""

    entries: dict[str, Estimate] = field(default_factory=dict)

    def __getitem__(self, key: str) -> Estimate:
        return self.entries[key]

    def as_dict(self) -> dict:
        return {
            k: {"value": e.value, "stderr": e.stderr, "n": e.n}
            for k, e in self.entries.items()
        }


def episode_rng(seed: int, stream: int = 0) -> np.random.Generator:
    """Counter-based generator for one batch: key = (seed, stream)."""
    return np.random.Generator(np.random.Philox(key=(int(seed) << 64) + int(stream)))


def _resolve_streams(seed, episodes: int, batch_size: int):
    """Fixed batch plan (sizes independent of worker count)."""
    if episodes < 1:
        raise ValueError(f"episodes must be >= 1, got {episodes}")
    n_batches = -(-episodes // batch_size)
    sizes = [batch_size] * (n_batches - 1) + [episodes - batch_size * (n_batches - 1)]
    return [(i, sizes[i]) for i in range(n_batches)]


def _run_batches(seed, episodes, batch_size, workers, batch_fn):
    """Map batch_fn(rng, n) over the fixed plan, merging stats in batch order."""
    plan = _resolve_streams(seed, episodes, batch_size)
    jobs = [(episode_rng(seed, i), n) for i, n in plan]
    if workers > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(lambda j: batch_fn(*j), jobs))
    else:
        results = [batch_fn(*j) for j in jobs]
    merged = results[0]
    for r in results[1:]:
        for key, val in r.items():
            merged[key] = merged[key] + val
    return merged


def _mean_estimate(total, total_sq, n) -> Estimate:
    n = int(n)
    if n == 0:
        return Estimate(math.nan, math.nan, 0)
    mean = total / n
    if n == 1:
        return Estimate(mean, math.nan, 1)
    var = max(0.0, (total_sq - n * mean**2) / (n - 1))
    return Estimate(mean, math.sqrt(var / n), n)


def _rate_estimate(count, n) -> Estimate:
    n = int(n)
    if n == 0:
        return Estimate(math.nan, math.nan, 0)
    p = count / n
    return Estimate(p, math.sqrt(max(p * (1.0 - p), 0.0) / n), n)


def _has_run(bits: np.ndarray, v: int) -> np.ndarray:
    """True where the trailing axis contains >= v consecutive ones."""
    if v == 1:
        return bits.any(axis=-1)
    c = np.cumsum(bits, axis=-1, dtype=np.int32)
    pad = np.zeros(bits.shape[:-1] + (1,), dtype=np.int32)
    c = np.concatenate([pad, c], axis=-1)
    window = c[..., v:] - c[..., :-v]
    return (window == v).any(axis=-1)


def simulate_bernoulli(
    p_seq,
    shape: BlockShape,
    episodes: int,
    seed: int,
    virtual_block: str = "extend",
    workers: int = 1,
    batch_size: int = _DEFAULT_BATCH,
) -> EmpiricalReport:
    """Empirical block statistics for i.i.d. Bernoulli slots with given per-block p.

    Per episode: blocks 1..k with p_seq probabilities, plus the virtual
    block 0 per the selected convention ('extend' draws it with p_1,
    'boundary' fixes a success on its last slot).  Reports per-block slot,
    success and run rates, and the latency / age of the first input of the
    final block conditioned on that block succeeding.
    """
    p = np.asarray(p_seq, dtype=float)
    if p.ndim != 1 or p.size == 0:
        raise ValueError("p_seq must be a non-empty 1-D sequence")
    if p.min() < 0.0 or p.max() > 1.0:
        raise ValueError("p_seq entries must lie in [0, 1]")
    if virtual_block not in ("extend", "boundary"):
        raise ValueError(f"unknown virtual_block mode {virtual_block!r}")
    k, T, v = p.size, shape.T, shape.v

    def batch(rng, n):
        bits = rng.random((n, k, T)) < p[None, :, None]
        Z = bits.any(axis=2)
        runs = _has_run(bits, v)
        final = bits[:, k - 1, :]
        zk = Z[:, k - 1]
        X = np.argmax(final, axis=1)

        if virtual_block == "extend":
            b0 = rng.random((n, T)) < p[0]
            z0 = b0.any(axis=1)
            w0 = np.argmax(b0[:, ::-1], axis=1)
        else:
            z0 = np.ones(n, dtype=bool)
            w0 = np.zeros(n, dtype=np.int64)

        # trailing failure run of each block (meaningful only where Z holds)
        W = np.argmax(bits[:, :, ::-1], axis=2)
        Zfull = np.concatenate([z0[:, None], Z[:, : k - 1]], axis=1)
        Wfull = np.concatenate([w0[:, None], W[:, : k - 1]], axis=1)
        any_prior = Zfull.any(axis=1)
        last = k - 1 - np.argmax(Zfull[:, ::-1], axis=1)
        kappa = np.where(any_prior, k - last, 0)
        w_prev = np.where(any_prior, Wfull[np.arange(n), last], 0)

        L = T * (kappa - 1) + w_prev + X + 1
        D = kappa * T + X + 1
        Lz = L[zk].astype(float)
        Dz = D[zk].astype(float)
        return {
            "slot_cnt": bits.sum(axis=(0, 2)).astype(float),
            "z_cnt": Z.sum(axis=0).astype(float),
            "run_cnt": runs.sum(axis=0).astype(float),
            "n": float(n),
            "n_zk": float(zk.sum()),
            "L_sum": Lz.sum(),
            "L_sq": (Lz**2).sum(),
            "D_sum": Dz.sum(),
            "D_sq": (Dz**2).sum(),
            "diff_sum": (Dz - Lz).sum(),
            "diff_sq": ((Dz - Lz) ** 2).sum(),
            "X_sum": X[zk].sum().astype(float),
            "X_sq": (X[zk].astype(float) ** 2).sum(),
        }

    stats = _run_batches(seed, episodes, batch_size, workers, batch)
    n = stats["n"]
    report = EmpiricalReport()
    for i in range(k):
        report.entries[f"slot_rate_b{i + 1}"] = _rate_estimate(stats["slot_cnt"][i], n * T)
        report.entries[f"block_success_b{i + 1}"] = _rate_estimate(stats["z_cnt"][i], n)
        report.entries[f"run_freq_b{i + 1}"] = _rate_estimate(stats["run_cnt"][i], n)
    nz = stats["n_zk"]
    report.entries["peak_latency"] = _mean_estimate(stats["L_sum"], stats["L_sq"], nz)
    report.entries["paoi"] = _mean_estimate(stats["D_sum"], stats["D_sq"], nz)
    report.entries["paoi_minus_pl"] = _mean_estimate(stats["diff_sum"], stats["diff_sq"], nz)
    report.entries["first_failure_run"] = _mean_estimate(stats["X_sum"], stats["X_sq"], nz)
    return report


def simulate_spatial(
    params: NetworkParams,
    policy: AccessPolicy,
    shape: BlockShape,
    episodes: int,
    seed: int,
    P_O_prev: float = 0.0,
    disk_radius: float | None = None,
    geometry: str = "per-slot",
    workers: int = 1,
    batch_size: int = 2_000,
) -> EmpiricalReport:
    """One-block spatial simulation of the typical link.

    Interferers form a PPP of the policy's effective density on a disk;
    every link carries unit-mean exponential fading redrawn each slot, and
    the typical controller transmits in every slot, so the measured slot
    rate estimates the access-conditional success probability.

    ``geometry`` selects what the block-level run statistics describe:
    'per-slot' (default) redraws the interferer field every slot, making
    slot successes i.i.d. exactly as the closed-form block analytics
    assume; 'per-episode' freezes the field for the whole block, which is
    the static-network behavior whose geometry correlation biases run
    frequencies away from the mean-field value (the meta-distribution
    effect, out of analytic scope).
    """
    if geometry not in ("per-slot", "per-episode"):
        raise ValueError(f"unknown geometry mode {geometry!r}")
    dens = effective_densities(params, policy, P_O_prev)
    lam_eff = dens.lambda_eff
    if disk_radius is None:
        disk_radius = default_disk_radius(lam_eff)
    T, v = shape.T, shape.v
    signal_scale = params.xi * params.r0 ** (-params.alpha)
    mean_pts = lam_eff * math.pi * disk_radius**2

    def batch(rng, n):
        if geometry == "per-episode":
            counts = rng.poisson(mean_pts, size=n)
            owner = np.repeat(np.arange(n), counts)
            radii = disk_radius * np.sqrt(rng.random(int(counts.sum())))
            attenuation = params.xi * radii ** (-params.alpha)
            slot_success = np.empty((n, T), dtype=bool)
            for t in range(T):
                fading = rng.exponential(size=attenuation.size)
                interference = np.bincount(
                    owner, weights=attenuation * fading, minlength=n
                )
                signal = signal_scale * rng.exponential(size=n)
                slot_success[:, t] = signal > params.gamma * (params.N0 + interference)
        else:
            # independent field per slot: n*T single-slot cells
            counts = rng.poisson(mean_pts, size=n * T)
            owner = np.repeat(np.arange(n * T), counts)
            radii = disk_radius * np.sqrt(rng.random(int(counts.sum())))
            power = params.xi * radii ** (-params.alpha) * rng.exponential(
                size=radii.size
            )
            interference = np.bincount(owner, weights=power, minlength=n * T)
            signal = signal_scale * rng.exponential(size=n * T)
            slot_success = (
                signal > params.gamma * (params.N0 + interference)
            ).reshape(n, T)
        return {
            "slot_cnt": float(slot_success.sum()),
            "run_cnt": float(_has_run(slot_success, v).sum()),
            "z_cnt": float(slot_success.any(axis=1).sum()),
            "n": float(n),
        }

    stats = _run_batches(seed, episodes, batch_size, workers, batch)
    n = stats["n"]
    report = EmpiricalReport()
    report.entries["slot_rate"] = _rate_estimate(stats["slot_cnt"], n * T)
    report.entries["run_freq"] = _rate_estimate(stats["run_cnt"], n)
    report.entries["block_success"] = _rate_estimate(stats["z_cnt"], n)
    return report


def simulate_renewal_pcl(
    P_tilde_seq,
    chi_C_seq,
    episodes: int,
    seed: int,
    workers: int = 1,
    batch_size: int = _DEFAULT_BATCH,
) -> EmpiricalReport:
    """Simulate the controllability indicator chain and measure the final gap.

    Block i is controllable with its marginal probability until the first
    real controllable block, after which the chain switches to the
    post-controllability run probabilities.  The gap tau at the final block
    is measured against the virtual controllable block 0.
    """
    pt = np.asarray(P_tilde_seq, dtype=float)
    cc = np.asarray(chi_C_seq, dtype=float)
    if pt.shape != cc.shape or pt.ndim != 1 or pt.size == 0:
        raise ValueError("P_tilde_seq and chi_C_seq must be equal-length 1-D sequences")
    k = pt.size

    def batch(rng, n):
        has_real = np.zeros(n, dtype=bool)
        last = np.zeros(n, dtype=np.int64)
        for i in range(k - 1):
            prob = np.where(has_real, cc[i], pt[i])
            ctrl = rng.random(n) < prob
            last = np.where(ctrl, i + 1, last)
            has_real |= ctrl
        prob = np.where(has_real, cc[k - 1], pt[k - 1])
        final_ctrl = rng.random(n) < prob
        tau = (k - last)[final_ctrl]
        counts = np.bincount(tau, minlength=k + 1)[1 : k + 1].astype(float)
        return {
            "tau_cnt": counts,
            "n_ctrl": float(final_ctrl.sum()),
            "tau_sum": float(tau.sum()),
            "tau_sq": float((tau.astype(float) ** 2).sum()),
            "n": float(n),
        }

    stats = _run_batches(seed, episodes, batch_size, workers, batch)
    report = EmpiricalReport()
    n_ctrl = stats["n_ctrl"]
    report.entries["pcl_mean"] = _mean_estimate(stats["tau_sum"], stats["tau_sq"], n_ctrl)
    report.entries["ctrl_rate"] = _rate_estimate(n_ctrl, stats["n"])
    for tau in range(1, k + 1):
        report.entries[f"pcl_pmf_{tau}"] = _rate_estimate(stats["tau_cnt"][tau - 1], n_ctrl)
    return report


def simulate_policy_chain(
    shape: BlockShape,
    policies,
    rho_seq,
    episodes: int,
    seed: int,
    workers: int = 1,
    batch_size: int = 20_000,
) -> EmpiricalReport:
    """Full Bernoulli-tier system simulation under a per-block policy schedule.

    Each episode tracks one controller: before controllability it draws
    block access with delta_B (slots at rho) or falls back to slot access
    (slots at delta_S * rho); after its first controllable block it uses
    delta_C * rho.  Validates the first-time / cumulative / instantaneous
    controllability recursions and the gap distribution at the final block.
    """
    rho = np.asarray(rho_seq, dtype=float)
    policies = list(policies)
    if len(policies) != rho.size or rho.size == 0:
        raise ValueError("policies and rho_seq must have equal nonzero length")
    K, T, v = rho.size, shape.T, shape.v

    def batch(rng, n):
        ever = np.zeros(n, dtype=bool)
        last = np.zeros(n, dtype=np.int64)
        first_cnt = np.zeros(K)
        notyet_cnt = np.zeros(K)
        ever_cnt = np.zeros(K)
        inst_cnt = np.zeros(K)
        tau_cnt = np.zeros(K)
        final_ctrl_n = 0.0
        tau_sum = 0.0
        tau_sq = 0.0
        for i, pol in enumerate(policies):
            pre = ~ever
            is_block = rng.random(n) < pol.delta_B
            p_slot = np.where(
                pre,
                np.where(is_block, rho[i], pol.delta_S * rho[i]),
                pol.delta_C * rho[i],
            )
            bits = rng.random((n, T)) < p_slot[:, None]
            ctrl = _has_run(bits, v)
            first_cnt[i] = (pre & ctrl).sum()
            notyet_cnt[i] = pre.sum()
            inst_cnt[i] = ctrl.sum()
            ever |= ctrl
            ever_cnt[i] = ever.sum()
            if i == K - 1:
                tau = (i + 1 - last)[ctrl]
                final_ctrl_n = float(ctrl.sum())
                tau_sum = float(tau.sum())
                tau_sq = float((tau.astype(float) ** 2).sum())
                tau_cnt = np.bincount(tau, minlength=K + 1)[1 : K + 1].astype(float)
            last = np.where(ctrl, i + 1, last)
        return {
            "first_cnt": first_cnt,
            "notyet_cnt": notyet_cnt,
            "ever_cnt": ever_cnt,
            "inst_cnt": inst_cnt,
            "tau_cnt": tau_cnt,
            "final_ctrl_n": final_ctrl_n,
            "tau_sum": tau_sum,
            "tau_sq": tau_sq,
            "n": float(n),
        }

    stats = _run_batches(seed, episodes, batch_size, workers, batch)
    n = stats["n"]
    report = EmpiricalReport()
    for i in range(K):
        report.entries[f"pi_b{i + 1}"] = _rate_estimate(
            stats["first_cnt"][i], stats["notyet_cnt"][i]
        )
        report.entries[f"P_O_b{i + 1}"] = _rate_estimate(stats["ever_cnt"][i], n)
        report.entries[f"P_tilde_b{i + 1}"] = _rate_estimate(stats["inst_cnt"][i], n)
    report.entries["pcl_mean"] = _mean_estimate(
        stats["tau_sum"], stats["tau_sq"], stats["final_ctrl_n"]
    )
    for tau in range(1, K + 1):
        report.entries[f"pcl_pmf_{tau}"] = _rate_estimate(
            stats["tau_cnt"][tau - 1], stats["final_ctrl_n"]
        )
    return report
