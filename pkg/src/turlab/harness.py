"""Randomized two-qubit-system / one-qubit-environment experiment family.

Each trial draws twelve rotation angles and an interaction strength gamma:

  * preparation: |00> -> (RY(t2) RX(t1) (x) RY(t4) RX(t3)) |00>  (pure rho_S(0));
  * channel dilation on S1 (x) S2 (x) E:
      layer of RY(t6) RX(t5), RY(t8) RX(t7) on S, then a controlled-RY(pi*gamma)
      with control S1 and target E, then a layer of RY(t10) RX(t9),
      RY(t12) RX(t11) on S;
  * observables A = sigma_i (x) sigma_j and B = sigma_k (x) sigma_l drawn
    uniformly from the fifteen non-identity Pauli pairs.

Every trial is a deterministic function of (seed, trial_id); shot sampling uses
independent counter-based substreams so repeated runs are bit-identical.
"""

from __future__ import annotations

import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from statistics import median

import numpy as np

from .channels import KrausChannel, kraus_from_unitary
from .errors import ContractError, DegenerateChannel
from .gates import I2, KET0, P0, P1, kron_all, pauli_pair, rx, ry
from .linalg import SubsystemLayout, outer
from .protocol import (
    ShotResult,
    _ancilla_pullback,
    _entry_state,
    correlator_bound,
    key_digits,
    nested_premeasure_state,
    protocol_state,
    sample_shots,
    separable_tur_protocol_check,
)
from .tur import _tur_report, check_general_tur, purify

VARIANTS = ("exact", "neumann1", "sampled")


@dataclass(frozen=True)
class ExperimentConfig:
    seed: int = 0
    n_trials: int = 50
    shots: int = 1000
    gamma_range: tuple[float, float] = (0.0, 0.75)
    theta_range: tuple[float, float] = (0.0, math.pi)
    variants: tuple[str, ...] = VARIANTS

    def __post_init__(self):
        lo, hi = self.gamma_range
        if not (0.0 <= lo <= hi < 1.0):
            raise ContractError(f"gamma_range must lie in [0, 1), got {self.gamma_range}")
        tlo, thi = self.theta_range
        if not (0.0 <= tlo <= thi <= 2.0 * math.pi):
            raise ContractError(f"theta_range must lie in [0, 2*pi], got {self.theta_range}")
        if self.n_trials < 1:
            raise ContractError("n_trials must be >= 1")
        if self.shots < 0:
            raise ContractError("shots must be >= 0")
        variants = tuple(self.variants)
        unknown = set(variants) - set(VARIANTS)
        if unknown:
            raise ContractError(f"unknown variants {sorted(unknown)}")
        object.__setattr__(self, "variants", variants)
        object.__setattr__(self, "gamma_range", (float(lo), float(hi)))
        object.__setattr__(self, "theta_range", (float(tlo), float(thi)))


def trial_rng(seed: int, trial_id: int, *stream: int) -> np.random.Generator:
    """Counter-based generator for one trial (optionally one purpose substream)."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(trial_id),) + tuple(stream))
    return np.random.Generator(np.random.Philox(ss))


@dataclass(frozen=True)
class TrialSetup:
    trial_id: int
    gamma: float
    thetas: tuple[float, ...]
    a_idx: tuple[int, int]
    b_idx: tuple[int, int]
    rho: np.ndarray
    channel: KrausChannel
    a_op: np.ndarray
    b_op: np.ndarray


def preparation_state(thetas) -> np.ndarray:
    """Pure two-qubit state of the four-rotation preparation circuit."""
    t1, t2, t3, t4 = thetas[:4]
    psi = np.kron(ry(t2) @ rx(t1) @ KET0, ry(t4) @ rx(t3) @ KET0)
    return outer(psi)


def dilation_unitary(thetas, gamma: float) -> np.ndarray:
    """8x8 dilation on S1 (x) S2 (x) E with a controlled-RY(pi*gamma) coupling."""
    t5, t6, t7, t8, t9, t10, t11, t12 = thetas[4:12]
    layer1 = kron_all(ry(t6) @ rx(t5), ry(t8) @ rx(t7), I2)
    coupling = kron_all(P0, I2, I2) + kron_all(P1, I2, ry(math.pi * gamma))
    layer2 = kron_all(ry(t10) @ rx(t9), ry(t12) @ rx(t11), I2)
    return layer2 @ coupling @ layer1


def _draw_pauli_pair(rng: np.random.Generator) -> tuple[int, int]:
    k = int(rng.integers(1, 16))  # 1..15 skips the identity pair
    return k // 4, k % 4


def generate_trial(config: ExperimentConfig, trial_id: int) -> TrialSetup:
    """Deterministic trial inputs for (config.seed, trial_id)."""
    rng = trial_rng(config.seed, trial_id)
    thetas = tuple(float(x) for x in rng.uniform(*config.theta_range, size=12))
    gamma = float(rng.uniform(*config.gamma_range))
    a_idx = _draw_pauli_pair(rng)
    b_idx = _draw_pauli_pair(rng)
    rho = preparation_state(thetas)
    channel = kraus_from_unitary(
        dilation_unitary(thetas, gamma), SubsystemLayout((4, 2), ("S", "E")), env_initial=0
    )
    return TrialSetup(
        trial_id=trial_id, gamma=gamma, thetas=thetas, a_idx=a_idx, b_idx=b_idx,
        rho=rho, channel=channel, a_op=pauli_pair(*a_idx), b_op=pauli_pair(*b_idx),
    )


@dataclass(frozen=True)
class VariantValues:
    """One variant's view of the correlator bound and the separable trade-off."""

    c_real: float
    xi_b: float
    q_ab: float
    lower: float
    upper: float
    tur_lhs: float
    contained: bool
    tur_violated: bool
    degenerate: bool = False


@dataclass(frozen=True)
class TrialRecord:
    trial_id: int
    gamma: float
    thetas: tuple[float, ...]
    a_idx: tuple[int, int]
    b_idx: tuple[int, int]
    exact: VariantValues
    approx: VariantValues
    sampled: VariantValues | None
    shots: int
    postselect_p0: float
    general_tur_holds: bool
    contained_imag: bool
    sep_tur_holds_imag: bool
    tur_margin: float
    bound_gap: float          # |upper_exact - upper_approx|
    failure: str | None = None


def _variant_values(c_part: float, xi: float, q: float) -> VariantValues:
    report = _tur_report(c_part, 1.0 - c_part * c_part, q, xi)
    half = math.sqrt(max(xi, 0.0))
    lower, upper = q - half, q + half
    contained = (lower - 1e-9) <= c_part <= (upper + 1e-9)
    return VariantValues(
        c_real=c_part, xi_b=xi, q_ab=q, lower=lower, upper=upper,
        tur_lhs=report.lhs, contained=contained,
        tur_violated=not report.holds, degenerate=report.degenerate,
    )


def _sign_from_digit(d: int) -> int:
    return 1 if d == 0 else -1


def estimate_main_circuit(result: ShotResult, layout: SubsystemLayout, e0: int = 0):
    """(c_hat, p0_hat, t1_hat) from the main premeasure counts.

    c_hat: mean sign of S'; p0_hat: frequency of E = e0; t1_hat: mean sign of
    S' over the E = e0 shots.
    """
    n = result.shots
    total_sign = 0
    n_e0 = 0
    sign_e0 = 0
    for key, count in result.counts.items():
        digits = key_digits(key, layout)
        s = _sign_from_digit(digits[0])
        total_sign += s * count
        if digits[-1] == e0:
            n_e0 += count
            sign_e0 += s * count
    c_hat = total_sign / n
    p0_hat = n_e0 / n
    if n_e0 == 0:
        raise DegenerateChannel("no shots survived the E = e0 postselection")
    return c_hat, p0_hat, sign_e0 / n_e0


def estimate_nested_circuit(result: ShotResult, layout: SubsystemLayout, e0: int = 0) -> float:
    """Mean of sign(S2') * [E2 = e0] over shots with E1 = e0."""
    n_e1 = 0
    acc = 0
    for key, count in result.counts.items():
        digits = key_digits(key, layout)
        if digits[3] != e0:
            continue
        n_e1 += count
        if digits[4] == e0:
            acc += _sign_from_digit(digits[0]) * count
    if n_e1 == 0:
        raise DegenerateChannel("no shots survived the E1 = e0 postselection")
    return acc / n_e1


def evaluate_trial(setup: TrialSetup, config: ExperimentConfig) -> TrialRecord:
    rho, ch, a, b = setup.rho, setup.channel, setup.a_op, setup.b_op

    bound = correlator_bound(rho, ch, a, b, variant="exact", part="real")
    sep = separable_tur_protocol_check(rho, ch, a, b, part="real")
    exact = _variant_values(bound.correlator_real, bound.xi_b, bound.q_ab)

    bound_i = correlator_bound(rho, ch, a, b, variant="exact", part="imag")
    sep_i = separable_tur_protocol_check(rho, ch, a, b, part="imag")

    approx_bound = correlator_bound(rho, ch, a, b, variant="neumann1", part="real")
    approx = _variant_values(approx_bound.correlator_real, approx_bound.xi_b, approx_bound.q_ab)

    # General trade-off instance: the protocol observable embedded on R+P+E.
    sigma_pb = _entry_state(rho, b)
    lifted = KrausChannel(
        tuple(np.kron(I2, v) for v in ch.operators),
        no_jump_index=ch.no_jump_index,
    )
    g_emb = kron_all(np.eye(sigma_pb.shape[0]), _ancilla_pullback(a, "real"), np.eye(len(ch.operators)))
    general = check_general_tur(g_emb, purify(sigma_pb), lifted)

    p0 = 1.0 - approx_bound.xi_b

    sampled = None
    failure = None
    if "sampled" in config.variants and config.shots > 0:
        try:
            pm_main = protocol_state(rho, ch, a, b, stage="premeasure", part="real")
            res_main = sample_shots(pm_main, config.shots, (config.seed, setup.trial_id, 0))
            c_hat, p0_hat, t1_hat = estimate_main_circuit(res_main, pm_main.layout)
            pm_nested = nested_premeasure_state(rho, ch, a, b, part="real")
            res_nested = sample_shots(pm_nested, config.shots, (config.seed, setup.trial_id, 1))
            t2_hat = estimate_nested_circuit(res_nested, pm_nested.layout)
            xi_hat = 1.0 - p0_hat
            q_hat = 2.0 * p0_hat * t1_hat - p0_hat * t2_hat
            sampled = _variant_values(c_hat, xi_hat, q_hat)
        except DegenerateChannel as exc:
            failure = str(exc)

    return TrialRecord(
        trial_id=setup.trial_id, gamma=setup.gamma, thetas=setup.thetas,
        a_idx=setup.a_idx, b_idx=setup.b_idx,
        exact=exact, approx=approx, sampled=sampled,
        shots=config.shots if sampled is not None else 0, postselect_p0=p0,
        general_tur_holds=general.holds,
        contained_imag=bound_i.holds,
        sep_tur_holds_imag=sep_i.holds,
        tur_margin=sep.margin,
        bound_gap=abs(bound.upper - approx_bound.upper),
        failure=failure,
    )


@dataclass(frozen=True)
class RunSummary:
    n_trials: int
    violations: dict
    margin_min: float | None
    margin_median: float | None
    degenerate_trials: int
    failed_trials: int
    gap_bucket_edges: tuple[float, ...]
    gap_bucket_medians: tuple[float | None, ...]
    runtime_seconds: float | None = None


def summarize(records: list[TrialRecord]) -> RunSummary:
    """Aggregate violation counts, margins and approximation gaps (stable in trial order)."""
    if not records:
        raise ContractError("summarize needs at least one trial record")
    records = sorted(records, key=lambda r: r.trial_id)
    violations = {
        "exact": {
            "tur": sum(r.exact.tur_violated for r in records),
            "containment": sum(not r.exact.contained for r in records),
            "tur_imag": sum(not r.sep_tur_holds_imag for r in records),
            "containment_imag": sum(not r.contained_imag for r in records),
            "general": sum(not r.general_tur_holds for r in records),
        },
        "neumann1": {
            "tur": sum(r.approx.tur_violated for r in records),
            "containment": sum(not r.approx.contained for r in records),
        },
    }
    sampled = [r for r in records if r.sampled is not None]
    if sampled:
        violations["sampled"] = {
            "tur": sum(r.sampled.tur_violated for r in sampled),
            "containment": sum(not r.sampled.contained for r in sampled),
            "n": len(sampled),
        }
    margins = [r.tur_margin for r in records if not r.exact.degenerate and math.isfinite(r.tur_margin)]
    gammas = [r.gamma for r in records]
    lo, hi = min(gammas), max(gammas)
    edges = tuple(lo + (hi - lo) * k / 4.0 for k in range(5)) if hi > lo else (lo, hi)
    bucket_medians: list[float | None] = []
    if hi > lo:
        for k in range(4):
            in_bucket = [
                r.bound_gap for r in records
                if edges[k] <= r.gamma <= (edges[k + 1] if k == 3 else edges[k + 1] - 1e-15)
            ]
            bucket_medians.append(median(in_bucket) if in_bucket else None)
    else:
        bucket_medians.append(median(r.bound_gap for r in records))
    return RunSummary(
        n_trials=len(records),
        violations=violations,
        margin_min=min(margins) if margins else None,
        margin_median=median(margins) if margins else None,
        degenerate_trials=sum(r.exact.degenerate for r in records),
        failed_trials=sum(r.failure is not None for r in records),
        gap_bucket_edges=edges,
        gap_bucket_medians=tuple(bucket_medians),
    )


def _worker(args) -> TrialRecord:
    config, trial_id = args
    return evaluate_trial(generate_trial(config, trial_id), config)


def worker_count() -> int:
    raw = os.environ.get("TURLAB_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def run_experiment(config: ExperimentConfig) -> tuple[list[TrialRecord], RunSummary]:
    """Evaluate every trial of the configured family; trials are independent."""
    start = time.perf_counter()
    jobs = [(config, i) for i in range(config.n_trials)]
    workers = worker_count()
    if workers > 1 and config.n_trials > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(_worker, jobs, chunksize=max(1, config.n_trials // (4 * workers))))
    else:
        records = [_worker(j) for j in jobs]
    records.sort(key=lambda r: r.trial_id)
    summary = replace(summarize(records), runtime_seconds=time.perf_counter() - start)
    return records, summary
