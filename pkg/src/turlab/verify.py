"""Runtime property suites behind the `verify` command.

Each suite draws seeded random instances (harness-family circuits plus generic
random dilations) and checks one identity or invariant at its pinned tolerance:

  qfi         |J(0) - Xi| <= 1e-8
  scaling     finite difference of <G>_theta vs <G> - Q_G, step 1e-5, 1e-6;
              plus the closed-form derivative leg at 1e-8
  protocol    ancilla-protocol correlator vs direct Heisenberg value, 1e-10
  saturation  observables affine in the SLD give TUR ratio 1 within 1e-6
  series      truncated-series error decreases with order; first order equals
              1 - p0 exactly; protocol moments match matrix powers at 1e-10
"""

from __future__ import annotations

from dataclasses import dataclass
from statistics import median

import numpy as np

from .channels import KrausChannel, dv0_dtheta, perturbed_kraus
from .harness import ExperimentConfig, generate_trial
from .random_ops import random_channel, random_density, random_hermitian
from .tur import (
    PurifiedState,
    check_general_tur,
    final_joint_state,
    purify,
    qfi,
    sld,
    survival_activity,
    survival_activity_moments,
    survival_activity_protocol_sim,
    survival_activity_series,
)
from .protocol import exact_correlator, protocol_correlator

SUITES = ("qfi", "scaling", "protocol", "saturation", "series")
FD_STEP = 1e-5


@dataclass(frozen=True)
class SuiteResult:
    name: str
    passed: bool
    cases: int
    worst: float
    note: str


def _family_channel(seed: int, i: int, gamma_lo: float = 0.1, gamma_hi: float = 0.75):
    cfg = ExperimentConfig(seed=seed, n_trials=1, shots=0, gamma_range=(gamma_lo, gamma_hi), variants=("exact",))
    return generate_trial(cfg, i)


def _instances(seed: int, n: int):
    """Alternate harness-family and generic random channels with mixed states."""
    rng = np.random.default_rng(seed)
    for i in range(n):
        if i % 2 == 0:
            setup = _family_channel(seed, i)
            yield setup.channel, random_density(setup.channel.dim, rng)
        else:
            dim_s = int(rng.choice([2, 3, 4]))
            yield random_channel(dim_s, 2, rng), random_density(dim_s, rng)


def perturbed_mean(g: np.ndarray, ps: PurifiedState, ch: KrausChannel, theta: float) -> float:
    """<G> over the joint state evolved by the theta-perturbed Kraus family."""
    pert = perturbed_kraus(ch, theta)
    d_r = ps.joint_vector.size // ps.dim_s
    n_env = len(ch.operators)
    dim = d_r * ps.dim_s * n_env
    psi = np.zeros(dim, dtype=complex)
    for m, v in enumerate(pert.operators):
        branch = (ps.joint_vector.reshape(d_r, ps.dim_s) @ v.T)
        psi += np.einsum("rs,e->rse", branch, np.eye(n_env)[m]).reshape(-1)
    return float(np.vdot(psi, g @ psi).real)


def analytic_scaling(g: np.ndarray, ps: PurifiedState, ch: KrausChannel, flip_dv0_sign: bool = False) -> float:
    """d<G>/dtheta at theta = 0 from the operator derivatives dV_m/dtheta."""
    d0 = dv0_dtheta(ch)
    if flip_dv0_sign:
        d0 = -d0
    derivs = [d0 if i == ch.no_jump_index else 0.5 * v for i, v in enumerate(ch.operators)]
    d_r = ps.joint_vector.size // ps.dim_s
    n_env = len(ch.operators)
    dim = d_r * ps.dim_s * n_env
    dpsi = np.zeros(dim, dtype=complex)
    for m, d in enumerate(derivs):
        branch = ps.joint_vector.reshape(d_r, ps.dim_s) @ d.T
        dpsi += np.einsum("rs,e->rse", branch, np.eye(n_env)[m]).reshape(-1)
    psi_t = final_joint_state(ps, ch)
    return 2.0 * float(np.vdot(dpsi, g @ psi_t).real)


def suite_qfi(trials: int, seed: int) -> SuiteResult:
    worst = 0.0
    for ch, rho in _instances(seed, trials):
        ps = purify(rho)
        worst = max(worst, abs(qfi(ch, ps) - survival_activity(rho, ch)))
    return SuiteResult("qfi", worst <= 1e-8, trials, worst, "max |J(0) - Xi|")


def suite_scaling(trials: int, seed: int, inject_fault: str | None = None) -> SuiteResult:
    rng = np.random.default_rng(seed + 1)
    worst_fd, worst_an = 0.0, 0.0
    for ch, rho in _instances(seed, trials):
        ps = purify(rho)
        n_env = len(ch.operators)
        dim = ps.dim_s * ps.dim_s * n_env
        g = random_hermitian(dim, rng)
        report = check_general_tur(g, ps, ch)
        target = report.mean - report.q_baseline
        fd = (perturbed_mean(g, ps, ch, FD_STEP) - perturbed_mean(g, ps, ch, -FD_STEP)) / (2.0 * FD_STEP)
        an = analytic_scaling(g, ps, ch, flip_dv0_sign=(inject_fault == "dv0-sign"))
        worst_fd = max(worst_fd, abs(fd - target))
        worst_an = max(worst_an, abs(an - target))
    passed = worst_fd <= 1e-6 and worst_an <= 1e-8
    return SuiteResult(
        "scaling", passed, trials,
        max(worst_fd, worst_an),
        f"max |fd - (mean - Q)| = {worst_fd:.3e}, analytic leg {worst_an:.3e}",
    )


def suite_protocol(trials: int, seed: int) -> SuiteResult:
    worst = 0.0
    for i in range(trials):
        setup = _family_channel(seed + 2, i, gamma_lo=0.0)
        c_direct = exact_correlator(setup.rho, setup.channel, setup.a_op, setup.b_op)
        c_proto = protocol_correlator(setup.rho, setup.channel, setup.a_op, setup.b_op)
        worst = max(worst, abs(c_direct - c_proto))
    return SuiteResult("protocol", worst <= 1e-10, trials, worst, "max |protocol - direct|")


def suite_saturation(trials: int, seed: int) -> SuiteResult:
    rng = np.random.default_rng(seed + 3)
    worst = 0.0
    for i in range(trials):
        setup = _family_channel(seed + 3, i, gamma_lo=0.2)
        ps = purify(random_density(setup.channel.dim, rng))
        l = sld(ps, setup.channel).matrix
        scale = float(rng.uniform(0.5, 2.0))
        offset = float(rng.uniform(-1.0, 1.0))
        g = scale * l + offset * np.eye(l.shape[0])
        report = check_general_tur(g, ps, setup.channel)
        worst = max(worst, abs(report.ratio - 1.0))
    return SuiteResult("saturation", worst <= 1e-6, trials, worst, "max |TUR ratio - 1| for G affine in L")


def suite_series(trials: int, seed: int) -> SuiteResult:
    rng = np.random.default_rng(seed + 4)
    errors = {n: [] for n in range(1, 5)}
    worst_moment, worst_first = 0.0, 0.0
    for i in range(trials):
        setup = _family_channel(seed + 4, i)
        rho = random_density(setup.channel.dim, rng)
        xi = survival_activity(rho, setup.channel)
        estimates = survival_activity_series(rho, setup.channel, order=4)
        for n, est in enumerate(estimates, start=1):
            errors[n].append(abs(est - xi))
        moments = survival_activity_moments(rho, setup.channel, 4)
        sim = survival_activity_protocol_sim(rho, setup.channel, 4)
        worst_moment = max(worst_moment, max(abs(a - b) for a, b in zip(moments, sim)))
        worst_first = max(worst_first, abs(estimates[0] - (1.0 - moments[1])))
    medians = [median(errors[n]) for n in range(1, 5)]
    decreasing = all(medians[k + 1] < medians[k] for k in range(3))
    passed = decreasing and worst_moment <= 1e-10 and worst_first <= 1e-12
    note = (
        f"median errors N=1..4: {', '.join(f'{m:.2e}' for m in medians)}; "
        f"protocol-moment dev {worst_moment:.1e}; N=1 vs 1-p0 dev {worst_first:.1e}"
    )
    return SuiteResult("series", passed, trials, medians[-1], note)


def run_suites(names=None, trials: int = 100, seed: int = 2024, inject_fault: str | None = None):
    names = tuple(names) if names else SUITES
    results = []
    for name in names:
        if name == "qfi":
            results.append(suite_qfi(trials, seed))
        elif name == "scaling":
            results.append(suite_scaling(trials, seed, inject_fault=inject_fault))
        elif name == "protocol":
            results.append(suite_protocol(trials, seed))
        elif name == "saturation":
            results.append(suite_saturation(max(20, trials // 5), seed))
        elif name == "series":
            results.append(suite_series(max(20, trials // 2), seed))
        else:
            raise ValueError(f"unknown suite {name!r}; choose from {SUITES}")
    return results
