"""Ancilla-based measurement protocol for two-point correlators and its bounds.

The protocol estimating C(T) = Tr[rho A(T) B(0)] for Hermitian unitary A, B:

  1. ancilla S' starts in |0>;
  2. Hadamard on S' to reach |+>;
  3. controlled-B on S' + S;
  4. the channel acts on S (dilation unitary on S + E, E starting in |e0>);
  5. controlled-A on S' + S;
  6. sigma_x and sigma_y on S' give Re C(T) and Im C(T).

The sigma_x readout is realized as Hadamard-then-sigma_z, sigma_y as
(S-dagger, Hadamard)-then-sigma_z. Everything is simulated exactly on the full
S' (x) S (x) E density matrix; shot noise enters only through multinomial
sampling of the premeasure state.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .channels import KrausChannel, ensure_dilation, heisenberg
from .errors import ContractError, DegenerateChannel, LayoutError, SingularOperator
from .gates import HADAMARD, S_GATE, SIGMA_X, SIGMA_Y, controlled
from .linalg import (
    SubsystemLayout,
    basis_vector,
    dag,
    embed_operator,
    hermitian_inverse,
    max_abs,
    outer,
    partial_trace,
    project_factor,
    require_density,
    require_hermitian,
)
from .tur import P0_CUTOFF, TUR_SLACK, TurReport, _tur_report

STAGES = ("prepared", "after_UB", "after_channel", "after_UA", "premeasure")
PARTS = ("real", "imag")
EQUIVALENCE_ATOL = 1e-10


def require_hermitian_unitary(m: np.ndarray, name: str) -> np.ndarray:
    m = require_hermitian(m, name=name)
    err = max_abs(dag(m) @ m - np.eye(m.shape[0]))
    if err > 1e-10:
        raise ContractError(f"{name} must be unitary (Pauli-string class): |M^dag M - I| = {err:.3e}")
    return m


@dataclass(frozen=True)
class ProtocolState:
    """Density matrix of the protocol register at a named stage."""

    layout: SubsystemLayout
    matrix: np.ndarray
    stage: str

    def __post_init__(self):
        if self.stage not in STAGES:
            raise ContractError(f"unknown stage {self.stage!r}")
        self.layout.require_matches(self.matrix)
        tr = float(np.trace(self.matrix).real)
        if abs(tr - 1.0) > 1e-10:
            raise ContractError(f"protocol state trace {tr:.12g} != 1")


def _conj(u: np.ndarray, rho: np.ndarray) -> np.ndarray:
    return u @ rho @ dag(u)


def _readout_rotation(part: str) -> np.ndarray:
    # H sigma_z H = sigma_x;  (H S^dag) rotates sigma_y onto sigma_z.
    if part == "real":
        return HADAMARD
    if part == "imag":
        return HADAMARD @ dag(S_GATE)
    raise ContractError(f"part must be one of {PARTS}, got {part!r}")


def protocol_state(
    rho: np.ndarray,
    ch: KrausChannel,
    a: np.ndarray,
    b: np.ndarray,
    stage: str = "after_UA",
    part: str = "real",
) -> ProtocolState:
    """Evolve the protocol register up to the requested stage."""
    if stage not in STAGES:
        raise ContractError(f"unknown stage {stage!r}")
    rho = require_density(rho)
    a = require_hermitian_unitary(a, "A")
    b = require_hermitian_unitary(b, "B")
    ch = ensure_dilation(ch)
    if rho.shape[0] != ch.dim or a.shape[0] != ch.dim or b.shape[0] != ch.dim:
        raise LayoutError("rho, A, B must act on the channel's system")
    dil = ch.dilation
    d_s, d_e = ch.dim, dil.env_dim
    layout = SubsystemLayout((2, d_s, d_e), ("S'", "S", "E"))
    rest = d_s * d_e

    sigma = np.kron(np.kron(outer(basis_vector(2, 0)), rho), outer(basis_vector(d_e, dil.env_initial)))
    if stage == "prepared":
        return ProtocolState(layout, sigma, stage)
    sigma = _conj(np.kron(HADAMARD, np.eye(rest)), sigma)
    sigma = _conj(np.kron(controlled(b), np.eye(d_e)), sigma)
    if stage == "after_UB":
        return ProtocolState(layout, sigma, stage)
    sigma = _conj(np.kron(np.eye(2), dil.unitary), sigma)
    if stage == "after_channel":
        return ProtocolState(layout, sigma, stage)
    sigma = _conj(np.kron(controlled(a), np.eye(d_e)), sigma)
    if stage == "after_UA":
        return ProtocolState(layout, sigma, stage)
    sigma = _conj(np.kron(_readout_rotation(part), np.eye(rest)), sigma)
    return ProtocolState(layout, sigma, "premeasure")


def exact_correlator(rho: np.ndarray, ch: KrausChannel, a: np.ndarray, b: np.ndarray) -> complex:
    """C(T) = Tr[rho A(T) B] with A(T) the Heisenberg-evolved observable."""
    rho = require_density(rho)
    a = require_hermitian_unitary(a, "A")
    b = require_hermitian_unitary(b, "B")
    return complex(np.trace(rho @ heisenberg(ch, a) @ b))


def protocol_correlator(rho: np.ndarray, ch: KrausChannel, a: np.ndarray, b: np.ndarray) -> complex:
    """C(T) from the ancilla protocol: <sigma_x (x) I> + i <sigma_y (x) I> on S'."""
    state = protocol_state(rho, ch, a, b, stage="after_UA")
    rest = state.layout.dim // 2
    re = float(np.trace(state.matrix @ np.kron(SIGMA_X, np.eye(rest))).real)
    im = float(np.trace(state.matrix @ np.kron(SIGMA_Y, np.eye(rest))).real)
    return complex(re, im)


def _ancilla_pullback(a: np.ndarray, part: str) -> np.ndarray:
    """G = U_A^c-dag (sigma_readout (x) I_S) U_A^c on S' (x) S."""
    uca = controlled(a)
    readout = SIGMA_X if part == "real" else SIGMA_Y
    if part not in PARTS:
        raise ContractError(f"part must be one of {PARTS}, got {part!r}")
    return dag(uca) @ np.kron(readout, np.eye(a.shape[0])) @ uca


def _entry_state(rho: np.ndarray, b: np.ndarray) -> np.ndarray:
    """State of S' (x) S entering the channel: U_B^c (|+><+| (x) rho) U_B^c-dag."""
    plus = (basis_vector(2, 0) + basis_vector(2, 1)) / math.sqrt(2.0)
    return _conj(controlled(b), np.kron(outer(plus), rho))


@dataclass(frozen=True)
class BoundReport:
    """One evaluation of the correlator bound Q - sqrt(Xi_B) <= Re C <= Q + sqrt(Xi_B).

    ``correlator_real`` holds the bounded component of C(T): its real part for
    part="real", its imaginary part for part="imag".
    """

    correlator_real: float
    q_ab: float
    xi_b: float
    lower: float
    upper: float
    holds: bool
    approx_variant: str
    part: str = "real"


def _bound_pieces(rho: np.ndarray, ch: KrausChannel, b: np.ndarray):
    """Shared exact quantities: entry state, its S marginal, p0 and rho_P^V0."""
    sigma_pb = _entry_state(rho, b)
    layout = SubsystemLayout((2, ch.dim), ("S'", "S"))
    rho_sb = partial_trace(sigma_pb, layout, keep=[1])
    v0 = ch.v0
    lowest = float(np.linalg.eigvalsh(dag(v0) @ v0)[0])
    if lowest <= P0_CUTOFF:
        raise SingularOperator("no-jump operator V_0 is singular", eigenvalue=lowest)
    p0 = float(np.trace(rho_sb @ dag(v0) @ v0).real)
    if p0 <= P0_CUTOFF:
        raise DegenerateChannel(f"no-jump probability {p0:.3e} is numerically zero")
    lift = np.kron(np.eye(2), v0)
    rho_v0 = _conj(lift, sigma_pb) / p0
    return sigma_pb, rho_sb, p0, rho_v0


def _exact_q(rho_v0: np.ndarray, p0: float, ch: KrausChannel, g_p: np.ndarray) -> float:
    winv = np.kron(np.eye(2), hermitian_inverse(ch.v0 @ dag(ch.v0)))
    h = 0.5 * (g_p @ winv + winv @ g_p)
    return p0 * float(np.trace(rho_v0 @ h).real)


def approx_bound_quantities(
    rho: np.ndarray,
    ch: KrausChannel,
    a: np.ndarray,
    b: np.ndarray,
    part: str = "real",
    second_order_factor: str = "p0",
) -> tuple[float, float]:
    """First-order (truncated Neumann series) surrogates for Xi_B and Q_{A,B}.

    (V_0^dag V_0)^-1 ~ 2 - V_0^dag V_0 gives Xi ~ 1 - p_0 and
    Q ~ 2 p_0 T_1 - p_0 T_2 with T_1 = Tr[rho^V0 G] and
    T_2 = Re Tr[rho^V0 G V_0 V_0^dag]. ``second_order_factor="p0_squared"``
    selects the variant with p_0^2 on the second term instead; it converges
    one order slower and exists for comparison only.
    """
    if second_order_factor not in ("p0", "p0_squared"):
        raise ContractError(f"unknown second_order_factor {second_order_factor!r}")
    a = require_hermitian_unitary(a, "A")
    b = require_hermitian_unitary(b, "B")
    rho = require_density(rho)
    _, _, p0, rho_v0 = _bound_pieces(rho, ch, b)
    g_p = _ancilla_pullback(a, part)
    t1 = float(np.trace(rho_v0 @ g_p).real)
    ww = np.kron(np.eye(2), ch.v0 @ dag(ch.v0))
    t2 = float(np.trace(rho_v0 @ g_p @ ww).real)
    factor = p0 if second_order_factor == "p0" else p0 * p0
    return 1.0 - p0, 2.0 * p0 * t1 - factor * t2


def correlator_bound(
    rho: np.ndarray,
    ch: KrausChannel,
    a: np.ndarray,
    b: np.ndarray,
    variant: str = "exact",
    part: str = "real",
) -> BoundReport:
    """Thermodynamic bound on one component of C(T).

    exact: Xi_B = Tr[rho_S^B (V_0^dag V_0)^-1] - 1 with rho_S^B the S marginal
    of the state entering the channel, and Q_{A,B} from the separable-baseline
    machinery with G the ancilla pullback of the readout Pauli. neumann1: the
    first-order surrogates of approx_bound_quantities. The interval half-width
    is sqrt(Xi_B) (variance of the unitary-Hermitian G capped at 1).
    """
    if variant not in ("exact", "neumann1"):
        raise ContractError(f"unknown variant {variant!r}")
    a = require_hermitian_unitary(a, "A")
    b = require_hermitian_unitary(b, "B")
    rho = require_density(rho)
    c = exact_correlator(rho, ch, a, b)
    c_part = c.real if part == "real" else c.imag
    g_p = _ancilla_pullback(a, part)
    if variant == "exact":
        _, rho_sb, p0, rho_v0 = _bound_pieces(rho, ch, b)
        w = dag(ch.v0) @ ch.v0
        xi_b = float(np.trace(rho_sb @ hermitian_inverse(w)).real) - 1.0
        q = _exact_q(rho_v0, p0, ch, g_p)
    else:
        xi_b, q = approx_bound_quantities(rho, ch, a, b, part=part)
    half = math.sqrt(max(xi_b, 0.0))
    lower, upper = q - half, q + half
    holds = (lower - TUR_SLACK) <= c_part <= (upper + TUR_SLACK)
    return BoundReport(
        correlator_real=c_part, q_ab=q, xi_b=xi_b, lower=lower, upper=upper,
        holds=holds, approx_variant=variant, part=part,
    )


def separable_tur_protocol_check(
    rho: np.ndarray,
    ch: KrausChannel,
    a: np.ndarray,
    b: np.ndarray,
    part: str = "real",
) -> TurReport:
    """Separable trade-off for the protocol observable G (Var[G] = 1 - <G>^2)."""
    bound = correlator_bound(rho, ch, a, b, variant="exact", part=part)
    mean = bound.correlator_real
    variance = 1.0 - mean * mean
    return _tur_report(mean, variance, bound.q_ab, bound.xi_b)


@dataclass(frozen=True)
class NestedRun:
    """Outcome of the nested postselection circuit."""

    value: float
    p_first: float    # Pr[E_1 = e0]
    p_second: float   # Pr[E_2 = e0 | E_1 = e0]


def nested_run(
    rho: np.ndarray,
    ch: KrausChannel,
    a: np.ndarray,
    b: np.ndarray,
    part: str = "real",
) -> NestedRun:
    """Simulate the nested circuit measuring Re Tr[rho^V0 G (V_0 V_0^dag)].

    Postselect E_1 = |e0> after the dilation to form rho^V0; attach a fresh
    ancilla in |+> and apply controlled-G; realize V_0^dag through the inverse
    dilation on a second environment; the joint expectation of sigma_x on the
    ancilla with the E_2 = |e0> projector is the nested term.
    """
    a = require_hermitian_unitary(a, "A")
    b = require_hermitian_unitary(b, "B")
    rho = require_density(rho)
    ch = ensure_dilation(ch)
    dil = ch.dilation
    d_s, d_e, e0 = ch.dim, dil.env_dim, dil.env_initial
    sigma_pb = _entry_state(rho, b)

    layout1 = SubsystemLayout((2, d_s, d_e), ("S'", "S", "E1"))
    env = outer(basis_vector(d_e, e0))
    omega1 = _conj(np.kron(np.eye(2), dil.unitary), np.kron(sigma_pb, env))
    block = project_factor(omega1, layout1, factor=2, index=e0)
    p_first = float(np.trace(block).real)
    if p_first <= P0_CUTOFF:
        raise DegenerateChannel(f"first postselection probability {p_first:.3e} is numerically zero")
    sigma1 = block / p_first

    plus = (basis_vector(2, 0) + basis_vector(2, 1)) / math.sqrt(2.0)
    tau = np.kron(outer(plus), sigma1)
    g_p = _ancilla_pullback(a, part)
    tau = _conj(controlled(g_p), tau)

    dims2 = (2, 2, d_s, d_e)
    u_back = embed_operator(dag(dil.unitary), dims2, (2, 3))
    omega2 = _conj(u_back, np.kron(tau, env))
    layout2 = SubsystemLayout(dims2, ("S2'", "S'", "S", "E2"))
    proj_e2 = embed_operator(outer(basis_vector(d_e, e0)), dims2, (3,))
    p_second = float(np.trace(omega2 @ proj_e2).real)
    if p_second <= P0_CUTOFF:
        raise DegenerateChannel(f"second postselection probability {p_second:.3e} is numerically zero")
    meas = embed_operator(SIGMA_X, dims2, (0,)) @ proj_e2
    value = float(np.trace(omega2 @ meas).real)
    return NestedRun(value=value, p_first=p_first, p_second=p_second)


def nested_expectation(
    rho: np.ndarray,
    ch: KrausChannel,
    a: np.ndarray,
    b: np.ndarray,
    part: str = "real",
) -> float:
    return nested_run(rho, ch, a, b, part=part).value


def nested_premeasure_state(
    rho: np.ndarray,
    ch: KrausChannel,
    a: np.ndarray,
    b: np.ndarray,
    part: str = "real",
) -> ProtocolState:
    """Full nested register (both environments kept) ready for sampling.

    Register order S2' (x) S' (x) S (x) E1 (x) E2. The sampled estimator of the
    nested term is the mean of sign(S2') * [E2 = e0] over shots with E1 = e0.
    """
    a = require_hermitian_unitary(a, "A")
    b = require_hermitian_unitary(b, "B")
    rho = require_density(rho)
    ch = ensure_dilation(ch)
    dil = ch.dilation
    d_s, d_e, e0 = ch.dim, dil.env_dim, dil.env_initial
    dims = (2, 2, d_s, d_e, d_e)
    layout = SubsystemLayout(dims, ("S2'", "S'", "S", "E1", "E2"))

    plus = (basis_vector(2, 0) + basis_vector(2, 1)) / math.sqrt(2.0)
    env = outer(basis_vector(d_e, e0))
    sigma = np.kron(np.kron(outer(plus), _entry_state(rho, b)), np.kron(env, env))
    sigma = _conj(embed_operator(dil.unitary, dims, (2, 3)), sigma)
    sigma = _conj(embed_operator(controlled(_ancilla_pullback(a, part)), dims, (0, 1, 2)), sigma)
    sigma = _conj(embed_operator(dag(dil.unitary), dims, (2, 4)), sigma)
    sigma = _conj(embed_operator(HADAMARD, dims, (0,)), sigma)
    return ProtocolState(layout, sigma, "premeasure")


@dataclass(frozen=True)
class ShotResult:
    """Multinomial counts over computational-basis outcomes of a premeasure state.

    Keys encode one fixed-width binary field per layout factor, slowest factor
    first (width = bits needed for that factor's dimension).
    """

    counts: dict[str, int]
    shots: int
    seed: tuple[int, ...]


def factor_bit_widths(layout: SubsystemLayout) -> tuple[int, ...]:
    return tuple(max(1, int(d - 1).bit_length()) for d in layout.dims)


def outcome_key(index: int, layout: SubsystemLayout) -> str:
    digits = []
    for d in reversed(layout.dims):
        index, r = divmod(index, d)
        digits.append(r)
    digits.reverse()
    widths = factor_bit_widths(layout)
    return "".join(format(v, f"0{w}b") for v, w in zip(digits, widths))


def key_digits(key: str, layout: SubsystemLayout) -> tuple[int, ...]:
    widths = factor_bit_widths(layout)
    out, pos = [], 0
    for w in widths:
        out.append(int(key[pos:pos + w], 2))
        pos += w
    return tuple(out)


def shot_rng(seed) -> np.random.Generator:
    """Counter-based (Philox) generator keyed by an integer or a tuple of them."""
    entropy = (seed,) if isinstance(seed, int) else tuple(int(s) for s in seed)
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))


def sample_shots(state: ProtocolState, shots: int, seed) -> ShotResult:
    """Deterministic multinomial draw over the premeasure outcome distribution."""
    if state.stage != "premeasure":
        raise ContractError(f"sampling requires a premeasure state, got stage {state.stage!r}")
    if shots < 1:
        raise ContractError("shots must be >= 1")
    probs = np.clip(np.diag(state.matrix).real, 0.0, None)
    probs = probs / probs.sum()
    rng = shot_rng(seed)
    draws = rng.multinomial(shots, probs)
    counts = {
        outcome_key(i, state.layout): int(n)
        for i, n in enumerate(draws)
        if n > 0
    }
    entropy = (seed,) if isinstance(seed, int) else tuple(int(s) for s in seed)
    return ShotResult(counts=counts, shots=int(shots), seed=entropy)
