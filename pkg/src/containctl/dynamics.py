"""Agent models, regulator equations, and closed-loop assembly.

Followers are heterogeneous LTI systems x_i' = A_i x_i + B_i u_i,
y_i = C_i x_i; leaders share one autonomous model w' = S w, y = D w.
The regulator (Sylvester) pair

    Pi S = A Pi + B Gamma,          D = C Pi

links the two: a follower that drives its state onto Pi w and its input
onto Gamma w reproduces the leader output exactly.  The feed-forward gain
K2 = Gamma - K1 Pi turns any stabilizing state feedback K1 into an exact
output-tracking controller, and the closed-loop matrices assembled here
put plants, observers, and leader estimators into one LTI system whose
steady state certifies containment algebraically.
"""

from __future__ import annotations

import dataclasses

import numpy as np
import scipy.linalg

from .graph import Graph, laplacian_partition

__all__ = [
    "DimensionError",
    "RegulatorError",
    "FollowerModel",
    "LeaderModel",
    "RegulatorSolution",
    "GainSet",
    "AssumptionReport",
    "is_stabilizable",
    "is_detectable",
    "is_marginally_stable",
    "check_assumptions",
    "solve_regulator",
    "feedforward_gain",
    "closed_loop_matrices",
    "verify_output_regulation",
    "RegulationReport",
]


class DimensionError(ValueError):
    """Raised when agent matrices have inconsistent shapes."""


class RegulatorError(RuntimeError):
    """Raised when the regulator equations admit no solution."""


def _matrix(value, name: str) -> np.ndarray:
    arr = np.atleast_2d(np.asarray(value, dtype=float))
    if arr.ndim != 2:
        raise DimensionError(f"{name} must be a matrix, got shape {arr.shape}")
    return arr


@dataclasses.dataclass(frozen=True)
class FollowerModel:
    """One follower plant (A, B, C); `label` is the 1-based agent id."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    label: int = 0

    def __post_init__(self) -> None:
        A = _matrix(self.A, f"follower {self.label}: A")
        B = _matrix(self.B, f"follower {self.label}: B")
        C = _matrix(self.C, f"follower {self.label}: C")
        if B.shape == (1, A.shape[0]) and A.shape[0] > 1:
            B = B.T  # accept a single-input vector written as a row
        if A.shape[0] != A.shape[1]:
            raise DimensionError(f"follower {self.label}: A must be square, got {A.shape}")
        if B.shape[0] != A.shape[0]:
            raise DimensionError(
                f"follower {self.label}: B has {B.shape[0]} rows but A is "
                f"{A.shape[0]}x{A.shape[1]}"
            )
        if C.shape[1] != A.shape[0]:
            raise DimensionError(
                f"follower {self.label}: C has {C.shape[1]} columns but A is "
                f"{A.shape[0]}x{A.shape[1]}"
            )
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "C", C)

    @property
    def n_states(self) -> int:
        return self.A.shape[0]

    @property
    def n_inputs(self) -> int:
        return self.B.shape[1]

    @property
    def n_outputs(self) -> int:
        return self.C.shape[0]


@dataclasses.dataclass(frozen=True)
class LeaderModel:
    """The common leader exosystem (S, D)."""

    S: np.ndarray
    D: np.ndarray

    def __post_init__(self) -> None:
        S = _matrix(self.S, "leader: S")
        D = _matrix(self.D, "leader: D")
        if S.shape[0] != S.shape[1]:
            raise DimensionError(f"leader: S must be square, got {S.shape}")
        if D.shape[1] != S.shape[0]:
            raise DimensionError(
                f"leader: D has {D.shape[1]} columns but S is {S.shape[0]}x{S.shape[1]}"
            )
        object.__setattr__(self, "S", S)
        object.__setattr__(self, "D", D)

    @property
    def n_states(self) -> int:
        return self.S.shape[0]

    @property
    def n_outputs(self) -> int:
        return self.D.shape[0]


@dataclasses.dataclass(frozen=True)
class RegulatorSolution:
    """Solution (Pi, Gamma) of the regulator equations with its residual."""

    Pi: np.ndarray
    Gamma: np.ndarray
    residual: float
    unique: bool


@dataclasses.dataclass(frozen=True)
class GainSet:
    """Per-follower controller and observer gains plus consensus rates.

    K1/K2 are the feedback and feed-forward blocks wired into the control
    law u_i = K1_i xi_i + K2_i eta_i; F/mu the state-observer injection
    gains; Pi/Gamma the regulator solutions; beta* the leader-estimator
    consensus rates.  `optimal_gain` keeps the full discounted-cost gain
    [K1* K2*] (the learning target), `value_matrix` its quadratic value,
    `observer_value` the observer Riccati solutions, and `discount_limit`
    the per-follower discount upper bounds.
    """

    K1: tuple[np.ndarray, ...]
    K2: tuple[np.ndarray, ...]
    F: tuple[np.ndarray, ...]
    mu: tuple[float, ...]
    Pi: tuple[np.ndarray, ...]
    Gamma: tuple[np.ndarray, ...]
    beta: float = 1.0
    beta1: float = 1.0
    beta2: float = 1.0
    beta3: float = 1.0
    optimal_gain: tuple[np.ndarray, ...] | None = None
    value_matrix: tuple[np.ndarray, ...] | None = None
    observer_value: tuple[np.ndarray, ...] | None = None
    discount_limit: tuple[float, ...] | None = None


def _unctrl_eigs(A: np.ndarray, B: np.ndarray, tol: float) -> list[complex]:
    """Eigenvalues of A failing the rank test rank[A - lam I, B] = n."""
    n = A.shape[0]
    bad = []
    for lam in np.linalg.eigvals(A):
        M = np.hstack([A - lam * np.eye(n), B])
        if np.linalg.matrix_rank(M, tol=max(tol, tol * np.linalg.norm(M, 2))) < n:
            bad.append(lam)
    return bad


def is_stabilizable(A: np.ndarray, B: np.ndarray, tol: float = 1e-9) -> bool:
    """Rank test on every eigenvalue of A with real part >= -tol."""
    A = _matrix(A, "A")
    B = _matrix(B, "B")
    return all(lam.real < -tol for lam in _unctrl_eigs(A, B, tol))


def is_detectable(A: np.ndarray, C: np.ndarray, tol: float = 1e-9) -> bool:
    A = _matrix(A, "A")
    C = _matrix(C, "C")
    return is_stabilizable(A.T, C.T, tol)


def is_marginally_stable(S: np.ndarray, tol: float = 1e-9) -> bool:
    """No eigenvalue in the open right half-plane; imaginary-axis ones semisimple."""
    S = _matrix(S, "S")
    eigs = np.linalg.eigvals(S)
    if np.any(eigs.real > tol):
        return False
    scale = max(1.0, np.linalg.norm(S, 2))
    axis = [lam for lam in eigs if abs(lam.real) <= tol]
    remaining = list(axis)
    while remaining:
        lam = remaining[0]
        cluster = [mu for mu in remaining if abs(mu - lam) <= 1e-7 * scale]
        remaining = [mu for mu in remaining if abs(mu - lam) > 1e-7 * scale]
        algebraic = len(cluster)
        geometric = S.shape[0] - np.linalg.matrix_rank(
            S - lam * np.eye(S.shape[0]), tol=1e-9 * scale
        )
        if geometric < algebraic:
            return False
    return True


def _regulator_feasible(f: FollowerModel, leader: LeaderModel) -> bool:
    """Whether the regulator equations admit a unique solution pair.

    The classical non-resonance rank test asks for rank [[A - lam I, B],
    [C, 0]] = n + q on spec(S), but that requires at least as many inputs
    as outputs; followers with fewer inputs can still solve the equations
    for their specific leader output map.  Testing the stacked linear
    system directly covers both cases.
    """
    try:
        reg = solve_regulator(f, leader)
    except (RegulatorError, DimensionError):
        return False
    return reg.unique


@dataclasses.dataclass(frozen=True)
class AssumptionReport:
    """Per-follower feasibility flags plus the leader-side checks."""

    stabilizable: tuple[bool, ...]
    detectable: tuple[bool, ...]
    c_full_row_rank: tuple[bool, ...]
    regulator_feasible: tuple[bool, ...]
    leader_marginally_stable: bool
    d_full_row_rank: bool
    output_dims_consistent: bool

    @property
    def ok(self) -> bool:
        return (
            all(self.stabilizable)
            and all(self.detectable)
            and all(self.c_full_row_rank)
            and all(self.regulator_feasible)
            and self.leader_marginally_stable
            and self.d_full_row_rank
            and self.output_dims_consistent
        )


def check_assumptions(
    followers: list[FollowerModel], leader: LeaderModel
) -> AssumptionReport:
    """Run the solvability prechecks for every agent.

    Dimension mismatches raise immediately (naming the agent); the
    remaining checks are collected into a report so a caller can show
    every failure at once.
    """
    q = leader.n_outputs
    dims_ok = True
    for f in followers:
        if f.n_outputs != q:
            dims_ok = False
    return AssumptionReport(
        stabilizable=tuple(is_stabilizable(f.A, f.B) for f in followers),
        detectable=tuple(is_detectable(f.A, f.C) for f in followers),
        c_full_row_rank=tuple(
            np.linalg.matrix_rank(f.C) == f.n_outputs for f in followers
        ),
        regulator_feasible=tuple(_regulator_feasible(f, leader) for f in followers),
        leader_marginally_stable=is_marginally_stable(leader.S),
        d_full_row_rank=np.linalg.matrix_rank(leader.D) == leader.n_outputs,
        output_dims_consistent=dims_ok,
    )


def solve_regulator(f: FollowerModel, leader: LeaderModel) -> RegulatorSolution:
    """Solve Pi S = A Pi + B Gamma, D = C Pi by stacked least squares.

    Both equations are vectorized column-major into one linear system in
    (vec Pi, vec Gamma) and solved with an orthogonal factorization; the
    minimum-norm solution is returned when the system is underdetermined
    and `unique` records whether the coefficient matrix had full column
    rank.  A residual above 1e-8 means no solution exists and raises
    :class:`RegulatorError`.
    """
    if f.n_outputs != leader.n_outputs:
        raise DimensionError(
            f"follower {f.label}: C has {f.n_outputs} output rows but the leader "
            f"emits {leader.n_outputs}"
        )
    n, p, q = f.n_states, f.n_inputs, f.n_outputs
    r = leader.n_states
    I_n, I_r = np.eye(n), np.eye(r)
    # vec(Pi S) = (S^T kron I_n) vec Pi ; vec(A Pi) = (I_r kron A) vec Pi ; etc.
    top = np.hstack([np.kron(leader.S.T, I_n) - np.kron(I_r, f.A), -np.kron(I_r, f.B)])
    bottom = np.hstack([np.kron(I_r, f.C), np.zeros((q * r, p * r))])
    M = np.vstack([top, bottom])
    rhs = np.concatenate([np.zeros(n * r), leader.D.flatten(order="F")])
    z, _, rank, _ = np.linalg.lstsq(M, rhs, rcond=None)
    residual = float(np.linalg.norm(M @ z - rhs))
    if residual > 1e-8:
        raise RegulatorError(
            f"follower {f.label}: regulator equations are infeasible "
            f"(residual {residual:.3e}); the leader modes resonate with "
            "transmission zeros of the plant"
        )
    Pi = z[: n * r].reshape((n, r), order="F")
    Gamma = z[n * r :].reshape((p, r), order="F")
    return RegulatorSolution(Pi=Pi, Gamma=Gamma, residual=residual, unique=rank == M.shape[1])


def feedforward_gain(reg: RegulatorSolution, K1: np.ndarray) -> np.ndarray:
    """K2 = Gamma - K1 Pi, the exact-tracking feed-forward for feedback K1."""
    K1 = _matrix(K1, "K1")
    return reg.Gamma - K1 @ reg.Pi


def _block_diag(mats: list[np.ndarray]) -> np.ndarray:
    return scipy.linalg.block_diag(*mats)


def closed_loop_matrices(
    followers: list[FollowerModel],
    leader: LeaderModel,
    graph: Graph,
    gains: GainSet,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Assemble the aggregate closed loop over state (X, xi, eta).

    X stacks the plants, xi the state observers, eta the (static) leader
    estimators; the input is the stacked leader state and the output is
    the neighbourhood containment error e.  Returns (A_c, B_c, C_c, D_c).
    """
    n = graph.n_followers
    if len(followers) != n:
        raise DimensionError(f"expected {n} follower models, got {len(followers)}")
    part = laplacian_partition(graph)
    q, qbar = leader.n_outputs, leader.n_states
    A = _block_diag([f.A for f in followers])
    B = _block_diag([f.B for f in followers])
    C = _block_diag([f.C for f in followers])
    K1 = _block_diag([np.atleast_2d(k) for k in gains.K1])
    K2 = _block_diag([np.atleast_2d(k) for k in gains.K2])
    MF = _block_diag([m * np.atleast_2d(f) for m, f in zip(gains.mu, gains.F)])
    L1q = np.kron(part.L1, np.eye(q))
    inject = MF @ L1q @ C
    S_rep = np.kron(np.eye(n), leader.S)
    A_c = np.block(
        [
            [A, B @ K1, B @ K2],
            [inject, A + B @ K1 - inject, B @ K2],
            [np.zeros((n * qbar, 2 * A.shape[0])), S_rep - np.kron(part.L1, gains.beta * np.eye(qbar))],
        ]
    )
    B_c = np.vstack(
        [
            np.zeros((2 * A.shape[0], graph.m_leaders * qbar)),
            -np.kron(part.L2, gains.beta * np.eye(qbar)),
        ]
    )
    C_c = np.hstack(
        [L1q @ C, np.zeros((n * q, A.shape[0])), np.zeros((n * q, n * qbar))]
    )
    D_c = np.kron(part.L2, leader.D)
    return A_c, B_c, C_c, D_c


@dataclasses.dataclass(frozen=True)
class RegulationReport:
    """Residuals of the steady-state containment identities."""

    X_c: np.ndarray
    residual_dynamics: float
    residual_output: float

    @property
    def passed(self) -> bool:
        return self.residual_dynamics <= 1e-6 and self.residual_output <= 1e-6


def verify_output_regulation(
    A_c: np.ndarray,
    B_c: np.ndarray,
    C_c: np.ndarray,
    D_c: np.ndarray,
    followers: list[FollowerModel],
    leader: LeaderModel,
    graph: Graph,
) -> RegulationReport:
    """Check the steady-state map X_c solves A_c X_c + B_c = X_c S_bar, C_c X_c + D_c = 0.

    X_c is built from the regulator solutions: with W = (L1^{-1} L2) kron I
    and Pi = blockdiag(Pi_i), the candidate [-Pi W; -Pi W; -W] satisfies
    both identities exactly whenever the wired gains obey the feed-forward
    relation K2 = Gamma - K1 Pi.  A wrong feed-forward shows up as a
    residual of order of the gain error.
    """
    part = laplacian_partition(graph)
    qbar = leader.n_states
    W = np.kron(-part.containment_weights, np.eye(qbar))
    Pi = _block_diag([solve_regulator(f, leader).Pi for f in followers])
    X_c = np.vstack([-Pi @ W, -Pi @ W, -W])
    S_bar = np.kron(np.eye(graph.m_leaders), leader.S)
    res_dyn = float(np.linalg.norm(A_c @ X_c + B_c - X_c @ S_bar))
    res_out = float(np.linalg.norm(C_c @ X_c + D_c))
    return RegulationReport(X_c=X_c, residual_dynamics=res_dyn, residual_output=res_out)
