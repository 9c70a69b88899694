"""Riccati-based gain synthesis.

Everything here reduces to one continuous-time algebraic Riccati equation

    A' X + X A + Q - X B R^{-1} B' X = 0

solved for its stabilizing solution by Newton-Kleinman iteration: starting
from any gain K0 that makes A - B K0 Hurwitz, each step solves the Lyapunov
equation of the current closed loop and re-derives the gain, converging
quadratically and monotonically from above.  The initial gain comes from a
staircase controllability decomposition followed by Bass's eigenvalue-shift
construction, so only stabilizability (not controllability) is required.

Three synthesis front ends are built on the solver:

* observer_synthesis - injection gains from the dual (transposed) equation;
* discounted_are     - optimal feedback for a discounted quadratic output
  cost on the plant/reference aggregate, obtained exactly as the standard
  equation on the shifted state matrix A - (gamma/2) I;
* coupling_bound / discount_bound - the scalar thresholds that keep the
  distributed interconnection and the discount factor inside their
  stability margins.
"""

from __future__ import annotations

import dataclasses
import warnings

import numpy as np

from .dynamics import DimensionError, FollowerModel, LeaderModel, _matrix, is_stabilizable

__all__ = [
    "RiccatiError",
    "CareSolution",
    "AugmentedSystem",
    "DiscountedSolution",
    "solve_sylvester_kron",
    "solve_lyapunov",
    "controllable_subspace",
    "stabilizing_gain",
    "solve_care",
    "observer_synthesis",
    "coupling_bound",
    "augment",
    "discounted_are",
    "discount_bound",
]


class RiccatiError(RuntimeError):
    """Raised when no stabilizing solution exists or the iteration fails."""


@dataclasses.dataclass(frozen=True)
class CareSolution:
    """Stabilizing Riccati solution with the iteration trace.

    `history` holds every Newton iterate (monotonically nonincreasing in
    the semidefinite order); `residual` is the Frobenius norm of the
    equation evaluated at X.
    """

    X: np.ndarray
    residual: float
    iterations: int
    history: tuple[np.ndarray, ...]


def solve_sylvester_kron(A: np.ndarray, B: np.ndarray, C: np.ndarray) -> np.ndarray:
    """Solve A X + X B = C through the Kronecker-vectorized linear system."""
    A, B, C = (np.asarray(M, dtype=float) for M in (A, B, C))
    n, m = A.shape[0], B.shape[1]
    lhs = np.kron(np.eye(m), A) + np.kron(B.T, np.eye(n))
    try:
        x = np.linalg.solve(lhs, C.flatten(order="F"))
    except np.linalg.LinAlgError as exc:
        raise RiccatiError(f"singular Sylvester operator: {exc}") from exc
    return x.reshape((n, m), order="F")


def solve_lyapunov(A: np.ndarray, Q: np.ndarray) -> np.ndarray:
    """Solve A' X + X A + Q = 0; unique and symmetric when A is Hurwitz."""
    X = solve_sylvester_kron(A.T, A, -np.asarray(Q, dtype=float))
    return 0.5 * (X + X.T)


def controllable_subspace(
    A: np.ndarray, B: np.ndarray, tol: float = 1e-9
) -> tuple[int, np.ndarray]:
    """Orthonormal basis ordering the controllable subspace first.

    Returns (r, U) where the first r columns of the orthogonal U span
    range [B, AB, ..., A^{n-1} B]; in that basis A is block upper
    triangular with the controllable pair in the leading block.
    """
    A = _matrix(A, "A")
    B = _matrix(B, "B")
    n = A.shape[0]
    blocks = [B]
    for _ in range(n - 1):
        blocks.append(A @ blocks[-1])
    krylov = np.hstack(blocks)
    U, s, _ = np.linalg.svd(krylov, full_matrices=True)
    r = int(np.sum(s > tol * max(s[0], 1e-300))) if s.size else 0
    return r, U


def stabilizing_gain(A: np.ndarray, B: np.ndarray, tol: float = 1e-9) -> np.ndarray:
    """Any K with A - B K Hurwitz, or :class:`RiccatiError` if none exists.

    Uncontrollable modes are split off by the staircase decomposition and
    must already be stable; on the controllable block the Bass recipe
    (shift by beta = ||A||_F + 1, solve one Lyapunov equation, invert)
    produces a certified stabilizing gain without pole-placement
    machinery.
    """
    A = _matrix(A, "A")
    B = _matrix(B, "B")
    n, p = A.shape[0], B.shape[1]
    if np.max(np.linalg.eigvals(A).real) < -tol:
        return np.zeros((p, n))
    r, U = controllable_subspace(A, B, tol)
    At = U.T @ A @ U
    Bt = U.T @ B
    if r < n:
        tail = np.linalg.eigvals(At[r:, r:])
        worst = float(np.max(tail.real)) if tail.size else -np.inf
        if worst >= -tol:
            raise RiccatiError(
                f"pair is not stabilizable: uncontrollable mode with Re(lambda) = {worst:.3e}"
            )
    if r == 0:
        raise RiccatiError("pair is not stabilizable: no controllable subspace")
    A11, B1 = At[:r, :r], Bt[:r]
    beta = float(np.linalg.norm(A11)) + 1.0
    M = A11 + beta * np.eye(r)
    Z = solve_sylvester_kron(M, M.T, 2.0 * B1 @ B1.T)
    Z = 0.5 * (Z + Z.T)
    try:
        Kc = np.linalg.solve(Z, B1).T
    except np.linalg.LinAlgError as exc:
        raise RiccatiError(f"controllable block produced a singular Gramian: {exc}") from exc
    K = np.hstack([Kc, np.zeros((p, n - r))]) @ U.T
    closed = np.max(np.linalg.eigvals(A - B @ K).real)
    if closed >= 0:
        raise RiccatiError(
            f"stabilizing-gain construction failed numerically (Re(lambda) = {closed:.3e})"
        )
    return K


def solve_care(
    A: np.ndarray,
    Q: np.ndarray,
    B: np.ndarray,
    R: np.ndarray,
    tol: float = 1e-9,
    max_iter: int = 100,
) -> CareSolution:
    """Stabilizing solution of A' X + X A + Q - X B R^{-1} B' X = 0.

    Existence is pre-checked through the Hamiltonian spectrum (an
    imaginary-axis eigenvalue rules out a stabilizing solution); the
    Newton-Kleinman iteration then refines from a Bass initial gain until
    the Frobenius residual drops below `tol`.

    Raises
    ------
    RiccatiError
        If R is not positive definite, the pair is not stabilizable, the
        Hamiltonian has imaginary-axis eigenvalues, or the iteration fails
        to reach `tol` within `max_iter` steps (the message carries the
        last residual).
    """
    A = _matrix(A, "A")
    Q = _matrix(Q, "Q")
    B = _matrix(B, "B")
    R = _matrix(R, "R")
    n = A.shape[0]
    if Q.shape != (n, n):
        raise DimensionError(f"Q must be {n}x{n}, got {Q.shape}")
    if B.shape[0] != n:
        raise DimensionError(f"B has {B.shape[0]} rows but A is {n}x{n}")
    if R.shape != (B.shape[1], B.shape[1]):
        raise DimensionError(f"R must be {B.shape[1]}x{B.shape[1]}, got {R.shape}")
    try:
        np.linalg.cholesky(0.5 * (R + R.T))
    except np.linalg.LinAlgError:
        raise RiccatiError("R must be positive definite")
    Q = 0.5 * (Q + Q.T)
    R = 0.5 * (R + R.T)

    G = B @ np.linalg.solve(R, B.T)
    H = np.block([[A, -G], [-Q, -A.T]])
    ham = np.linalg.eigvals(H)
    axis_tol = 1e-9 * max(1.0, float(np.linalg.norm(H)))
    if np.min(np.abs(ham.real)) < axis_tol:
        raise RiccatiError(
            "no stabilizing solution: Hamiltonian eigenvalue on the imaginary axis "
            f"(min |Re| = {np.min(np.abs(ham.real)):.3e})"
        )

    K = stabilizing_gain(A, B, tol=1e-9)
    history: list[np.ndarray] = []
    X = np.zeros((n, n))
    residual = np.inf
    for iteration in range(1, max_iter + 1):
        Acl = A - B @ K
        X = solve_lyapunov(Acl, Q + K.T @ R @ K)
        history.append(X)
        K = np.linalg.solve(R, B.T @ X)
        residual = float(np.linalg.norm(A.T @ X + X @ A + Q - X @ G @ X))
        if residual <= tol:
            break
    else:
        raise RiccatiError(
            f"Newton iteration did not converge in {max_iter} steps "
            f"(last residual {residual:.3e})"
        )
    closed = float(np.max(np.linalg.eigvals(A - G @ X).real))
    if closed >= 0:
        raise RiccatiError(
            f"converged to a non-stabilizing solution (Re(lambda) = {closed:.3e})"
        )
    return CareSolution(X=X, residual=residual, iterations=iteration, history=tuple(history))


def observer_synthesis(
    f: FollowerModel, E: np.ndarray, R: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Injection gain F = Phi C' R^{-1} from the dual Riccati equation.

    Phi solves A Phi + Phi A' + E - Phi C' R^{-1} C Phi = 0 (the transposed
    counterpart of the control equation), so A - F C is Hurwitz whenever
    (A, C) is detectable and E is positive semidefinite.
    """
    E = _matrix(E, f"follower {f.label}: E")
    R = _matrix(R, f"follower {f.label}: R")
    if E.shape != (f.n_states, f.n_states):
        raise DimensionError(
            f"follower {f.label}: E must be {f.n_states}x{f.n_states}, got {E.shape}"
        )
    if R.shape != (f.n_outputs, f.n_outputs):
        raise DimensionError(
            f"follower {f.label}: R must be {f.n_outputs}x{f.n_outputs}, got {R.shape}"
        )
    sol = solve_care(f.A.T, E, f.C.T, R)
    Phi = sol.X
    F = np.linalg.solve(R, f.C @ Phi).T
    return Phi, F


def coupling_bound(L1: np.ndarray) -> float:
    """Smallest admissible observer coupling 1 / (2 min Re(lambda(L1)))."""
    L1 = _matrix(L1, "L1")
    lam_min = float(np.min(np.linalg.eigvals(L1).real))
    if lam_min <= 0:
        raise ValueError(
            "follower Laplacian block must have spectrum in the open right "
            f"half-plane (min Re(lambda) = {lam_min:.3e})"
        )
    return 1.0 / (2.0 * lam_min)


@dataclasses.dataclass(frozen=True)
class AugmentedSystem:
    """Joint plant/reference system: A = blkdiag(A_i, S), B = [B_i; 0], C = [C_i, -D].

    Its output is the tracking error y_i - y_ref, so a quadratic output
    cost on this system is exactly the containment tracking cost.
    `n_plant` marks where the plant block ends, splitting any gain row
    into feedback and feed-forward parts.
    """

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    n_plant: int


def augment(f: FollowerModel, leader: LeaderModel) -> AugmentedSystem:
    """Stack one follower with the leader reference model."""
    if f.n_outputs != leader.n_outputs:
        raise DimensionError(
            f"follower {f.label}: C has {f.n_outputs} output rows but the leader "
            f"emits {leader.n_outputs}"
        )
    n, r = f.n_states, leader.n_states
    A = np.block([[f.A, np.zeros((n, r))], [np.zeros((r, n)), leader.S]])
    B = np.vstack([f.B, np.zeros((r, f.n_inputs))])
    C = np.hstack([f.C, -leader.D])
    return AugmentedSystem(A=A, B=B, C=C, n_plant=n)


@dataclasses.dataclass(frozen=True)
class DiscountedSolution:
    """Value matrix and optimal gain of the discounted output-cost problem."""

    value: np.ndarray
    gain: np.ndarray
    n_plant: int
    care: CareSolution

    @property
    def feedback(self) -> np.ndarray:
        return self.gain[:, : self.n_plant]

    @property
    def feedforward(self) -> np.ndarray:
        return self.gain[:, self.n_plant :]


def discounted_are(
    aug: AugmentedSystem, Q: np.ndarray, W: np.ndarray, gamma: float
) -> DiscountedSolution:
    """Optimal gain for cost int e^{-gamma t} (y - y_ref)' Q (y - y_ref) + u' W u dt.

    Substituting the output map turns the discounted problem into the
    standard equation on the shifted matrix A - (gamma/2) I with state
    cost C' Q C; the optimal gain is K = -W^{-1} B' Psi with Psi the
    stabilizing solution.  Q must be positive definite on the output
    space and gamma nonnegative (gamma below the :func:`discount_bound`
    threshold keeps the true closed loop stable, not just the shifted
    one).
    """
    Q = _matrix(Q, "Q")
    W = _matrix(W, "W")
    q = aug.C.shape[0]
    if Q.shape != (q, q):
        raise DimensionError(f"Q must be {q}x{q} (output weight), got {Q.shape}")
    if gamma < 0:
        raise ValueError(f"discount factor must be nonnegative, got {gamma}")
    try:
        np.linalg.cholesky(0.5 * (Q + Q.T))
    except np.linalg.LinAlgError:
        raise RiccatiError("Q must be positive definite")
    shifted = aug.A - 0.5 * gamma * np.eye(aug.A.shape[0])
    if not is_stabilizable(shifted, aug.B):
        warnings.warn(
            "shifted plant/reference pair is not stabilizable; the discounted "
            "equation has no stabilizing solution",
            RuntimeWarning,
            stacklevel=2,
        )
    state_cost = aug.C.T @ Q @ aug.C
    care = solve_care(shifted, state_cost, aug.B, W)
    gain = -np.linalg.solve(0.5 * (W + W.T), aug.B.T @ care.X)
    return DiscountedSolution(value=care.X, gain=gain, n_plant=aug.n_plant, care=care)


def discount_bound(
    aug: AugmentedSystem, Q: np.ndarray, W: np.ndarray, interpretation: str = "output"
) -> float:
    """Upper limit on the admissible discount factor.

    The `output` interpretation bounds gamma by
    2 sqrt(max |lambda(B W^{-1} B' C' Q C)|); `scalar` replaces the output
    weight by its spectral norm, 2 sqrt(lambda_max(B W^{-1} B') ||Q||).
    Both coincide for scalar systems with unit output map.
    """
    Q = _matrix(Q, "Q")
    W = _matrix(W, "W")
    G = aug.B @ np.linalg.solve(0.5 * (W + W.T), aug.B.T)
    if interpretation == "output":
        M = G @ (aug.C.T @ Q @ aug.C)
        return float(2.0 * np.sqrt(np.max(np.abs(np.linalg.eigvals(M))))) if M.size else 0.0
    if interpretation == "scalar":
        lam = float(np.max(np.linalg.eigvalsh(0.5 * (G + G.T))))
        return float(2.0 * np.sqrt(max(lam, 0.0) * np.linalg.norm(Q, 2)))
    raise ValueError(f"unknown interpretation {interpretation!r}")
