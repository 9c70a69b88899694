"""Model-free policy iteration on discounted window integrals.

A behaviour policy (stabilizing gain plus sinusoidal exploration) runs once
while the simulator accumulates, per window [t, t+T], the discounted
integrals of the estimate outer products and of the observed tracking cost.
Those raw integrals are enough to evaluate *any* candidate policy: for the
gain K_k of iteration k, the Bellman identity along the behaviour
trajectory reads

    e^{-gamma T} phi(x(t+T))' Wc - phi(x(t))' Wc
        + sum_j 2 [ (I_xu - I_xx K_k') W ]_{:,j} . K_{k+1}[j, :]
    = - I_cost - trace(K_k' W K_k I_xx)

linear in the unknown critic weights Wc (quadratic value coefficients) and
the improved actor rows K_{k+1}.  Stacking windows and solving in the
least-squares sense reproduces, without touching the model matrices, the
exact policy-evaluation/policy-improvement step that
:func:`model_based_iterate` performs with them; the two routes agree to
quadrature accuracy, which is the main correctness check on the whole
pipeline.

All estimates come from the distributed observers, so the setup never
reads true plant states: x here is the concatenated (state estimate,
reference estimate) vector and the cost uses estimated outputs only.
"""

from __future__ import annotations

import dataclasses

import numpy as np

from .riccati import AugmentedSystem, solve_lyapunov

__all__ = [
    "ExcitationError",
    "LearnerConfig",
    "CriticWeights",
    "ActorWeights",
    "RawWindow",
    "SampleRow",
    "SampleBatch",
    "FollowerLearning",
    "LearningResult",
    "critic_basis",
    "weights_to_matrix",
    "matrix_to_weights",
    "make_exploration",
    "accumulator_rhs",
    "assemble_row",
    "collect_interval",
    "least_squares_update",
    "evaluate_policy",
    "policy_gain",
    "model_based_iterate",
    "minimum_samples",
    "run_off_policy",
]

_CONDITION_LIMIT = 1e8


class ExcitationError(RuntimeError):
    """Raised when a sample batch cannot support the least-squares update."""


@dataclasses.dataclass(frozen=True)
class LearnerConfig:
    """Knobs of the learning phase.

    window: integration interval T per sample.
    samples: per-follower row counts; None picks 2x the identifiable
        parameter count (critic plus actor entries).
    tolerance: stop when the stacked weight vector moves less than this.
    max_iterations: iteration cap before reporting non-convergence.
    noise_amplitude / noise_seed: exploration signal (sum of 10 sinusoids
        per input channel, frequencies uniform in [0.1, 10] rad/s).
    gate: all observer error norms must stay below this for one full
        window before data collection starts.
    initial_gain: per-follower behaviour gains on [x; eta]; None picks a
        stabilizing identity-weight design automatically.
    """

    window: float = 0.5
    samples: tuple[int, ...] | None = None
    tolerance: float = 1e-4
    max_iterations: int = 30
    noise_amplitude: float = 1.0
    noise_seed: int = 0
    gate: float = 1e-3
    initial_gain: tuple[np.ndarray, ...] | None = None


@dataclasses.dataclass(frozen=True)
class CriticWeights:
    """Coefficients of the quadratic value estimate in monomial order."""

    values: np.ndarray

    @property
    def matrix(self) -> np.ndarray:
        return weights_to_matrix(self.values)


@dataclasses.dataclass(frozen=True)
class ActorWeights:
    """Improved-policy coefficients; column j holds gain row j."""

    values: np.ndarray

    @property
    def gain(self) -> np.ndarray:
        return self.values.T


@dataclasses.dataclass(frozen=True)
class RawWindow:
    """Discounted integrals accumulated over one interval [t, t+T].

    start_features / end_features: critic basis of the estimate at the
    window endpoints; xx, xu: integrals of e^{-gamma (tau-t)} x x' and
    x u'; cost: integral of the discounted observed tracking cost.
    """

    start_features: np.ndarray
    end_features: np.ndarray
    xx: np.ndarray
    xu: np.ndarray
    cost: float


@dataclasses.dataclass(frozen=True)
class SampleRow:
    target: float
    features: np.ndarray
    window: RawWindow


@dataclasses.dataclass(frozen=True)
class SampleBatch:
    """Raw windows plus the interval length and discount they were taken with."""

    windows: tuple[RawWindow, ...]
    window_length: float
    discount: float

    def __len__(self) -> int:
        return len(self.windows)


def critic_basis(x: np.ndarray) -> np.ndarray:
    """Degree-2 monomials x_i x_j, i <= j, ordered (1,1), (1,2), ..., (n,n)."""
    x = np.asarray(x, dtype=float)
    outer = np.outer(x, x)
    iu = np.triu_indices(x.size)
    return outer[iu]


def weights_to_matrix(w: np.ndarray) -> np.ndarray:
    """Symmetric matrix P with x' P x = w . critic_basis(x); off-diagonals halved."""
    w = np.asarray(w, dtype=float)
    n = int(round((np.sqrt(8 * w.size + 1) - 1) / 2))
    if n * (n + 1) // 2 != w.size:
        raise ValueError(f"weight vector of length {w.size} is not triangular")
    P = np.zeros((n, n))
    P[np.triu_indices(n)] = w
    P = 0.5 * (P + P.T)
    return P


def matrix_to_weights(P: np.ndarray) -> np.ndarray:
    """Inverse of :func:`weights_to_matrix` for symmetric P."""
    P = np.asarray(P, dtype=float)
    scaled = P + P.T - np.diag(np.diag(P))
    return scaled[np.triu_indices(P.shape[0])]


@dataclasses.dataclass(frozen=True)
class ExplorationSignal:
    """Per-channel sum of 10 sinusoids; callable at a scalar time."""

    freqs: np.ndarray
    phases: np.ndarray
    amplitude: float

    def __call__(self, t: float) -> np.ndarray:
        return self.amplitude * np.sin(self.freqs * t + self.phases).sum(axis=1)

    def sample(self, t: np.ndarray) -> np.ndarray:
        """Vectorized evaluation: rows over `t`, columns over input channels."""
        t = np.asarray(t, dtype=float)
        args = t[:, None, None] * self.freqs[None, :, :] + self.phases[None, :, :]
        return self.amplitude * np.sin(args).sum(axis=2)


def make_exploration(n_inputs: int, amplitude: float, seed: int) -> ExplorationSignal:
    """Exploration signal with seeded frequencies in [0.1, 10] rad/s."""
    rng = np.random.default_rng(seed)
    return ExplorationSignal(
        freqs=rng.uniform(0.1, 10.0, size=(n_inputs, 10)),
        phases=rng.uniform(0.0, 2.0 * np.pi, size=(n_inputs, 10)),
        amplitude=float(amplitude),
    )


def accumulator_rhs(
    scale: float,
    x: np.ndarray,
    u: np.ndarray,
    err: np.ndarray,
    Q: np.ndarray,
    gamma: float,
) -> tuple[float, np.ndarray, np.ndarray, float]:
    """Derivatives of (discount scale, xx, xu, cost) running integrals.

    `scale` integrates e^{-gamma (tau - t0)} alongside the plant, so the
    quadrature error of the discounted integrals matches the integrator
    order instead of a sampled-exponential approximation.
    """
    return (
        -gamma * scale,
        scale * np.outer(x, x),
        scale * np.outer(x, u),
        scale * float(err @ Q @ err),
    )


def assemble_row(
    window: RawWindow,
    gain: np.ndarray,
    W: np.ndarray,
    gamma: float,
    window_length: float,
) -> tuple[float, np.ndarray]:
    """Target and feature vector of one Bellman row for evaluation gain K_k."""
    gain = np.atleast_2d(gain)
    W = np.atleast_2d(W)
    KWK = gain.T @ W @ gain
    target = -window.cost - float(np.sum(KWK * window.xx))
    delta = np.exp(-gamma * window_length) * window.end_features - window.start_features
    residual_xu = window.xu - window.xx @ gain.T
    actor_blocks = 2.0 * (residual_xu @ W)
    features = np.concatenate([delta, actor_blocks.flatten(order="F")])
    return target, features


def collect_interval(
    hook,
    gain: np.ndarray,
    W: np.ndarray,
    gamma: float,
    window_length: float,
) -> SampleRow:
    """Advance one window through `hook() -> RawWindow` and form its row."""
    window = hook()
    target, features = assemble_row(window, gain, W, gamma, window_length)
    return SampleRow(target=target, features=features, window=window)


def minimum_samples(n: int, p: int) -> int:
    """Identifiable parameter count: critic monomials plus actor entries."""
    return n * (n + 1) // 2 + p * n


def least_squares_update(
    batch: SampleBatch, gain: np.ndarray, W: np.ndarray
) -> tuple[CriticWeights, ActorWeights, float]:
    """One policy-evaluation/improvement step from data.

    Reassembles every stored window into a Bellman row for the current
    gain, equilibrates columns, and solves the stacked system by SVD-based
    least squares (never normal equations).  Returns the critic, the
    improved actor, and the condition number of the equilibrated system.

    Raises
    ------
    ValueError
        If the batch holds fewer rows than unknowns.
    ExcitationError
        If the regressor is rank deficient or its condition number
        exceeds 1e8; the caller should collect more windows.
    """
    gain = np.atleast_2d(gain)
    n = gain.shape[1]
    p = gain.shape[0]
    unknowns = minimum_samples(n, p)
    if len(batch) < unknowns:
        raise ValueError(
            f"batch has {len(batch)} windows but the update needs at least {unknowns}"
        )
    rows = [
        assemble_row(w, gain, W, batch.discount, batch.window_length)
        for w in batch.windows
    ]
    y = np.array([r[0] for r in rows])
    X = np.vstack([r[1] for r in rows])
    col_scale = np.linalg.norm(X, axis=0)
    if np.any(col_scale == 0.0):
        dead = int(np.argmin(col_scale))
        raise ExcitationError(
            f"insufficient excitation: regressor column {dead} is identically zero"
        )
    Xs = X / col_scale
    sol, _, rank, sv = np.linalg.lstsq(Xs, y, rcond=None)
    if rank < unknowns:
        raise ExcitationError(
            f"insufficient excitation: regressor rank {rank} < {unknowns} unknowns"
        )
    condition = float(sv[0] / sv[-1])
    if condition > _CONDITION_LIMIT:
        raise ExcitationError(
            f"insufficient excitation: condition number {condition:.3e} exceeds "
            f"{_CONDITION_LIMIT:.0e}; collect more windows"
        )
    sol = sol / col_scale
    n_critic = n * (n + 1) // 2
    critic = CriticWeights(values=sol[:n_critic])
    actor = ActorWeights(values=sol[n_critic:].reshape((p, n)).T)
    return critic, actor, condition


def evaluate_policy(
    gain: np.ndarray,
    aug: AugmentedSystem,
    Q: np.ndarray,
    W: np.ndarray,
    gamma: float,
) -> np.ndarray:
    """Value matrix of policy u = K x on the discounted cost (model-based).

    Solves (A + B K - gamma/2 I)' Psi + Psi (A + B K - gamma/2 I)
    + C' Q C + K' W K = 0; requires the shifted closed loop to be Hurwitz.
    """
    gain = np.atleast_2d(gain)
    closed = aug.A + aug.B @ gain - 0.5 * gamma * np.eye(aug.A.shape[0])
    if np.max(np.linalg.eigvals(closed).real) >= 0:
        raise ValueError("policy does not stabilize the discounted system")
    cost = aug.C.T @ np.atleast_2d(Q) @ aug.C + gain.T @ np.atleast_2d(W) @ gain
    return solve_lyapunov(closed, cost)


def policy_gain(Psi: np.ndarray, aug: AugmentedSystem, W: np.ndarray) -> np.ndarray:
    """Greedy improvement K = -W^{-1} B' Psi."""
    W = np.atleast_2d(W)
    return -np.linalg.solve(0.5 * (W + W.T), aug.B.T @ Psi)


def model_based_iterate(
    Psi: np.ndarray,
    aug: AugmentedSystem,
    Q: np.ndarray,
    W: np.ndarray,
    gamma: float,
) -> tuple[np.ndarray, np.ndarray]:
    """One exact policy-iteration step from the value matrix Psi.

    Improves Psi's greedy policy, re-evaluates it, and returns the new
    value matrix with the next gain; the optimal pair is its fixed point.
    Used as the oracle the data-driven update must reproduce.
    """
    K = policy_gain(Psi, aug, W)
    Psi_next = evaluate_policy(K, aug, Q, W, gamma)
    return Psi_next, policy_gain(Psi_next, aug, W)


@dataclasses.dataclass(frozen=True)
class FollowerLearning:
    """Learning outcome for one follower."""

    label: int
    gains: tuple[np.ndarray, ...]
    critics: tuple[np.ndarray, ...]
    converged: bool
    iterations: int
    condition: float
    reference_gap: float | None
    reason: str = ""

    @property
    def final_gain(self) -> np.ndarray:
        return self.gains[-1]


@dataclasses.dataclass(frozen=True)
class LearningResult:
    """Per-follower learning records plus the timing of the data phase."""

    followers: tuple[FollowerLearning, ...]
    gate_time: float
    switch_time: float
    data: "object"

    @property
    def all_converged(self) -> bool:
        return all(f.converged for f in self.followers)


def _iterate_batch(
    batch: SampleBatch,
    K0: np.ndarray,
    W: np.ndarray,
    tolerance: float,
    max_iterations: int,
) -> tuple[list[np.ndarray], list[np.ndarray], bool, int, float, str]:
    """Run the least-squares policy iteration to convergence on one batch."""
    n_critic = K0.shape[1] * (K0.shape[1] + 1) // 2
    prev = np.concatenate([np.zeros(n_critic), np.asarray(K0).flatten(order="C")])
    gain = np.asarray(K0, dtype=float)
    gains: list[np.ndarray] = []
    critics: list[np.ndarray] = []
    condition = float("nan")
    for k in range(1, max_iterations + 1):
        critic, actor, condition = least_squares_update(batch, gain, W)
        gain = actor.gain
        gains.append(gain)
        critics.append(critic.values)
        current = np.concatenate([critic.values, gain.flatten(order="C")])
        delta = float(np.linalg.norm(current - prev))
        prev = current
        if delta <= tolerance:
            return gains, critics, True, k, condition, ""
    return (
        gains,
        critics,
        False,
        max_iterations,
        condition,
        f"weight change above tolerance after {max_iterations} iterations",
    )


def run_off_policy(scenario, config: LearnerConfig | None = None) -> LearningResult:
    """Collect behaviour data once and learn every follower's gain from it.

    Delegates the simulation (behaviour policy, observers, accumulator
    windows) to the simulation module, then runs the batch policy
    iteration per follower.  Non-convergence and excitation failures are
    reported in the result rather than raised, so a caller can inspect
    partial progress; the reference gap against the model-based gain is
    attached whenever the scenario carries full model information.
    """
    from . import sim as _sim

    cfg = config if config is not None else scenario.learner
    data = _sim.collect_learning_data(scenario, cfg)
    records = []
    for i, batch in enumerate(data.batches):
        K0 = data.behavior_gains[i]
        W = data.effort_weights[i]
        if not data.gate_reached:
            gains, critics, ok, iters, cond = [K0], [], False, 0, float("inf")
            reason = "observer errors never settled below the learning gate"
        else:
            try:
                gains, critics, ok, iters, cond, reason = _iterate_batch(
                    batch, K0, W, cfg.tolerance, cfg.max_iterations
                )
            except ExcitationError as exc:
                full = data.batches_full[i]
                if len(full) > len(batch):
                    try:
                        gains, critics, ok, iters, cond, reason = _iterate_batch(
                            full, K0, W, cfg.tolerance, cfg.max_iterations
                        )
                    except ExcitationError as exc2:
                        gains, critics, ok, iters, cond, reason = (
                            [K0], [], False, 0, float("inf"), str(exc2),
                        )
                else:
                    gains, critics, ok, iters, cond, reason = (
                        [K0], [], False, 0, float("inf"), str(exc),
                    )
        ref = data.reference_gains[i]
        gap = None
        if ref is not None and gains:
            gap = float(np.linalg.norm(gains[-1] - ref))
        records.append(
            FollowerLearning(
                label=i + 1,
                gains=tuple(gains),
                critics=tuple(critics),
                converged=ok,
                iterations=iters,
                condition=cond,
                reference_gap=gap,
                reason=reason,
            )
        )
    return LearningResult(
        followers=tuple(records),
        gate_time=data.gate_time,
        switch_time=data.collection_end,
        data=data,
    )
