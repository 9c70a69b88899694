"""Fixed-step simulation of the full containment loop.

One flat state vector carries plants, leaders, state observers, leader
estimators, and (while learning) the discounted running integrals; a named
block layout maps every slice.  Integration is classic RK4 on a uniform
grid: deterministic, free of adaptive-step event artifacts, and accurate to
O(h^4), which the tests verify against matrix-exponential flows.

`run_scenario` wires the pieces for two modes: "offline" applies the
synthesized gains u_i = K1_i xi_i + K2_i eta_i from the start, while "rl"
runs a behaviour policy with exploration noise, waits for the observer
errors to settle below the learning gate, collects discounted window
integrals, learns the gains by off-policy iteration, and switches to them
for the remainder of the horizon.
"""

from __future__ import annotations

import dataclasses
import itertools

import numpy as np

from . import observers as _obs
from . import rl as _rl
from .dynamics import FollowerModel, GainSet, LeaderModel, feedforward_gain, solve_regulator
from .graph import Graph, laplacian_partition
from .riccati import (
    augment,
    discount_bound,
    discounted_are,
    observer_synthesis,
    solve_care,
)
from .scenario import Scenario, scenario_from_dict

__all__ = [
    "SimulationAbort",
    "StateLayout",
    "Trajectory",
    "integrate",
    "hull_distance",
    "ContainmentError",
    "containment_error",
    "synthesize_gains",
    "behavior_gain",
    "LearningData",
    "collect_learning_data",
    "SimulationResult",
    "run_scenario",
    "paper_scenario",
]


class SimulationAbort(RuntimeError):
    """Raised when the state leaves the finite range; names time and block."""

    def __init__(self, time: float, block: str):
        self.time = time
        self.block = block
        super().__init__(f"non-finite state in block '{block}' at t = {time:.6f}")


class StateLayout:
    """Ordered named blocks of one flat state vector.

    Blocks are (name, size) pairs laid out contiguously; slices are
    disjoint by construction and cover the whole vector.
    """

    def __init__(self, blocks: list[tuple[str, int]]):
        self.blocks = tuple((str(name), int(size)) for name, size in blocks)
        self._slices: dict[str, slice] = {}
        offset = 0
        for name, size in self.blocks:
            if name in self._slices:
                raise ValueError(f"duplicate block name {name!r}")
            if size < 1:
                raise ValueError(f"block {name!r} must have positive size, got {size}")
            self._slices[name] = slice(offset, offset + size)
            offset += size
        self.dim = offset

    def slice(self, name: str) -> slice:
        return self._slices[name]

    def __contains__(self, name: str) -> bool:
        return name in self._slices

    def names(self) -> tuple[str, ...]:
        return tuple(name for name, _ in self.blocks)


@dataclasses.dataclass(frozen=True)
class Trajectory:
    """Uniform-grid trajectory: states row per step plus derived channels.

    `channels` is filled by the scenario runner with outputs, estimates,
    containment errors, inputs, and the five observer error norms keyed
    'y', 'yhat', 'y0hat', 'y_leaders', 'e', 'ebar', 'u', 'err_xi',
    'err_eta', 'err_S', 'err_D', 'err_y0'.
    """

    t: np.ndarray
    states: np.ndarray
    layout: StateLayout
    channels: dict = dataclasses.field(default_factory=dict)

    def block(self, name: str) -> np.ndarray:
        return self.states[:, self.layout.slice(name)]


def integrate(
    rhs,
    state0: np.ndarray,
    step: float,
    duration: float,
    t0: float = 0.0,
    layout: StateLayout | None = None,
) -> Trajectory:
    """Classic RK4 over a uniform grid t0 + k*step, k = 0..duration/step.

    `duration` must be an integer multiple of `step` (to 1e-9 relative);
    every accepted state is checked finite and a violation raises
    :class:`SimulationAbort` naming the offending block.
    """
    state0 = np.asarray(state0, dtype=float)
    n_steps = int(round(duration / step))
    if abs(n_steps * step - duration) > 1e-9 * max(1.0, abs(duration)):
        raise ValueError(
            f"duration {duration} is not an integer multiple of step {step}"
        )
    states = np.empty((n_steps + 1, state0.size))
    states[0] = state0
    v = state0.copy()
    half = 0.5 * step
    sixth = step / 6.0
    for k in range(n_steps):
        tk = t0 + k * step
        k1 = rhs(tk, v)
        k2 = rhs(tk + half, v + half * k1)
        k3 = rhs(tk + half, v + half * k2)
        k4 = rhs(tk + step, v + step * k3)
        v = v + sixth * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(v)):
            block = "state"
            if layout is not None:
                for name, _ in layout.blocks:
                    if not np.all(np.isfinite(v[layout.slice(name)])):
                        block = name
                        break
            raise SimulationAbort(tk + step, block)
        states[k + 1] = v
    t = t0 + step * np.arange(n_steps + 1)
    return Trajectory(t=t, states=states, layout=layout or StateLayout([("state", state0.size)]))


def hull_distance(point: np.ndarray, vertices: np.ndarray, tol: float = 1e-9) -> float:
    """Euclidean distance from `point` to the convex hull of `vertices` rows.

    Solves min ||V' a - p|| over the simplex by enumerating candidate
    active sets: for every nonempty vertex subset the equality-constrained
    least-squares (sum a = 1) is solved exactly and feasible candidates
    (a >= -tol) are compared.  The optimizer's support is one of the
    subsets, so the minimum over feasible candidates is exact; intended
    for the few-leader case, where 2^m stays tiny.
    """
    p = np.asarray(point, dtype=float).ravel()
    V = np.atleast_2d(np.asarray(vertices, dtype=float))
    m = V.shape[0]
    best = np.inf
    for size in range(1, m + 1):
        for subset in itertools.combinations(range(m), size):
            A = V[list(subset)].T  # (q, size)
            KKT = np.zeros((size + 1, size + 1))
            KKT[:size, :size] = 2.0 * A.T @ A
            KKT[:size, size] = 1.0
            KKT[size, :size] = 1.0
            rhs = np.concatenate([2.0 * A.T @ p, [1.0]])
            sol, *_ = np.linalg.lstsq(KKT, rhs, rcond=None)
            alpha = sol[:size]
            if abs(alpha.sum() - 1.0) > 1e-9 or np.any(alpha < -tol):
                continue
            best = min(best, float(np.linalg.norm(A @ alpha - p)))
    return best


@dataclasses.dataclass(frozen=True)
class ContainmentError:
    """Stacked neighbourhood error e, hull error ebar, and hull distances."""

    e: np.ndarray
    ebar: np.ndarray
    distances: np.ndarray


def containment_error(
    y_followers: np.ndarray, y_leaders: np.ndarray, part
) -> ContainmentError:
    """Containment errors at one instant from stacked output rows.

    ebar_i = y_i - sum_k w_ik y_k (leader hull weights w = -L1^{-1} L2),
    e = (L1 kron I) ebar, and distances_i is the exact Euclidean distance
    from y_i to the hull of all leader outputs.
    """
    Y = np.atleast_2d(np.asarray(y_followers, dtype=float))
    YL = np.atleast_2d(np.asarray(y_leaders, dtype=float))
    ebar = Y - part.containment_weights @ YL
    e = part.L1 @ ebar
    dists = np.array([hull_distance(y, YL) for y in Y])
    return ContainmentError(e=e.ravel(), ebar=ebar.ravel(), distances=dists)


def behavior_gain(f: FollowerModel, leader: LeaderModel) -> np.ndarray:
    """Default exploration-phase gain: identity-weight state feedback, zero feed-forward."""
    X = solve_care(f.A, np.eye(f.n_states), f.B, np.eye(f.n_inputs)).X
    K_fb = -f.B.T @ X
    return np.hstack([K_fb, np.zeros((f.n_inputs, leader.n_states))])


def synthesize_gains(scenario: Scenario) -> GainSet:
    """Offline synthesis of every gain in the architecture.

    Per follower: regulator solution (Pi, Gamma); observer injection F
    from the noise-weighted dual Riccati equation; discounted optimal
    feedback K1 (the leading block of the joint plant/reference gain);
    exact-tracking feed-forward K2 = Gamma - K1 Pi.  The full discounted
    gain, its value matrix, the observer value matrices, and the discount
    upper bounds ride along for validation, reporting, and as the
    learning reference.
    """
    obs, costs = scenario.observers, scenario.weights
    K1s, K2s, Fs, Pis, Gammas = [], [], [], [], []
    opts, values, phis, limits = [], [], [], []
    for i, f in enumerate(scenario.followers):
        reg = solve_regulator(f, scenario.leader)
        Phi, F = observer_synthesis(f, obs.E[i], obs.R[i])
        aug = augment(f, scenario.leader)
        dsol = discounted_are(aug, costs.Q[i], costs.W[i], costs.gamma[i])
        K1 = dsol.feedback
        K1s.append(K1)
        K2s.append(feedforward_gain(reg, K1))
        Fs.append(F)
        Pis.append(reg.Pi)
        Gammas.append(reg.Gamma)
        opts.append(dsol.gain)
        values.append(dsol.value)
        phis.append(Phi)
        limits.append(discount_bound(aug, costs.Q[i], costs.W[i]))
    return GainSet(
        K1=tuple(K1s),
        K2=tuple(K2s),
        F=tuple(Fs),
        mu=tuple(obs.mu),
        Pi=tuple(Pis),
        Gamma=tuple(Gammas),
        beta=obs.beta,
        beta1=obs.beta1,
        beta2=obs.beta2,
        beta3=obs.beta3,
        optimal_gain=tuple(opts),
        value_matrix=tuple(values),
        observer_value=tuple(phis),
        discount_limit=tuple(limits),
    )


class _Wiring:
    """Precomputed layout, slices, and coupling data for one scenario."""

    def __init__(self, scenario: Scenario, gains: GainSet, learning: bool):
        self.scenario = scenario
        self.gains = gains
        self.learning = learning
        g = scenario.graph
        leader = scenario.leader
        self.n = g.n_followers
        self.m = g.m_leaders
        self.q = leader.n_outputs
        self.qbar = leader.n_states
        self.adaptive = scenario.observers.leader_estimator == "adaptive"
        self.part = laplacian_partition(g)
        self.leader_ids = tuple(range(self.n + 1, self.n + self.m + 1))

        blocks: list[tuple[str, int]] = []
        for i, f in enumerate(scenario.followers, start=1):
            blocks.append((f"x{i}", f.n_states))
        for k in self.leader_ids:
            blocks.append((f"w{k}", self.qbar))
        for i, f in enumerate(scenario.followers, start=1):
            blocks.append((f"xi{i}", f.n_states))
        for i in range(1, self.n + 1):
            blocks.append((f"eta{i}", self.qbar))
        if self.adaptive:
            for i in range(1, self.n + 1):
                blocks.append((f"S{i}", self.qbar * self.qbar))
            for i in range(1, self.n + 1):
                blocks.append((f"D{i}", self.q * self.qbar))
        if learning:
            for i, f in enumerate(scenario.followers, start=1):
                naug = f.n_states + self.qbar
                blocks.append((f"disc{i}", 1))
                blocks.append((f"ixx{i}", naug * naug))
                blocks.append((f"ixu{i}", naug * f.n_inputs))
                blocks.append((f"cost{i}", 1))
        self.layout = StateLayout(blocks)

        L = self.layout
        self.sx = [L.slice(f"x{i}") for i in range(1, self.n + 1)]
        self.sw = [L.slice(f"w{k}") for k in self.leader_ids]
        self.sxi = [L.slice(f"xi{i}") for i in range(1, self.n + 1)]
        self.seta = [L.slice(f"eta{i}") for i in range(1, self.n + 1)]
        if self.adaptive:
            self.sS = [L.slice(f"S{i}") for i in range(1, self.n + 1)]
            self.sD = [L.slice(f"D{i}") for i in range(1, self.n + 1)]
        if learning:
            self.sdisc = [L.slice(f"disc{i}") for i in range(1, self.n + 1)]
            self.sixx = [L.slice(f"ixx{i}") for i in range(1, self.n + 1)]
            self.sixu = [L.slice(f"ixu{i}") for i in range(1, self.n + 1)]
            self.scost = [L.slice(f"cost{i}") for i in range(1, self.n + 1)]

        offsets = [0]
        for f in scenario.followers:
            offsets.append(offsets[-1] + f.n_inputs)
        self.input_offsets = tuple(offsets)

    def initial_state(self) -> np.ndarray:
        """Plants from the scenario (seeded-uniform where unset), estimators at zero."""
        s = self.scenario
        obs = s.observers
        v = np.zeros(self.layout.dim)
        rng = np.random.default_rng(s.sim.seed)
        for i, f in enumerate(s.followers):
            x0 = s.follower_init[i]
            if x0 is None:
                x0 = rng.uniform(-1.0, 1.0, f.n_states)
            v[self.sx[i]] = x0
        for k, w0 in enumerate(s.leader_init):
            v[self.sw[k]] = w0
        for i in range(self.n):
            if obs.init_xi is not None:
                v[self.sxi[i]] = obs.init_xi[i]
            if obs.init_eta is not None:
                v[self.seta[i]] = obs.init_eta[i]
            if self.adaptive:
                if obs.init_S is not None:
                    v[self.sS[i]] = obs.init_S[i].ravel()
                if obs.init_D is not None:
                    v[self.sD[i]] = obs.init_D[i].ravel()
        return v

    def reset_accumulators(self, v: np.ndarray) -> None:
        for i in range(self.n):
            v[self.sdisc[i]] = 1.0
            v[self.sixx[i]] = 0.0
            v[self.sixu[i]] = 0.0
            v[self.scost[i]] = 0.0

    def estimate(self, v: np.ndarray, i: int) -> np.ndarray:
        """Joint (state estimate, reference estimate) vector of follower i+1."""
        return np.concatenate([v[self.sxi[i]], v[self.seta[i]]])

    def make_rhs(self, policy, collect: bool):
        """Assemble the coupled derivative function for one phase.

        `policy(t, xi, eta) -> [u_i]` reads estimates only; `collect`
        additionally integrates the discounted learning accumulators
        (the layout must include them).
        """
        s = self.scenario
        followers = list(s.followers)
        leader = s.leader
        g = s.graph
        gains = self.gains
        n = self.n
        adaptive = self.adaptive
        edges = g.edges
        leader_ids = self.leader_ids
        F = list(gains.F)
        mu = list(gains.mu)
        qbar, q = self.qbar, self.q
        costs = s.weights

        def rhs(t: float, v: np.ndarray) -> np.ndarray:
            dv = np.zeros_like(v)
            x = [v[sl] for sl in self.sx]
            w = [v[sl] for sl in self.sw]
            xi = [v[sl] for sl in self.sxi]
            eta = [v[sl] for sl in self.seta]
            y = [f.C @ xv for f, xv in zip(followers, x)]
            yL = {k: leader.D @ wv for k, wv in zip(leader_ids, w)}
            wmap = {k: wv for k, wv in zip(leader_ids, w)}
            u = policy(t, xi, eta)
            for i, f in enumerate(followers):
                dv[self.sx[i]] = f.A @ x[i] + f.B @ u[i]
            for k in range(self.m):
                dv[self.sw[k]] = leader.S @ w[k]
            rel = {}
            for j, i, _wgt in edges:
                src = y[j - 1] if j <= n else yL[j]
                rel[(j, i)] = src - y[i - 1]
            dxi = _obs.state_observer_rhs(xi, u, rel, yL, followers, F, mu, g)
            for i in range(n):
                dv[self.sxi[i]] = dxi[i]
            if adaptive:
                S_est = [v[sl].reshape(qbar, qbar) for sl in self.sS]
                D_est = [v[sl].reshape(q, qbar) for sl in self.sD]
                deta, dS, dD = _obs.adaptive_observer_rhs(
                    eta, S_est, D_est, leader, wmap, g,
                    gains.beta1, gains.beta2, gains.beta3,
                )
                for i in range(n):
                    dv[self.seta[i]] = deta[i]
                    dv[self.sS[i]] = dS[i].ravel()
                    dv[self.sD[i]] = dD[i].ravel()
            else:
                deta = _obs.static_observer_rhs(eta, leader, wmap, g, gains.beta)
                for i in range(n):
                    dv[self.seta[i]] = deta[i]
            if collect:
                for i, f in enumerate(followers):
                    scale = float(v[self.sdisc[i]][0])
                    xhat = np.concatenate([xi[i], eta[i]])
                    if adaptive:
                        err = f.C @ xi[i] - D_est[i] @ eta[i]
                    else:
                        err = f.C @ xi[i] - leader.D @ eta[i]
                    dscale, dxx, dxu, dcost = _rl.accumulator_rhs(
                        scale, xhat, u[i], err, costs.Q[i], costs.gamma[i]
                    )
                    dv[self.sdisc[i]] = dscale
                    dv[self.sixx[i]] = dxx.ravel()
                    dv[self.sixu[i]] = dxu.ravel()
                    dv[self.scost[i]] = dcost
            return dv

        return rhs

    def offline_policy(self):
        K1, K2 = self.gains.K1, self.gains.K2

        def policy(t, xi, eta):
            return [K1[i] @ xi[i] + K2[i] @ eta[i] for i in range(self.n)]

        return policy

    def feedback_policy(self, gains_joint, noises=None):
        """u_i = K_i (xi_i; eta_i) [+ exploration_i(t)]."""

        def policy(t, xi, eta):
            out = []
            for i in range(self.n):
                u = gains_joint[i] @ np.concatenate([xi[i], eta[i]])
                if noises is not None:
                    u = u + noises[i](t)
                out.append(u)
            return out

        return policy


def _derive_channels(traj: Trajectory, wiring: _Wiring, segments) -> None:
    """Fill outputs, errors, and recomputed inputs for a finished trajectory."""
    s = wiring.scenario
    leader = s.leader
    n, m, q, qbar = wiring.n, wiring.m, wiring.q, wiring.qbar
    K = traj.t.size
    states = traj.states
    Y = np.empty((K, n, q))
    YH = np.empty((K, n, q))
    for i, f in enumerate(s.followers):
        Y[:, i, :] = states[:, wiring.sx[i]] @ f.C.T
        YH[:, i, :] = states[:, wiring.sxi[i]] @ f.C.T
    Omega = np.stack([states[:, sl] for sl in wiring.sw], axis=1)  # (K, m, qbar)
    YL = Omega @ leader.D.T
    Eta = np.stack([states[:, sl] for sl in wiring.seta], axis=1)  # (K, n, qbar)

    Wmat = wiring.part.containment_weights
    omega_star = np.einsum("nm,kmb->knb", Wmat, Omega)
    ystar = omega_star @ leader.D.T

    if wiring.adaptive:
        S_series = np.stack(
            [states[:, sl].reshape(K, qbar, qbar) for sl in wiring.sS], axis=1
        )
        D_series = np.stack(
            [states[:, sl].reshape(K, q, qbar) for sl in wiring.sD], axis=1
        )
        Y0H = np.einsum("knab,knb->kna", D_series, Eta)
        err_S = np.linalg.norm(S_series - leader.S, axis=(2, 3))
        err_D = np.linalg.norm(D_series - leader.D, axis=(2, 3))
    else:
        Y0H = Eta @ leader.D.T
        err_S = np.zeros((K, n))
        err_D = np.zeros((K, n))

    ebar = Y - np.einsum("nm,kmq->knq", Wmat, YL)
    e = np.einsum("nj,kjq->knq", wiring.part.L1, ebar)

    err_xi = np.stack(
        [
            np.linalg.norm(states[:, wiring.sxi[i]] - states[:, wiring.sx[i]], axis=1)
            for i in range(n)
        ],
        axis=1,
    )
    err_eta = np.linalg.norm(Eta - omega_star, axis=2)
    err_y0 = np.linalg.norm(Y0H - ystar, axis=2)

    U = np.zeros((K, wiring.input_offsets[-1]))
    for start, stop, kind, data in segments:
        rows = slice(start, stop)
        trows = traj.t[rows]
        for i, f in enumerate(s.followers):
            cols = slice(wiring.input_offsets[i], wiring.input_offsets[i + 1])
            XI = states[rows, wiring.sxi[i]]
            ET = states[rows, wiring.seta[i]]
            if kind == "offline":
                U[rows, cols] = XI @ wiring.gains.K1[i].T + ET @ wiring.gains.K2[i].T
            else:
                gains_joint, noises = data
                U[rows, cols] = np.hstack([XI, ET]) @ gains_joint[i].T
                if noises is not None:
                    U[rows, cols] += noises[i].sample(trows)

    traj.channels.update(
        y=Y,
        yhat=YH,
        y0hat=Y0H,
        y_leaders=YL,
        e=e,
        ebar=ebar,
        u=U,
        err_xi=err_xi,
        err_eta=err_eta,
        err_S=err_S,
        err_D=err_D,
        err_y0=err_y0,
    )


def _stitch(trajs: list[Trajectory], layout: StateLayout) -> Trajectory:
    t = np.concatenate([trajs[0].t] + [tr.t[1:] for tr in trajs[1:]])
    states = np.vstack([trajs[0].states] + [tr.states[1:] for tr in trajs[1:]])
    return Trajectory(t=t, states=states, layout=layout)


@dataclasses.dataclass(frozen=True)
class LearningData:
    """Everything the learner needs from the behaviour run, plus resume state."""

    batches: tuple[_rl.SampleBatch, ...]
    batches_full: tuple[_rl.SampleBatch, ...]
    behavior_gains: tuple[np.ndarray, ...]
    effort_weights: tuple[np.ndarray, ...]
    reference_gains: tuple[np.ndarray | None, ...]
    gate_reached: bool
    gate_time: float
    collection_end: float
    trajectory: Trajectory
    end_state: np.ndarray
    wiring: object
    gains: GainSet
    segments: tuple


def collect_learning_data(scenario: Scenario, config: _rl.LearnerConfig) -> LearningData:
    """Run the behaviour policy, gate on observer settling, accumulate windows.

    The gate requires all five observer error norms of every follower to
    stay below `config.gate` for one full window; collection then takes
    max_i n_i consecutive windows (n_i from `config.samples` or twice the
    identifiable parameter count), resetting the discounted accumulators
    at each window start.  Follower i's batch keeps its own first n_i
    windows; the full collection is retained as a fallback for
    ill-conditioned batches.
    """
    gains = synthesize_gains(scenario)
    wiring = _Wiring(scenario, gains, learning=True)
    step = scenario.sim.step
    T = config.window
    chunk_steps = int(round(T / step))
    if abs(chunk_steps * step - T) > 1e-9:
        raise ValueError(f"learning window {T} is not an integer multiple of step {step}")

    if config.initial_gain is not None:
        K0 = tuple(np.asarray(K, dtype=float) for K in config.initial_gain)
        for i, (K, f) in enumerate(zip(K0, scenario.followers)):
            want = (f.n_inputs, f.n_states + wiring.qbar)
            if K.shape != want:
                raise ValueError(
                    f"initial gain for follower {i + 1}: expected shape {want}, got {K.shape}"
                )
    else:
        K0 = tuple(behavior_gain(f, scenario.leader) for f in scenario.followers)
    noises = tuple(
        _rl.make_exploration(f.n_inputs, config.noise_amplitude, config.noise_seed + i + 1)
        for i, f in enumerate(scenario.followers)
    )
    policy = wiring.feedback_policy(K0, noises)
    rhs = wiring.make_rhs(policy, collect=True)

    sizes = []
    for i, f in enumerate(scenario.followers):
        naug = f.n_states + wiring.qbar
        need = 2 * _rl.minimum_samples(naug, f.n_inputs)
        sizes.append(config.samples[i] if config.samples is not None else need)
    max_windows = max(sizes)

    v = wiring.initial_state()
    wiring.reset_accumulators(v)
    trajs: list[Trajectory] = []
    t_cursor = 0.0
    gate_time = float("nan")
    gate_reached = False
    max_gate_chunks = int(scenario.sim.t_final / T) - max_windows
    if max_gate_chunks < 1:
        raise ValueError(
            f"horizon {scenario.sim.t_final} is too short for {max_windows} "
            f"collection windows of {T} s plus a settling phase"
        )
    chunk_index = 0
    while chunk_index < max_gate_chunks:
        tr = integrate(rhs, v, step, T, t0=t_cursor, layout=wiring.layout)
        trajs.append(tr)
        v = tr.states[-1].copy()
        t_cursor += T
        chunk_index += 1
        _derive_channels(tr, wiring, [(0, tr.t.size, "behavior", (K0, noises))])
        worst = max(
            float(np.max(tr.channels[name]))
            for name in ("err_xi", "err_eta", "err_S", "err_D", "err_y0")
        )
        if worst < config.gate:
            gate_reached = True
            gate_time = t_cursor
            break

    windows: list[list[_rl.RawWindow]] = [[] for _ in scenario.followers]
    if gate_reached:
        for _ in range(max_windows):
            wiring.reset_accumulators(v)
            start_feats = [
                _rl.critic_basis(wiring.estimate(v, i)) for i in range(wiring.n)
            ]
            tr = integrate(rhs, v, step, T, t0=t_cursor, layout=wiring.layout)
            trajs.append(tr)
            v = tr.states[-1].copy()
            t_cursor += T
            for i, f in enumerate(scenario.followers):
                naug = f.n_states + wiring.qbar
                windows[i].append(
                    _rl.RawWindow(
                        start_features=start_feats[i],
                        end_features=_rl.critic_basis(wiring.estimate(v, i)),
                        # copy: the slices are views into v, which the next
                        # window's accumulator reset zeroes in place
                        xx=v[wiring.sixx[i]].reshape(naug, naug).copy(),
                        xu=v[wiring.sixu[i]].reshape(naug, f.n_inputs).copy(),
                        cost=float(v[wiring.scost[i]][0]),
                    )
                )

    full = _stitch(trajs, wiring.layout)
    segments = ((0, full.t.size, "behavior", (K0, noises)),)
    batches = tuple(
        _rl.SampleBatch(tuple(windows[i][: sizes[i]]), T, scenario.weights.gamma[i])
        for i in range(wiring.n)
    )
    batches_full = tuple(
        _rl.SampleBatch(tuple(windows[i]), T, scenario.weights.gamma[i])
        for i in range(wiring.n)
    )
    return LearningData(
        batches=batches,
        batches_full=batches_full,
        behavior_gains=K0,
        effort_weights=tuple(scenario.weights.W),
        reference_gains=tuple(gains.optimal_gain),
        gate_reached=gate_reached,
        gate_time=gate_time,
        collection_end=t_cursor,
        trajectory=full,
        end_state=v,
        wiring=wiring,
        gains=gains,
        segments=segments,
    )


@dataclasses.dataclass(frozen=True)
class DecayFit:
    """Least-squares fit log||e(t)|| = log(amplitude) - rate * t over [start, end]."""

    rate: float
    amplitude: float
    start: float
    end: float


def _fit_decay(t: np.ndarray, norms: np.ndarray, start: float) -> DecayFit:
    mask = (t >= start) & (norms > 1e-13)
    end = float(t[-1])
    if int(mask.sum()) < 2:
        return DecayFit(float("nan"), float("nan"), float(start), end)
    slope, intercept = np.polyfit(t[mask], np.log(norms[mask]), 1)
    return DecayFit(float(-slope), float(np.exp(intercept)), float(start), end)


@dataclasses.dataclass(frozen=True)
class SimulationResult:
    """Finished run: trajectory with channels, gains, and learning records."""

    scenario: Scenario
    mode: str
    gains: GainSet
    trajectory: Trajectory
    learning: object | None
    switched: bool
    input_offsets: tuple[int, ...]

    def observer_report(self) -> _obs.ObserverErrorReport:
        return _obs.observer_error_report(self.trajectory)

    def error_norms(self) -> np.ndarray:
        """||e(t)|| over the whole follower stack, per step."""
        e = self.trajectory.channels["e"]
        return np.linalg.norm(e.reshape(e.shape[0], -1), axis=1)

    def final_error(self) -> float:
        return float(self.error_norms()[-1])

    def decay_fit(self, start: float | None = None) -> DecayFit:
        """Exponential fit of the stacked ||e(t)||.

        `start` defaults to the controller switch time in rl mode (the
        learned policy's own decay) and 0 otherwise; samples below 1e-13
        are dropped so a fully converged tail does not bias the slope.
        """
        if start is None:
            start = (
                self.learning.switch_time
                if self.learning is not None and self.switched
                else 0.0
            )
        return _fit_decay(self.trajectory.t, self.error_norms(), start)

    def decay_fits(self, start: float | None = None) -> tuple[DecayFit, ...]:
        """Per-follower exponential fits of ||e_i(t)|| on the same window."""
        if start is None:
            start = (
                self.learning.switch_time
                if self.learning is not None and self.switched
                else 0.0
            )
        e = self.trajectory.channels["e"]
        t = self.trajectory.t
        return tuple(
            _fit_decay(t, np.linalg.norm(e[:, i, :], axis=1), start)
            for i in range(e.shape[1])
        )

    def containment_at(self, index: int = -1) -> ContainmentError:
        ch = self.trajectory.channels
        part = laplacian_partition(self.scenario.graph)
        return containment_error(ch["y"][index], ch["y_leaders"][index], part)


def run_scenario(
    scenario: Scenario, mode: str = "offline", gains: GainSet | None = None
) -> SimulationResult:
    """Simulate one scenario end to end.

    mode "offline": synthesized gains applied from t = 0 over the whole
    horizon.  mode "rl": behaviour phase, gated window collection,
    off-policy learning, then a hard switch to the learned gains for the
    remaining time (no switch if any follower failed to converge; the
    result records it).  Pass `gains` to override the synthesis, e.g. for
    ablations.
    """
    if mode == "offline":
        g = gains if gains is not None else synthesize_gains(scenario)
        wiring = _Wiring(scenario, g, learning=False)
        rhs = wiring.make_rhs(wiring.offline_policy(), collect=False)
        traj = integrate(
            rhs, wiring.initial_state(), scenario.sim.step, scenario.sim.t_final,
            layout=wiring.layout,
        )
        segments = ((0, traj.t.size, "offline", None),)
        _derive_channels(traj, wiring, segments)
        return SimulationResult(
            scenario=scenario,
            mode=mode,
            gains=g,
            trajectory=traj,
            learning=None,
            switched=False,
            input_offsets=wiring.input_offsets,
        )
    if mode != "rl":
        raise ValueError(f"unknown mode {mode!r}")

    learning = _rl.run_off_policy(scenario, scenario.learner)
    data: LearningData = learning.data
    wiring: _Wiring = data.wiring
    remaining = scenario.sim.t_final - data.collection_end
    if remaining < -1e-12:
        raise ValueError("learning phase ran past the scenario horizon")
    behavior_payload = data.segments[0][3]
    switched = learning.all_converged and data.gate_reached
    if switched:
        joint = tuple(f.final_gain for f in learning.followers)
        policy = wiring.feedback_policy(joint)
        tail_payload = (joint, None)
    else:
        K0, noises = behavior_payload
        policy = wiring.feedback_policy(K0, noises)
        tail_payload = behavior_payload

    trajs = [data.trajectory]
    boundary = data.trajectory.t.size
    if remaining > 1e-12:
        rhs = wiring.make_rhs(policy, collect=False)
        tail = integrate(
            rhs, data.end_state, scenario.sim.step, remaining,
            t0=data.collection_end, layout=wiring.layout,
        )
        trajs.append(tail)
    traj = _stitch(trajs, wiring.layout)
    # The switch acts at the collection-end instant itself.
    segments = (
        (0, boundary - 1, "behavior", behavior_payload),
        (boundary - 1, traj.t.size, "feedback", tail_payload),
    )
    _derive_channels(traj, wiring, segments)
    return SimulationResult(
        scenario=scenario,
        mode=mode,
        gains=data.gains,
        trajectory=traj,
        learning=learning,
        switched=switched,
        input_offsets=wiring.input_offsets,
    )


def paper_scenario() -> Scenario:
    """The built-in 7-agent benchmark: 4 heterogeneous followers, 3 leaders.

    Followers 1 and 2 receive both of leaders 5 and 6; followers 3 and 4
    receive all three leaders; all edge weights are one.  The leader pair
    (S, D) generates bounded oscillations, observer weights and couplings
    match the reference experiment, and the cost uses output weight 10 I,
    effort weight 10, discount 0.01 for every follower.
    """
    doc = {
        "graph": {
            "n": 4,
            "m": 3,
            "edges": [
                [5, 1, 1.0], [6, 1, 1.0],
                [5, 2, 1.0], [6, 2, 1.0],
                [5, 3, 1.0], [6, 3, 1.0], [7, 3, 1.0],
                [5, 4, 1.0], [6, 4, 1.0], [7, 4, 1.0],
            ],
        },
        "leader": {
            "S": [[1.0, -3.0], [1.0, -1.0]],
            "D": [[1.0, 0.0], [0.0, 1.0]],
            "initial_states": [[2.0, 1.0], [-1.0, 1.0], [0.4, 0.4]],
        },
        "followers": [
            {
                "A": [[-1.0, 0.0, 0.0], [0.0, 3.0, 0.0], [0.0, 3.0, 2.0]],
                "B": [[4.0], [1.0], [1.0]],
                "C": [[0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
                "initial_state": None,
            },
            {
                "A": [[1.0, -1.0], [1.0, 0.0]],
                "B": [[-2.0], [-1.0]],
                "C": [[1.0, 0.0], [0.0, 1.0]],
                "initial_state": None,
            },
            {
                "A": [[2.0, 0.0], [2.0, 2.0]],
                "B": [[-1.0], [-1.0]],
                "C": [[1.0, 0.0], [0.0, 1.0]],
                "initial_state": None,
            },
            {
                "A": [[-1.0, 0.0, 0.0], [0.0, 2.0, -1.0], [0.0, 3.0, 3.0]],
                "B": [[5.0], [1.0], [2.0]],
                "C": [[0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
                "initial_state": None,
            },
        ],
        "observers": {
            "mu": [1.0, 1.0, 1.0, 1.0],
            "E": [
                [[2.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
                [[1.0, 0.0], [0.0, 1.0]],
                [[1.0, 0.0], [0.0, 1.0]],
                [[2.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
            ],
            "R": [
                [[0.19, -0.11], [-0.11, 0.26]],
                [[0.33, 0.0], [0.0, 1.0]],
                [[0.23, -0.09], [-0.09, 0.23]],
                [[0.22, -0.06], [-0.06, 0.16]],
            ],
            "beta": 3.0,
            "beta1": 3.0,
            "beta2": 10.0,
            "beta3": 3.0,
            "leader_estimator": "adaptive",
        },
        "weights": {
            "Q": [[[10.0, 0.0], [0.0, 10.0]]] * 4,
            "W": [[[10.0]]] * 4,
            "gamma": [0.01, 0.01, 0.01, 0.01],
        },
        "sim": {"h": 1e-3, "t_final": 40.0, "seed": 1},
        "learner": {
            "T": 0.5,
            "samples": None,
            "tau": 1e-4,
            "max_iter": 30,
            "noise": {"amplitude": 1.0, "seed": 7},
            "gate": 1e-3,
        },
    }
    return scenario_from_dict(doc)
