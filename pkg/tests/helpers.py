"""Shared builders and independent oracles for the test suite.

Everything here is deliberately computed by a route different from the
library under test: matrix exponentials for integrals the simulator
accumulates with RK4, closed-form geometry for hull distances, scipy
solvers as cross-checks for the hand-rolled Riccati iteration.
"""

from __future__ import annotations

import dataclasses

import numpy as np
from scipy.linalg import block_diag, expm

from containctl.dynamics import FollowerModel, LeaderModel
from containctl.graph import Graph, build_graph
from containctl.riccati import AugmentedSystem
from containctl.rl import LearnerConfig, RawWindow, critic_basis
from containctl.scenario import (
    CostSettings,
    ObserverSettings,
    Scenario,
    SimSettings,
)


def scalar_scenario(
    *,
    estimator: str = "adaptive",
    t_final: float = 20.0,
    gate: float = 1e-3,
    noise_seed: int = 3,
    gamma: float = 0.01,
) -> Scenario:
    """Smallest legal closed loop: one integrator follower, one constant leader."""
    return Scenario(
        graph=build_graph(1, 1, [(2, 1, 1.0)]),
        leader=LeaderModel(S=np.zeros((1, 1)), D=np.eye(1)),
        leader_init=(np.array([1.0]),),
        followers=(FollowerModel(A=np.zeros((1, 1)), B=np.eye(1), C=np.eye(1), label=1),),
        follower_init=(np.array([0.5]),),
        observers=ObserverSettings(
            mu=(1.0,),
            E=(np.eye(1),),
            R=(np.eye(1),),
            beta=2.0,
            beta1=3.0,
            beta2=10.0,
            beta3=3.0,
            leader_estimator=estimator,
        ),
        weights=CostSettings(Q=(np.eye(1),), W=(np.eye(1),), gamma=(gamma,)),
        sim=SimSettings(step=1e-3, t_final=t_final, seed=4),
        learner=LearnerConfig(
            window=0.5,
            tolerance=1e-6,
            max_iterations=25,
            noise_amplitude=0.5,
            noise_seed=noise_seed,
            gate=gate,
        ),
    )


def pair_scenario(*, estimator: str = "adaptive", t_final: float = 4.0) -> Scenario:
    """Two planar followers in a chain behind one oscillating leader."""
    follower = dict(
        A=np.array([[0.0, 1.0], [0.0, 0.0]]), B=np.eye(2), C=np.eye(2)
    )
    return Scenario(
        graph=build_graph(2, 1, [(3, 1, 1.0), (1, 2, 1.0)]),
        leader=LeaderModel(S=np.array([[0.0, 1.0], [-1.0, 0.0]]), D=np.eye(2)),
        leader_init=(np.array([1.0, 0.5]),),
        followers=(
            FollowerModel(label=1, **follower),
            FollowerModel(label=2, **follower),
        ),
        follower_init=(np.array([0.3, -0.2]), np.array([-0.4, 0.1])),
        observers=ObserverSettings(
            mu=(1.0, 1.0),
            E=(np.eye(2), np.eye(2)),
            R=(np.eye(2), np.eye(2)),
            beta=2.0,
            beta1=3.0,
            beta2=10.0,
            beta3=3.0,
            leader_estimator=estimator,
        ),
        weights=CostSettings(
            Q=(np.eye(2), np.eye(2)), W=(np.eye(2), np.eye(2)), gamma=(0.01, 0.01)
        ),
        sim=SimSettings(step=1e-3, t_final=t_final, seed=4),
        learner=LearnerConfig(),
    )


def zero_scenario() -> Scenario:
    """Everything at rest: zero initial states, leader pinned at the origin.

    Uses the static estimator; the adaptive one would still pull its
    dynamics estimates toward the true (S, D) from rest.
    """
    scn = scalar_scenario(estimator="static")
    return dataclasses.replace(
        scn,
        leader_init=(np.array([0.0]),),
        follower_init=(np.array([0.0]),),
        sim=SimSettings(step=1e-3, t_final=2.0, seed=4),
    )


def oscillator_bank(freqs: tuple[float, ...]) -> tuple[np.ndarray, np.ndarray]:
    """Block system of unit-amplitude oscillators and its initial phase state."""
    blocks = [np.array([[0.0, f], [-f, 0.0]]) for f in freqs]
    state0 = np.tile([1.0, 0.0], len(freqs))
    return block_diag(*blocks), state0


def exact_windows(
    aug: AugmentedSystem,
    K0: np.ndarray,
    Q: np.ndarray,
    gamma: float,
    T: float,
    count: int,
    freqs: tuple[float, ...] = (0.7, 1.9, 3.3, 5.1),
    amplitude: float = 1.0,
    seed: int = 0,
) -> list[RawWindow]:
    """Windows whose discounted integrals are exact matrix-exponential values.

    The behaviour loop (plant + feedback + sinusoidal exploration) is one
    big LTI system, so every accumulator the simulator integrates with RK4
    has a closed form through the block-triangular exponential identity.
    """
    n = aug.A.shape[0]
    p = aug.B.shape[1]
    rng = np.random.default_rng(seed)
    osc, osc0 = oscillator_bank(freqs)
    mix = amplitude * rng.uniform(-1.0, 1.0, size=(p, osc.shape[0]))

    M = np.block([[aug.A + aug.B @ K0, aug.B @ mix], [np.zeros((osc.shape[0], n)), osc]])
    Px = np.hstack([np.eye(n), np.zeros((n, osc.shape[0]))])
    Ku = np.hstack([K0, mix])
    Mg = M - 0.5 * gamma * np.eye(M.shape[0])
    cost_core = Px.T @ aug.C.T @ np.atleast_2d(Q) @ aug.C @ Px
    flow = expm(M * T)
    flow_g = expm(Mg * T)

    z = np.concatenate([rng.uniform(-1.0, 1.0, n), osc0])
    windows: list[RawWindow] = []
    for _ in range(count):
        Z0 = np.outer(z, z)
        H = np.block([[-Mg, Z0], [np.zeros_like(Mg), Mg.T]])
        F = expm(H * T)
        G = flow_g @ F[: Mg.shape[0], Mg.shape[0]:]
        G = 0.5 * (G + G.T)
        z_next = flow @ z
        windows.append(
            RawWindow(
                start_features=critic_basis(Px @ z),
                end_features=critic_basis(Px @ z_next),
                xx=Px @ G @ Px.T,
                xu=Px @ G @ Ku.T,
                cost=float(np.trace(cost_core @ G)),
            )
        )
        z = z_next
    return windows


def point_segment_distance(p: np.ndarray, a: np.ndarray, b: np.ndarray) -> float:
    """Euclidean distance from p to the segment [a, b]."""
    d = b - a
    denom = float(d @ d)
    t = 0.0 if denom == 0.0 else float(np.clip((p - a) @ d / denom, 0.0, 1.0))
    return float(np.linalg.norm(p - (a + t * d)))


def point_triangle_distance(p: np.ndarray, v: np.ndarray) -> float:
    """Euclidean distance from a 2-D point to the triangle with vertex rows v."""
    a, b, c = v
    # inside test via signed areas; degenerate triangles fall back to edges
    def cross(o, q, r):
        return (q[0] - o[0]) * (r[1] - o[1]) - (q[1] - o[1]) * (r[0] - o[0])

    s1, s2, s3 = cross(a, b, p), cross(b, c, p), cross(c, a, p)
    if (s1 >= 0 and s2 >= 0 and s3 >= 0) or (s1 <= 0 and s2 <= 0 and s3 <= 0):
        area = abs(cross(a, b, c))
        if area > 1e-12:
            return 0.0
    return min(
        point_segment_distance(p, a, b),
        point_segment_distance(p, b, c),
        point_segment_distance(p, c, a),
    )


def follower_chain_graph() -> Graph:
    """Two followers in a chain behind one leader: 3 -> 1 -> 2."""
    return build_graph(2, 1, [(3, 1, 1.0), (1, 2, 1.0)])
