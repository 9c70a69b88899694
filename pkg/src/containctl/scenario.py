"""Scenario files: one JSON document describing a complete experiment.

Sections mirror the problem structure: graph {n, m, edges}, leader (S, D,
initial_states), followers (models plus optional initial_state; omitted ones
are drawn seeded-uniform from [-1, 1] at run time), observers (couplings,
noise weights, consensus rates, estimator flavour, optional initial states),
weights (cost matrices and discounts per follower), sim {h, t_final, seed},
learner (window T, sample counts, stop tolerance tau, iteration cap,
exploration noise, optional behaviour gains K0).
Parsing is strict and errors carry the section/key path; serialization is
lossless for binary64 floats so parse -> serialize -> parse is exact.
"""

from __future__ import annotations

import dataclasses
import json
from pathlib import Path

import numpy as np

from .dynamics import FollowerModel, LeaderModel
from .graph import Graph, GraphError, build_graph
from .rl import LearnerConfig

__all__ = [
    "ScenarioError",
    "ObserverSettings",
    "CostSettings",
    "SimSettings",
    "Scenario",
    "scenario_from_dict",
    "scenario_to_dict",
    "load_scenario",
    "save_scenario",
]


class ScenarioError(ValueError):
    """Raised for malformed scenario documents; the message carries the path."""


@dataclasses.dataclass(frozen=True)
class ObserverSettings:
    """Observer-side configuration: couplings, Riccati weights, consensus rates.

    The `init_*` fields optionally pin the observer initial states
    (per-follower state estimate, reference estimate, and for the adaptive
    estimator the dynamics/output-map estimates); None means start at zero.
    """

    mu: tuple[float, ...]
    E: tuple[np.ndarray, ...]
    R: tuple[np.ndarray, ...]
    beta: float = 1.0
    beta1: float = 1.0
    beta2: float = 1.0
    beta3: float = 1.0
    leader_estimator: str = "adaptive"
    init_xi: tuple[np.ndarray, ...] | None = None
    init_eta: tuple[np.ndarray, ...] | None = None
    init_S: tuple[np.ndarray, ...] | None = None
    init_D: tuple[np.ndarray, ...] | None = None

    def __post_init__(self) -> None:
        if self.leader_estimator not in ("adaptive", "static"):
            raise ScenarioError(
                "observers.leader_estimator must be 'adaptive' or 'static', "
                f"got {self.leader_estimator!r}"
            )


@dataclasses.dataclass(frozen=True)
class CostSettings:
    """Per-follower output weight Q, effort weight W, and discount gamma."""

    Q: tuple[np.ndarray, ...]
    W: tuple[np.ndarray, ...]
    gamma: tuple[float, ...]


@dataclasses.dataclass(frozen=True)
class SimSettings:
    step: float = 1e-3
    t_final: float = 40.0
    seed: int = 0


@dataclasses.dataclass(frozen=True)
class Scenario:
    graph: Graph
    leader: LeaderModel
    leader_init: tuple[np.ndarray, ...]
    followers: tuple[FollowerModel, ...]
    follower_init: tuple[np.ndarray | None, ...]
    observers: ObserverSettings
    weights: CostSettings
    sim: SimSettings
    learner: LearnerConfig

    def __post_init__(self) -> None:
        n = self.graph.n_followers
        m = self.graph.m_leaders
        checks = [
            ("followers", len(self.followers), n),
            ("followers initial states", len(self.follower_init), n),
            ("leader.initial", len(self.leader_init), m),
            ("observers.mu", len(self.observers.mu), n),
            ("observers.E", len(self.observers.E), n),
            ("observers.R", len(self.observers.R), n),
            ("weights.Q", len(self.weights.Q), n),
            ("weights.W", len(self.weights.W), n),
            ("weights.gamma", len(self.weights.gamma), n),
        ]
        for name, got, want in checks:
            if got != want:
                raise ScenarioError(f"{name}: expected {want} entries, got {got}")
        for k, w0 in enumerate(self.leader_init):
            if w0.shape != (self.leader.n_states,):
                raise ScenarioError(
                    f"leader.initial[{k}]: expected {self.leader.n_states} values, "
                    f"got shape {w0.shape}"
                )
        for i, (f, x0) in enumerate(zip(self.followers, self.follower_init)):
            if x0 is not None and x0.shape != (f.n_states,):
                raise ScenarioError(
                    f"followers[{i}].initial_state: expected {f.n_states} values, "
                    f"got shape {x0.shape}"
                )
        qbar = self.leader.n_states
        obs_inits = [
            ("xi", self.observers.init_xi,
             lambda i: (self.followers[i].n_states,)),
            ("eta", self.observers.init_eta, lambda i: (qbar,)),
            ("S", self.observers.init_S, lambda i: (qbar, qbar)),
            ("D", self.observers.init_D, lambda i: self.leader.D.shape),
        ]
        for key, group, want in obs_inits:
            if group is None:
                continue
            if len(group) != n:
                raise ScenarioError(
                    f"observers.initial.{key}: expected {n} entries, got {len(group)}"
                )
            for i, arr in enumerate(group):
                if arr.shape != want(i):
                    raise ScenarioError(
                        f"observers.initial.{key}[{i}]: expected shape {want(i)}, "
                        f"got {arr.shape}"
                    )
        if self.learner.initial_gain is not None:
            if len(self.learner.initial_gain) != n:
                raise ScenarioError(
                    f"learner.K0: expected {n} entries, got {len(self.learner.initial_gain)}"
                )
            for i, (K, f) in enumerate(zip(self.learner.initial_gain, self.followers)):
                want_shape = (f.n_inputs, f.n_states + qbar)
                if K.shape != want_shape:
                    raise ScenarioError(
                        f"learner.K0[{i}]: expected shape {want_shape}, got {K.shape}"
                    )


def _get(section: dict, key: str, path: str):
    if key not in section:
        raise ScenarioError(f"{path}.{key}: missing")
    return section[key]


def _matrix_field(value, path: str) -> np.ndarray:
    try:
        arr = np.array(value, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ScenarioError(f"{path}: not a numeric matrix ({exc})") from exc
    if arr.ndim == 1:
        arr = arr.reshape(1, -1)
    if arr.ndim != 2:
        raise ScenarioError(f"{path}: expected a matrix, got {arr.ndim} dimensions")
    return arr


def _vector_field(value, path: str) -> np.ndarray:
    try:
        arr = np.array(value, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ScenarioError(f"{path}: not a numeric vector ({exc})") from exc
    if arr.ndim != 1:
        raise ScenarioError(f"{path}: expected a flat list, got {arr.ndim} dimensions")
    return arr


def scenario_from_dict(doc: dict) -> Scenario:
    """Build a validated :class:`Scenario` from a parsed JSON document."""
    for section in ("graph", "leader", "followers", "observers", "weights", "sim"):
        if section not in doc:
            raise ScenarioError(f"{section}: missing section")

    gsec = doc["graph"]
    try:
        graph = build_graph(
            int(_get(gsec, "n", "graph")),
            int(_get(gsec, "m", "graph")),
            [tuple(e) for e in _get(gsec, "edges", "graph")],
        )
    except GraphError as exc:
        raise ScenarioError(f"graph: {exc}") from exc

    lsec = doc["leader"]
    leader = LeaderModel(
        S=_matrix_field(_get(lsec, "S", "leader"), "leader.S"),
        D=_matrix_field(_get(lsec, "D", "leader"), "leader.D"),
    )
    leader_init = tuple(
        _vector_field(w0, f"leader.initial_states[{k}]")
        for k, w0 in enumerate(_get(lsec, "initial_states", "leader"))
    )

    followers = []
    follower_init: list[np.ndarray | None] = []
    for i, fsec in enumerate(doc["followers"]):
        path = f"followers[{i}]"
        followers.append(
            FollowerModel(
                A=_matrix_field(_get(fsec, "A", path), f"{path}.A"),
                B=_matrix_field(_get(fsec, "B", path), f"{path}.B"),
                C=_matrix_field(_get(fsec, "C", path), f"{path}.C"),
                label=i + 1,
            )
        )
        init = fsec.get("initial_state")
        follower_init.append(
            None if init is None else _vector_field(init, f"{path}.initial_state")
        )

    osec = doc["observers"]
    oinit = osec.get("initial") or {}
    if not isinstance(oinit, dict):
        raise ScenarioError("observers.initial: expected an object with xi/eta/S/D lists")

    def _init_group(key: str, kind) -> tuple[np.ndarray, ...] | None:
        group = oinit.get(key)
        if group is None:
            return None
        return tuple(
            kind(entry, f"observers.initial.{key}[{i}]") for i, entry in enumerate(group)
        )

    observers = ObserverSettings(
        mu=tuple(float(v) for v in _get(osec, "mu", "observers")),
        E=tuple(
            _matrix_field(E, f"observers.E[{i}]") for i, E in enumerate(_get(osec, "E", "observers"))
        ),
        R=tuple(
            _matrix_field(R, f"observers.R[{i}]") for i, R in enumerate(_get(osec, "R", "observers"))
        ),
        beta=float(osec.get("beta", 1.0)),
        beta1=float(osec.get("beta1", 1.0)),
        beta2=float(osec.get("beta2", 1.0)),
        beta3=float(osec.get("beta3", 1.0)),
        leader_estimator=str(osec.get("leader_estimator", "adaptive")),
        init_xi=_init_group("xi", _vector_field),
        init_eta=_init_group("eta", _vector_field),
        init_S=_init_group("S", _matrix_field),
        init_D=_init_group("D", _matrix_field),
    )

    wsec = doc["weights"]
    weights = CostSettings(
        Q=tuple(_matrix_field(Q, f"weights.Q[{i}]") for i, Q in enumerate(_get(wsec, "Q", "weights"))),
        W=tuple(_matrix_field(W, f"weights.W[{i}]") for i, W in enumerate(_get(wsec, "W", "weights"))),
        gamma=tuple(float(g) for g in _get(wsec, "gamma", "weights")),
    )

    ssec = doc["sim"]
    sim = SimSettings(
        step=float(ssec.get("h", 1e-3)),
        t_final=float(ssec.get("t_final", 40.0)),
        seed=int(ssec.get("seed", 0)),
    )
    if sim.step <= 0:
        raise ScenarioError(f"sim.h: must be positive, got {sim.step}")
    if sim.t_final <= 0:
        raise ScenarioError(f"sim.t_final: must be positive, got {sim.t_final}")

    lrn = doc.get("learner", {})
    samples = lrn.get("samples")
    noise = lrn.get("noise", {})
    if not isinstance(noise, dict):
        raise ScenarioError("learner.noise: expected an object {amplitude, seed}")
    K0 = lrn.get("K0")
    learner = LearnerConfig(
        window=float(lrn.get("T", 0.5)),
        samples=None if samples is None else tuple(int(s) for s in samples),
        tolerance=float(lrn.get("tau", 1e-4)),
        max_iterations=int(lrn.get("max_iter", 30)),
        noise_amplitude=float(noise.get("amplitude", 1.0)),
        noise_seed=int(noise.get("seed", 0)),
        gate=float(lrn.get("gate", 1e-3)),
        initial_gain=None
        if K0 is None
        else tuple(_matrix_field(K, f"learner.K0[{i}]") for i, K in enumerate(K0)),
    )

    try:
        return Scenario(
            graph=graph,
            leader=leader,
            leader_init=leader_init,
            followers=tuple(followers),
            follower_init=tuple(follower_init),
            observers=observers,
            weights=weights,
            sim=sim,
            learner=learner,
        )
    except (ScenarioError, ValueError) as exc:
        raise ScenarioError(str(exc)) from exc


def scenario_to_dict(s: Scenario) -> dict:
    """Lossless plain-dict form of a scenario, ready for json.dump."""
    obs = s.observers
    observers: dict = {
        "mu": list(obs.mu),
        "E": [E.tolist() for E in obs.E],
        "R": [R.tolist() for R in obs.R],
        "beta": obs.beta,
        "beta1": obs.beta1,
        "beta2": obs.beta2,
        "beta3": obs.beta3,
        "leader_estimator": obs.leader_estimator,
    }
    initial = {
        key: [a.tolist() for a in group]
        for key, group in (
            ("xi", obs.init_xi),
            ("eta", obs.init_eta),
            ("S", obs.init_S),
            ("D", obs.init_D),
        )
        if group is not None
    }
    if initial:
        observers["initial"] = initial
    learner: dict = {
        "T": s.learner.window,
        "samples": None if s.learner.samples is None else list(s.learner.samples),
        "tau": s.learner.tolerance,
        "max_iter": s.learner.max_iterations,
        "noise": {"amplitude": s.learner.noise_amplitude, "seed": s.learner.noise_seed},
        "gate": s.learner.gate,
    }
    if s.learner.initial_gain is not None:
        learner["K0"] = [K.tolist() for K in s.learner.initial_gain]
    return {
        "graph": {
            "n": s.graph.n_followers,
            "m": s.graph.m_leaders,
            "edges": [[j, i, w] for j, i, w in s.graph.edges],
        },
        "leader": {
            "S": s.leader.S.tolist(),
            "D": s.leader.D.tolist(),
            "initial_states": [w0.tolist() for w0 in s.leader_init],
        },
        "followers": [
            {
                "A": f.A.tolist(),
                "B": f.B.tolist(),
                "C": f.C.tolist(),
                "initial_state": None if x0 is None else x0.tolist(),
            }
            for f, x0 in zip(s.followers, s.follower_init)
        ],
        "observers": observers,
        "weights": {
            "Q": [Q.tolist() for Q in s.weights.Q],
            "W": [W.tolist() for W in s.weights.W],
            "gamma": list(s.weights.gamma),
        },
        "sim": {"h": s.sim.step, "t_final": s.sim.t_final, "seed": s.sim.seed},
        "learner": learner,
    }


def load_scenario(path: str | Path) -> Scenario:
    """Parse a scenario JSON file; errors carry file and section context."""
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from exc
    except OSError as exc:
        raise ScenarioError(f"{path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise ScenarioError(f"{path}: top level must be an object")
    try:
        return scenario_from_dict(doc)
    except ScenarioError as exc:
        raise ScenarioError(f"{path}: {exc}") from exc


def save_scenario(s: Scenario, path: str | Path) -> None:
    Path(path).write_text(json.dumps(scenario_to_dict(s), indent=2) + "\n")
