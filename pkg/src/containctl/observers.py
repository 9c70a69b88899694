"""Distributed observers driven by relative measurements and leader broadcasts.

Followers cannot read their own absolute outputs; the state observer only
consumes output *differences* along incoming edges plus each incident
leader's broadcast output, which is why its API takes relative values and
never a follower's own y_i.  Leader estimators come in two flavours: the
static one assumes every follower knows the reference dynamics (S, D) and
runs a consensus filter on the leader states; the adaptive one additionally
estimates S and D themselves through consensus, so only followers adjacent
to a leader ever see the true reference data.
"""

from __future__ import annotations

import dataclasses

import numpy as np

from .dynamics import FollowerModel, LeaderModel
from .graph import Graph

__all__ = [
    "state_observer_rhs",
    "static_observer_rhs",
    "adaptive_observer_rhs",
    "ObserverErrorReport",
    "observer_error_report",
]


def state_observer_rhs(
    xi: list[np.ndarray],
    u: list[np.ndarray],
    rel_outputs: dict[tuple[int, int], np.ndarray],
    leader_outputs: dict[int, np.ndarray],
    followers: list[FollowerModel],
    F: list[np.ndarray],
    mu: list[float],
    graph: Graph,
) -> list[np.ndarray]:
    """Time derivative of each follower's state estimate.

    Parameters
    ----------
    xi, u : per-follower estimate and applied input.
    rel_outputs : measured output differences, keyed (source, target):
        rel_outputs[j, i] = y_j - y_i for every edge j -> i.
    leader_outputs : broadcast reference output D w_k per incident leader.
    followers, F, mu : models and injection gains.

    The innovation for follower i sums, over incoming edges, the measured
    difference corrected by the corresponding estimated outputs; stacked
    over all followers the estimation error obeys an autonomous linear
    flow independent of the inputs.
    """
    n = graph.n_followers
    yhat = [f.C @ x for f, x in zip(followers, xi)]
    out = []
    for i in range(1, n + 1):
        f = followers[i - 1]
        inov = np.zeros(f.n_outputs)
        for j, w in graph.in_edges(i):
            diff = rel_outputs[(j, i)]
            if j <= n:
                inov = inov + w * (diff + yhat[i - 1] - yhat[j - 1])
            else:
                inov = inov + w * (diff + yhat[i - 1] - leader_outputs[j])
        out.append(f.A @ xi[i - 1] + f.B @ u[i - 1] - mu[i - 1] * F[i - 1] @ inov)
    return out


def static_observer_rhs(
    eta: list[np.ndarray],
    leader: LeaderModel,
    leader_states: dict[int, np.ndarray],
    graph: Graph,
    beta: float,
) -> list[np.ndarray]:
    """Consensus filter on the leader states with known dynamics S."""
    n = graph.n_followers
    out = []
    for i in range(1, n + 1):
        cons = np.zeros(leader.n_states)
        for j, w in graph.in_edges(i):
            ref = eta[j - 1] if j <= n else leader_states[j]
            cons = cons + w * (ref - eta[i - 1])
        out.append(leader.S @ eta[i - 1] + beta * cons)
    return out


def adaptive_observer_rhs(
    eta: list[np.ndarray],
    S_est: list[np.ndarray],
    D_est: list[np.ndarray],
    leader: LeaderModel,
    leader_states: dict[int, np.ndarray],
    graph: Graph,
    beta1: float,
    beta2: float,
    beta3: float,
) -> tuple[list[np.ndarray], list[np.ndarray], list[np.ndarray]]:
    """Consensus estimation of the leader dynamics, output map, and state.

    S and D estimates relax by pure consensus toward the broadcast leader
    data (rates beta1 and beta3); the state estimate integrates each
    follower's *current* dynamics estimate plus consensus innovation at
    rate beta2.  Only followers with a leader edge read (S, D, w_k)
    directly; everyone else learns them through neighbours.
    """
    n = graph.n_followers
    d_eta, d_S, d_D = [], [], []
    for i in range(1, n + 1):
        cons_eta = np.zeros(leader.n_states)
        cons_S = np.zeros_like(leader.S)
        cons_D = np.zeros_like(leader.D)
        for j, w in graph.in_edges(i):
            if j <= n:
                cons_eta = cons_eta + w * (eta[j - 1] - eta[i - 1])
                cons_S = cons_S + w * (S_est[j - 1] - S_est[i - 1])
                cons_D = cons_D + w * (D_est[j - 1] - D_est[i - 1])
            else:
                cons_eta = cons_eta + w * (leader_states[j] - eta[i - 1])
                cons_S = cons_S + w * (leader.S - S_est[i - 1])
                cons_D = cons_D + w * (leader.D - D_est[i - 1])
        d_eta.append(S_est[i - 1] @ eta[i - 1] + beta2 * cons_eta)
        d_S.append(beta1 * cons_S)
        d_D.append(beta3 * cons_D)
    return d_eta, d_S, d_D


@dataclasses.dataclass(frozen=True)
class ObserverErrorReport:
    """Per-follower observer error norms over time with fitted decay rates.

    `errors[name]` has one column per follower; `rates[name]` holds the
    exponential decay rate of each column from a log-linear fit over the
    samples where the error exceeds 1e-9 (numerical floor), and
    `final_values[name]` the last sample.
    """

    t: np.ndarray
    errors: dict[str, np.ndarray]
    rates: dict[str, tuple[float, ...]]
    final_values: dict[str, tuple[float, ...]]


_ERROR_CHANNELS = ("err_xi", "err_eta", "err_S", "err_D", "err_y0")


def observer_error_report(trajectory) -> ObserverErrorReport:
    """Summarize observer convergence from a simulated trajectory.

    Accepts any object with a time grid `t` and a `channels` mapping
    containing the five observer error series (err_xi, err_eta, err_S,
    err_D, err_y0), each of shape (len(t), n_followers).
    """
    t = np.asarray(trajectory.t, dtype=float)
    errors: dict[str, np.ndarray] = {}
    rates: dict[str, tuple[float, ...]] = {}
    finals: dict[str, tuple[float, ...]] = {}
    for name in _ERROR_CHANNELS:
        series = np.asarray(trajectory.channels[name], dtype=float)
        errors[name] = series
        fit = []
        for col in series.T:
            mask = col > 1e-9
            if np.count_nonzero(mask) < 2:
                fit.append(float("nan"))
                continue
            slope = np.polyfit(t[mask], np.log(col[mask]), 1)[0]
            fit.append(float(-slope))
        rates[name] = tuple(fit)
        finals[name] = tuple(float(v) for v in series[-1])
    return ObserverErrorReport(t=t, errors=errors, rates=rates, final_values=finals)
