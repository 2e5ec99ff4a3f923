"""Lock-step simulation of the full estimation network.

Every agent advances its output injection observer and its consensus
layer from the same time-t snapshot of the network.  Rather than looping
over agents per step, the whole network is assembled once into a single
affine update ``S' = M S + W u`` over the stacked vector

    S = [x; z_1; xu_1; ...; z_N; xu_N]

with ``x`` the plant state, ``z_i`` agent i's detectable subsystem
estimate, and ``xu_i`` its consensus partition estimate.  The assembly
makes the snapshot semantics structural (every row reads time-t values
by construction) and leaves the hot loop to a jitted kernel.

Single-step operations on individual agents are also exposed; they
define the per-agent semantics and are cross-checked against the
assembled operator in the test suite.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DivergenceError
from .kernels import affine_iterate
from .model import SimConfig, assemble_A  # noqa: F401  (re-exported)
from .structure import build_network_structure

# Max-norm bound on the stacked state; beyond this the run aborts.
OVERFLOW_LIMIT = 1e12


def step_plant(model, x, u):
    """One step of the open plant in model coordinates."""
    A = assemble_A(model)
    return A @ np.asarray(x, dtype=float) + np.asarray(model.B) @ np.asarray(u)


def step_observer(subsystem, L, z, u, y):
    """One step of an agent's output injection observer."""
    z = np.asarray(z, dtype=float)
    innovation = np.asarray(y, dtype=float) - subsystem.H @ z
    return subsystem.F @ z + subsystem.G @ np.asarray(u) + L @ innovation


def step_consensus(partition, coupling, graph, xu, neighbor_estimates, u):
    """One step of an agent's consensus layer.

    ``neighbor_estimates`` maps in-neighbor labels to their full-state
    estimates at the current step; each mode's block is extracted
    through the global index map, so it does not matter whether the
    neighbor tracks that mode through injection or consensus.
    """
    xu = np.asarray(xu, dtype=float)
    out = partition.A_u @ xu + partition.B_u @ np.asarray(u)
    i = partition.agent
    adj = np.asarray(graph.adjacency)
    for mode_k, mode in enumerate(partition.modes):
        sl = slice(int(partition.bounds[mode_k]), int(partition.bounds[mode_k + 1]))
        gidx = partition.index_map[sl]
        acc = np.zeros(sl.stop - sl.start)
        for j in graph.in_neighbors(i):
            w = adj[i - 1, j - 1]
            acc += w * (np.asarray(neighbor_estimates[j])[gidx] - xu[sl])
        out[sl] += coupling[mode] * (partition.A_u[sl, sl] @ acc)
    return out


def assemble_estimate(subsystem, partition, z, xu, n):
    """Fuse one agent's two estimate parts into a full-state estimate.

    Retained subsystem entries fill the self-reconstructed states; the
    consensus partition fills the rest.
    """
    xhat = np.empty(n)
    xhat[subsystem.retained_indices] = np.asarray(z)[subsystem.n_partial :]
    xhat[partition.index_map] = np.asarray(xu)
    return xhat


@dataclass(frozen=True)
class NetworkOperator:
    """Assembled affine update of the stacked network state."""

    M: np.ndarray
    W: np.ndarray
    n: int
    z_offsets: dict
    xu_offsets: dict
    locators: np.ndarray

    @property
    def dim(self):
        return self.M.shape[0]


def build_network_operator(model, sensors, graph, plan, structure):
    """Assemble ``M`` and ``W`` for the stacked network state.

    ``locators[i-1, g]`` is the stacked-state position holding agent i's
    estimate of global state entry ``g``.
    """
    n = model.n
    N = sensors.N
    A = assemble_A(model)
    B = np.asarray(model.B)
    adj = np.asarray(graph.adjacency)

    z_off = {}
    xu_off = {}
    pos = n
    for i in range(1, N + 1):
        z_off[i] = pos
        pos += structure.subsystems[i].dim
        xu_off[i] = pos
        pos += structure.partitions[i].dim
    D = pos

    loc = np.full((N, n), -1, dtype=np.intp)
    for i in range(1, N + 1):
        sub = structure.subsystems[i]
        part = structure.partitions[i]
        loc[i - 1, sub.retained_indices] = z_off[i] + sub.n_partial + np.arange(
            sub.dim - sub.n_partial
        )
        loc[i - 1, part.index_map] = xu_off[i] + np.arange(part.dim)
        assert np.all(loc[i - 1] >= 0), f"agent {i}: estimate does not cover the state"

    M = np.zeros((D, D))
    W = np.zeros((D, model.m))
    M[:n, :n] = A
    W[:n] = B

    for i in range(1, N + 1):
        sub = structure.subsystems[i]
        part = structure.partitions[i]
        L = plan.injections[i].L
        C_i = np.asarray(sensors.C(i))
        rs = slice(z_off[i], z_off[i] + sub.dim)
        M[rs, rs] = sub.F - L @ sub.H
        M[rs, :n] += L @ C_i
        W[rs] = sub.G

        base = xu_off[i]
        ps = slice(base, base + part.dim)
        M[ps, ps] = part.A_u
        W[ps] = part.B_u
        deg = float(adj[i - 1].sum())
        for mode_k, mode in enumerate(part.modes):
            lo = int(part.bounds[mode_k])
            hi = int(part.bounds[mode_k + 1])
            rows = np.arange(base + lo, base + hi)
            gidx = part.index_map[lo:hi]
            k = plan.coupling[mode]
            A_blk = part.A_u[lo:hi, lo:hi]
            M[np.ix_(rows, rows)] -= k * deg * A_blk
            for j in graph.in_neighbors(i):
                w = adj[i - 1, j - 1]
                cols = loc[j - 1, gidx]
                M[np.ix_(rows, cols)] += k * w * A_blk

    for arr in (M, W, loc):
        arr.setflags(write=False)
    return NetworkOperator(
        M=M, W=W, n=n, z_offsets=z_off, xu_offsets=xu_off, locators=loc
    )


def build_input_matrix(config, m):
    """Sample every input channel over the horizon into a (T, m) array."""
    T = config.horizon
    t = np.arange(T, dtype=float)
    U = np.zeros((T, m))
    for ch, spec in enumerate(config.inputs):
        if spec.kind == "constant":
            U[:, ch] = spec.value
        elif spec.kind == "sinusoid":
            U[:, ch] = spec.amplitude * np.sin(2.0 * np.pi * t / spec.period)
    return U


def initial_observer_states(config, N, n):
    """Per-agent initial full-state estimates as an (N, n) array.

    ``"random"`` draws one standard normal (N, n) block from the
    configured seed; ``"zero"`` is all zeros.
    """
    if isinstance(config.observer_init, str):
        if config.observer_init == "random":
            rng = np.random.default_rng(config.seed)
            return rng.standard_normal((N, n))
        return np.zeros((N, n))
    return np.array(config.observer_init, dtype=float)


@dataclass(frozen=True)
class SimulationTrace:
    """Recorded trajectories of one network run.

    ``states`` is (T+1, n); ``estimates`` is (T+1, N, n) in model
    coordinates.  ``error_norms`` is the per-agent estimation error
    2-norm; ``mode_error_norms`` restricts the error to each unstable
    miniblock, in the order listed by ``modes``.
    """

    times: np.ndarray
    states: np.ndarray
    estimates: np.ndarray
    error_norms: np.ndarray
    mode_error_norms: np.ndarray
    modes: tuple
    transform: np.ndarray | None = None

    @property
    def horizon(self):
        return int(self.times[-1])

    @property
    def N(self):
        return self.estimates.shape[1]

    def _require_transform(self):
        if self.transform is None:
            raise ValueError("model provides no coordinate transform")
        return np.asarray(self.transform)

    def states_original(self):
        """Plant trajectory mapped to original coordinates."""
        T = self._require_transform()
        return self.states @ T.T

    def estimates_original(self):
        """Estimate trajectories mapped to original coordinates."""
        T = self._require_transform()
        return self.estimates @ T.T

    def error_norms_original(self):
        """Per-agent error 2-norms in original coordinates."""
        T = self._require_transform()
        err = (self.estimates - self.states[:, None, :]) @ T.T
        return np.linalg.norm(err, axis=2)


def run(model, sensors, graph, plan, config, structure=None):
    """Simulate the closed network over the configured horizon.

    Aborts with DivergenceError when the stacked state's max-norm
    exceeds the overflow guard, reporting the offending step.
    """
    if structure is None:
        structure = build_network_structure(model, sensors)
    if set(plan.coupling) != set(model.unstable_modes()):
        raise ValueError("gain plan does not cover the model's unstable modes")
    if set(plan.injections) != set(range(1, sensors.N + 1)):
        raise ValueError("gain plan does not cover every agent")

    op = build_network_operator(model, sensors, graph, plan, structure)
    U = build_input_matrix(config, model.m)
    O = initial_observer_states(config, sensors.N, model.n)

    parts = [np.asarray(config.x0, dtype=float)]
    for i in range(1, sensors.N + 1):
        sub = structure.subsystems[i]
        part = structure.partitions[i]
        parts.append(O[i - 1][sub.index_map])
        parts.append(O[i - 1][part.index_map])
    S0 = np.concatenate(parts)

    hist, bad = affine_iterate(
        np.ascontiguousarray(op.M),
        np.ascontiguousarray(op.W),
        np.ascontiguousarray(U),
        np.ascontiguousarray(S0),
        OVERFLOW_LIMIT,
    )
    if bad >= 0:
        raise DivergenceError(
            f"network state exceeded the overflow guard {OVERFLOW_LIMIT:g} "
            f"at step {bad}",
            step=int(bad),
        )

    n = model.n
    T = config.horizon
    states = hist[:, :n]
    estimates = np.empty((T + 1, sensors.N, n))
    for i in range(sensors.N):
        estimates[:, i, :] = hist[:, op.locators[i]]
    err = estimates - states[:, None, :]
    error_norms = np.linalg.norm(err, axis=2)
    modes = model.unstable_modes()
    mode_error_norms = np.empty((T + 1, sensors.N, len(modes)))
    for k, (ell, h) in enumerate(modes):
        sl = model.block_slice(ell, h)
        mode_error_norms[:, :, k] = np.linalg.norm(err[:, :, sl], axis=2)
    return SimulationTrace(
        times=np.arange(T + 1),
        states=states,
        estimates=estimates,
        error_norms=error_norms,
        mode_error_norms=mode_error_norms,
        modes=modes,
        transform=model.T,
    )


@dataclass(frozen=True)
class SimMetrics:
    """Per-agent summary of a run's estimation error."""

    final: dict
    peak: dict
    decay: dict
    horizon: int

    @property
    def worst_final(self):
        return max(self.final.values())


def error_metrics(trace):
    """Final, peak, and tail decay rate of each agent's error norm.

    The decay rate is the geometric per-step ratio over the second half
    of the horizon, 0 when the error has already reached exact zero.
    """
    T = trace.horizon
    t0 = T // 2
    final, peak, decay = {}, {}, {}
    for i in range(1, trace.N + 1):
        e = trace.error_norms[:, i - 1]
        final[i] = float(e[-1])
        peak[i] = float(np.max(e))
        if e[t0] > 0.0 and e[-1] > 0.0 and T > t0:
            decay[i] = float((e[-1] / e[t0]) ** (1.0 / (T - t0)))
        else:
            decay[i] = 0.0
    return SimMetrics(final=final, peak=peak, decay=decay, horizon=T)
