"""Observability structure of a sensor network against a Jordan-form plant.

Each agent is classified against every miniblock by where its output
matrix touches the block's unit columns:

* group 1: the whole column block is zero (the agent never sees the mode),
* group 2: the first unit column group is zero but the block is not; the
  1-based index of the first non-zero unit column group is recorded as
  ``t_index`` (always >= 2),
* group 3: the first unit column group is non-zero (the agent can observe
  the whole miniblock on its own).

Zero means every entry has absolute value at most ``ZTOL``.  For a
complex eigenvalue a unit column group is two adjacent columns.

From the classification each agent gets two complementary state
decompositions.  The detectable subsystem stacks the observable tails of
its group-2 miniblocks, its whole group-3 miniblocks, and the whole
stable part; an output injection on this subsystem can reconstruct it
from the agent's own measurements.  The consensus partition stacks the
whole group-1 and group-2 unstable miniblocks, which the agent can only
estimate through neighbor exchange.  The retained (post-selection) part
of the subsystem and the consensus partition together tile the global
state exactly once.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import AssumptionError
from .model import assemble_A

# Absolute threshold below which a sensor entry is structural zero.
ZTOL = 1e-12

# Relative singular value threshold for all rank decisions.
RANK_RTOL = 1e-9


def _is_zero(block):
    return block.size == 0 or float(np.max(np.abs(block))) <= ZTOL


def _rank(M):
    M = np.asarray(M)
    if min(M.shape) == 0:
        return 0
    s = np.linalg.svd(M, compute_uv=False)
    if s[0] == 0.0:
        return 0
    return int(np.sum(s > RANK_RTOL * s[0]))


@dataclass(frozen=True)
class AgentClassification:
    """Miniblock groups of one agent, keyed by eigenvalue index."""

    agent: int
    g1: dict
    g2: dict
    g3: dict
    t_index: dict

    def group_of(self, ell, h):
        if h in self.g1[ell]:
            return 1
        if h in self.g2[ell]:
            return 2
        if h in self.g3[ell]:
            return 3
        raise ValueError(f"no miniblock ({ell}, {h}) in classification")


@dataclass(frozen=True)
class ModeAgentSets:
    """Agents per mode: V1 blind, V2 partial, V3 self-sufficient."""

    modes: tuple
    v1: dict
    v2: dict
    v3: dict


@dataclass(frozen=True)
class DetectabilityReport:
    """Rank test of the stacked sensor set over all unstable eigenvalues.

    ``ranks[l]`` is the rank of the test matrix for unstable eigenvalue
    ``l`` (full rank is ``n``); ``deficient`` lists eigenvalues that miss
    full rank.  ``empty_v3_modes`` lists unstable modes no agent fully
    observes, which is incompatible with joint detectability.
    """

    holds: bool
    n: int
    ranks: dict
    deficient: tuple
    empty_v3_modes: tuple


@dataclass(frozen=True)
class IndependenceReport:
    """Column independence condition for one agent.

    For each unstable eigenvalue the agent's group-2 first visible unit
    columns and group-3 leading unit columns must be linearly
    independent.  ``details[l] = (columns, rank)``.
    """

    agent: int
    holds: bool
    failing: tuple
    details: dict


@dataclass(frozen=True)
class DetectableSubsystem:
    """States agent ``agent`` can reconstruct from its own output.

    The subsystem state stacks, in order: observable tails of unstable
    group-2 miniblocks (``n_partial`` entries), whole unstable group-3
    miniblocks, the whole stable part.  ``index_map`` holds the global
    state index of each subsystem entry; ``select`` drops the leading
    tail entries, leaving the part this agent contributes to the fused
    network estimate.
    """

    agent: int
    F: np.ndarray
    H: np.ndarray
    G: np.ndarray
    select: np.ndarray
    index_map: np.ndarray
    n_partial: int

    @property
    def dim(self):
        return int(self.index_map.shape[0])

    @property
    def retained_indices(self):
        return self.index_map[self.n_partial :]


@dataclass(frozen=True)
class ConsensusPartition:
    """Unstable states agent ``agent`` estimates through its neighbors.

    Whole group-1 and group-2 unstable miniblocks in lexicographic mode
    order.  ``bounds[k]:bounds[k+1]`` is the slice of mode ``modes[k]``
    within the partition state; ``index_map`` holds global indices.
    """

    agent: int
    modes: tuple
    A_u: np.ndarray
    B_u: np.ndarray
    bounds: np.ndarray
    index_map: np.ndarray

    @property
    def dim(self):
        return int(self.index_map.shape[0])

    def mode_slice(self, mode):
        k = self.modes.index(mode)
        return slice(int(self.bounds[k]), int(self.bounds[k + 1]))


def classify_agent(model, C_i, agent=0):
    """Group every miniblock of the plant for one sensor matrix."""
    C_i = np.asarray(C_i, dtype=float)
    if C_i.ndim != 2 or C_i.shape[1] != model.n:
        raise ValueError(
            f"sensor matrix must have {model.n} columns, got shape {C_i.shape}"
        )
    g1, g2, g3, t_index = {}, {}, {}, {}
    for ell in range(1, model.r + 1):
        us = model.eig_of(ell).unit_size
        s1, s2, s3 = set(), set(), set()
        for b in model.miniblocks_of(ell):
            blk = C_i[:, b.state_offset : b.state_offset + b.dim_scalar]
            if _is_zero(blk):
                s1.add(b.block_index)
                continue
            first_nonzero = None
            for u in range(1, b.dim_units + 1):
                if not _is_zero(blk[:, (u - 1) * us : u * us]):
                    first_nonzero = u
                    break
            if first_nonzero == 1:
                s3.add(b.block_index)
            else:
                s2.add(b.block_index)
                t_index[(ell, b.block_index)] = first_nonzero
        g1[ell] = frozenset(s1)
        g2[ell] = frozenset(s2)
        g3[ell] = frozenset(s3)
    return AgentClassification(agent=agent, g1=g1, g2=g2, g3=g3, t_index=t_index)


def classify_all(model, sensors):
    """Classification of every agent, keyed by 1-based agent label."""
    return {
        i: classify_agent(model, sensors.C(i), agent=i)
        for i in range(1, sensors.N + 1)
    }


def mode_agent_sets(model, classifications):
    """Invert per-agent classifications into per-mode agent sets."""
    modes = tuple(b.mode for b in model.miniblocks)
    v1 = {mode: set() for mode in modes}
    v2 = {mode: set() for mode in modes}
    v3 = {mode: set() for mode in modes}
    for i, cls in classifications.items():
        for ell, h in modes:
            group = cls.group_of(ell, h)
            (v1, v2, v3)[group - 1][(ell, h)].add(i)
    return ModeAgentSets(
        modes=modes,
        v1={mode: frozenset(s) for mode, s in v1.items()},
        v2={mode: frozenset(s) for mode, s in v2.items()},
        v3={mode: frozenset(s) for mode, s in v3.items()},
    )


def check_joint_detectability(model, sensors, classifications=None):
    """Eigenvalue rank test of the stacked sensor set.

    For each unstable eigenvalue ``lam`` the matrix ``[A - lam*I; C]``
    stacked over all agents must have full column rank ``n``.  Modes no
    agent fully observes are reported alongside, since an empty V3 set
    for an unstable mode rules out joint detectability.
    """
    if classifications is None:
        classifications = classify_all(model, sensors)
    A = assemble_A(model)
    C = sensors.stacked()
    n = model.n
    ranks = {}
    deficient = []
    for ell in range(1, model.r_u + 1):
        lam = model.eig_of(ell).value
        pbh = np.vstack([A - lam * np.eye(n), C.astype(complex)])
        rank = _rank(pbh)
        ranks[ell] = rank
        if rank < n:
            deficient.append(ell)
    sets = mode_agent_sets(model, classifications)
    empty = tuple(
        mode for mode in model.unstable_modes() if not sets.v3[mode]
    )
    holds = not deficient and not empty
    return DetectabilityReport(
        holds=holds,
        n=n,
        ranks=ranks,
        deficient=tuple(deficient),
        empty_v3_modes=empty,
    )


def check_independence(model, C_i, classification):
    """Column independence of one agent's visible unit columns.

    For each unstable eigenvalue, collects one vector per group-2
    miniblock (its ``t_index`` unit column group) and per group-3
    miniblock (its leading unit column group); the collection must be
    linearly independent.  A complex pair's two adjacent real columns
    represent the single complex column ``col1 + i*col2``, so the rank
    test runs over the complex field.  ``details[l] = (vectors, rank)``.
    """
    C_i = np.asarray(C_i, dtype=float)
    failing = []
    details = {}
    for ell in range(1, model.r_u + 1):
        us = model.eig_of(ell).unit_size
        cols = []

        def unit_vector(b, unit):
            start = b.state_offset + (unit - 1) * us
            if us == 1:
                return C_i[:, start].astype(complex)
            return C_i[:, start] + 1j * C_i[:, start + 1]

        for h in sorted(classification.g2[ell]):
            b = model.miniblock(ell, h)
            cols.append(unit_vector(b, classification.t_index[(ell, h)]))
        for h in sorted(classification.g3[ell]):
            cols.append(unit_vector(model.miniblock(ell, h), 1))
        if not cols:
            details[ell] = (0, 0)
            continue
        stack = np.column_stack(cols)
        rank = _rank(stack)
        details[ell] = (stack.shape[1], rank)
        if rank < stack.shape[1]:
            failing.append(ell)
    return IndependenceReport(
        agent=classification.agent,
        holds=not failing,
        failing=tuple(failing),
        details=details,
    )


def build_detectable_subsystem(model, C_i, classification):
    """Assemble the self-reconstructible subsystem of one agent.

    Requires the agent's independence condition; raises AssumptionError
    naming the agent and eigenvalues otherwise.
    """
    report = check_independence(model, C_i, classification)
    if not report.holds:
        raise AssumptionError(
            f"agent {classification.agent}: visible unit columns are dependent "
            f"for eigenvalue(s) {list(report.failing)}",
            agents=(classification.agent,),
            modes=tuple((ell, 0) for ell in report.failing),
        )
    C_i = np.asarray(C_i, dtype=float)
    idx = []
    n_partial = 0
    for ell in range(1, model.r_u + 1):
        us = model.eig_of(ell).unit_size
        for h in sorted(classification.g2[ell]):
            b = model.miniblock(ell, h)
            t = classification.t_index[(ell, h)]
            start = b.state_offset + (t - 1) * us
            stop = b.state_offset + b.dim_scalar
            idx.extend(range(start, stop))
            n_partial += stop - start
    for ell in range(1, model.r_u + 1):
        for h in sorted(classification.g3[ell]):
            sl = model.block_slice(ell, h)
            idx.extend(range(sl.start, sl.stop))
    for ell in range(model.r_u + 1, model.r + 1):
        for b in model.miniblocks_of(ell):
            idx.extend(range(b.state_offset, b.state_offset + b.dim_scalar))
    index_map = np.array(idx, dtype=np.intp)
    A = assemble_A(model)
    F = A[np.ix_(index_map, index_map)]
    H = C_i[:, index_map]
    G = np.asarray(model.B)[index_map]
    z = index_map.shape[0]
    select = np.hstack(
        [np.zeros((z - n_partial, n_partial)), np.eye(z - n_partial)]
    )
    for arr in (F, H, G, select, index_map):
        arr.setflags(write=False)
    return DetectableSubsystem(
        agent=classification.agent,
        F=F,
        H=H,
        G=G,
        select=select,
        index_map=index_map,
        n_partial=n_partial,
    )


def build_consensus_partition(model, classification):
    """Assemble the neighbor-estimated unstable partition of one agent."""
    modes = []
    idx = []
    bounds = [0]
    for ell in range(1, model.r_u + 1):
        for h in sorted(classification.g1[ell] | classification.g2[ell]):
            b = model.miniblock(ell, h)
            modes.append((ell, h))
            idx.extend(range(b.state_offset, b.state_offset + b.dim_scalar))
            bounds.append(len(idx))
    index_map = np.array(idx, dtype=np.intp)
    A = assemble_A(model)
    A_u = A[np.ix_(index_map, index_map)]
    B_u = np.asarray(model.B)[index_map]
    bounds = np.array(bounds, dtype=np.intp)
    for arr in (A_u, B_u, bounds, index_map):
        arr.setflags(write=False)
    return ConsensusPartition(
        agent=classification.agent,
        modes=tuple(modes),
        A_u=A_u,
        B_u=B_u,
        bounds=bounds,
        index_map=index_map,
    )


def permutation_matrix(model, subsystem):
    """Materialize the state permutation behind one agent's subsystem.

    Returns the n x n permutation ``Q`` whose trailing columns select the
    subsystem entries in order and whose leading columns select the
    remaining (agent-invisible) entries in state order.  Because the
    invisible entries never feed the subsystem and carry no sensor
    columns, ``Q.T A Q`` has an exactly zero lower-left block and
    ``C_i Q`` has exactly zero leading columns.
    """
    n = model.n
    inside = set(int(g) for g in subsystem.index_map)
    leading = [g for g in range(n) if g not in inside]
    order = leading + [int(g) for g in subsystem.index_map]
    Q = np.zeros((n, n))
    Q[order, np.arange(n)] = 1.0
    Q.setflags(write=False)
    return Q


@dataclass(frozen=True)
class NetworkAnalysis:
    """Classification plus assumption reports for a whole network."""

    classifications: dict
    mode_sets: ModeAgentSets
    detectability: DetectabilityReport
    independence: dict

    @property
    def holds(self):
        return self.detectability.holds and all(
            r.holds for r in self.independence.values()
        )


@dataclass(frozen=True)
class NetworkStructure:
    """Per-agent subsystems and partitions, keyed by agent label."""

    subsystems: dict
    partitions: dict


def analyze_network(model, sensors):
    """Classify every agent and evaluate both design assumptions."""
    classifications = classify_all(model, sensors)
    sets = mode_agent_sets(model, classifications)
    detect = check_joint_detectability(model, sensors, classifications)
    independence = {
        i: check_independence(model, sensors.C(i), classifications[i])
        for i in range(1, sensors.N + 1)
    }
    return NetworkAnalysis(
        classifications=classifications,
        mode_sets=sets,
        detectability=detect,
        independence=independence,
    )


def build_network_structure(model, sensors, analysis=None):
    """Build all per-agent decompositions, refusing on failed assumptions."""
    if analysis is None:
        analysis = analyze_network(model, sensors)
    if not analysis.detectability.holds:
        rep = analysis.detectability
        raise AssumptionError(
            "joint detectability fails: "
            f"rank-deficient eigenvalue(s) {list(rep.deficient)}, "
            f"unobserved unstable mode(s) {list(rep.empty_v3_modes)}",
            modes=rep.empty_v3_modes,
        )
    bad = [i for i, r in analysis.independence.items() if not r.holds]
    if bad:
        raise AssumptionError(
            f"independence condition fails for agent(s) {bad}",
            agents=tuple(bad),
        )
    subsystems = {}
    partitions = {}
    for i, cls in analysis.classifications.items():
        sub = build_detectable_subsystem(model, sensors.C(i), cls)
        part = build_consensus_partition(model, cls)
        cover = np.concatenate([sub.retained_indices, part.index_map])
        assert np.array_equal(np.sort(cover), np.arange(model.n)), (
            f"agent {i}: retained and consensus indices do not tile the state"
        )
        subsystems[i] = sub
        partitions[i] = part
    return NetworkStructure(subsystems=subsystems, partitions=partitions)
