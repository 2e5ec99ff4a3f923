"""Observer gain synthesis: output injection and consensus coupling.

Output injection gains are designed per agent on the detectable
subsystem by iterating the filter Riccati fixed point with unit weights,
then verified by the spectral radius of the closed loop.

Consensus coupling gains are scalars per unstable mode.  The mode error
dynamics over the non-self-sufficient agents is the Kronecker product
``(I - k*Lr) (x) A_blk`` with ``Lr`` the Laplacian reduced by the
self-sufficient set, so its eigenvalues are the pairwise products
``(1 - k*mu) * lam``.  Stability therefore reduces to the scalar
condition ``|1 - k*mu| < 1/rho`` for every eigenvalue ``mu`` of ``Lr``,
with ``rho`` the modulus of the mode's plant eigenvalue.  For each
``mu = a + b*i`` this is the quadratic ``|mu|^2 k^2 - 2 a k +
(1 - 1/rho^2) < 0``, giving an open interval that is empty when ``a <= 0``
or the discriminant is not positive; the per-mode interval intersects
these over the spectrum of ``Lr``.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass

import numpy as np

from .errors import EigensolverError, GainSynthesisError, InfeasibleGainError
from .kernels import dare_fixed_point
from .structure import analyze_network, build_network_structure

# Margin below 1 required of every verified spectral radius.
STOL = 1e-9

# Reduced-Laplacian eigenvalues below this modulus mean an unreachable
# agent and make the mode infeasible outright.
MU_ZTOL = 1e-9

# Riccati fixed-point stopping rule.
DARE_TOL = 1e-10
DARE_MAX_ITER = 100_000


def eigenvalues(M):
    """Eigenvalues of a square real matrix as a complex array."""
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {M.shape}")
    if M.shape[0] == 0:
        return np.zeros(0, dtype=complex)
    if not np.all(np.isfinite(M)):
        raise ValueError("matrix contains non-finite entries")
    try:
        return np.linalg.eigvals(M)
    except np.linalg.LinAlgError as exc:
        raise EigensolverError(f"eigensolver failed to converge: {exc}") from exc


def spectral_radius(M):
    """Largest eigenvalue modulus (0 for an empty matrix)."""
    w = eigenvalues(M)
    if w.size == 0:
        return 0.0
    return float(np.max(np.abs(w)))


def reduced_laplacian(laplacian, v3):
    """Delete the rows and columns of the self-sufficient agents.

    ``v3`` holds 1-based agent labels.  Returns ``(reduced, kept)`` with
    ``kept`` the remaining labels in ascending order.
    """
    L = np.asarray(laplacian, dtype=float)
    N = L.shape[0]
    v3 = set(v3)
    for j in v3:
        if not 1 <= j <= N:
            raise ValueError(f"agent label {j} out of range 1..{N}")
    kept = tuple(j for j in range(1, N + 1) if j not in v3)
    idx = np.array([j - 1 for j in kept], dtype=np.intp)
    return L[np.ix_(idx, idx)], kept


@dataclass(frozen=True)
class EigenConstraint:
    """Feasibility contribution of one reduced-Laplacian eigenvalue."""

    mu: complex
    feasible: bool
    reason: str | None
    lower: float | None
    upper: float | None


@dataclass(frozen=True)
class FeasibleInterval:
    """Open interval of stabilizing coupling gains for one mode.

    ``unconstrained`` marks an empty reduced Laplacian (every agent is
    self-sufficient): any gain works and 0 is used.  ``empty`` marks an
    infeasible mode; ``per_eigen`` explains which eigenvalue failed or
    what each contributed.
    """

    lower: float | None
    upper: float | None
    empty: bool
    unconstrained: bool
    per_eigen: tuple
    mode: tuple | None = None

    def contains(self, k):
        if self.unconstrained:
            return math.isfinite(k)
        if self.empty:
            return False
        return self.lower < k < self.upper

    @property
    def midpoint(self):
        if self.unconstrained:
            return 0.0
        if self.empty:
            raise ValueError("empty interval has no midpoint")
        return 0.5 * (self.lower + self.upper)


def feasible_interval(rho, spectrum, mode=None):
    """Intersect the per-eigenvalue gain conditions for one mode.

    ``rho`` is the modulus of the mode's plant eigenvalue (at least 1);
    ``spectrum`` holds the reduced-Laplacian eigenvalues.
    """
    if not rho >= 1.0:
        raise ValueError(f"mode eigenvalue modulus must be >= 1, got {rho}")
    spectrum = np.asarray(spectrum, dtype=complex).ravel()
    if spectrum.size == 0:
        return FeasibleInterval(
            lower=None, upper=None, empty=False, unconstrained=True,
            per_eigen=(), mode=mode,
        )
    c = 1.0 - 1.0 / (rho * rho)
    per = []
    lo, hi = -math.inf, math.inf
    infeasible = False
    for mu in spectrum:
        mu = complex(mu)
        a = mu.real
        mod2 = abs(mu) ** 2
        if abs(mu) <= MU_ZTOL:
            per.append(EigenConstraint(mu, False, "zero eigenvalue", None, None))
            infeasible = True
            continue
        if a <= 0.0:
            per.append(
                EigenConstraint(mu, False, "nonpositive real part", None, None)
            )
            infeasible = True
            continue
        disc = a * a - mod2 * c
        if disc <= 0.0:
            per.append(
                EigenConstraint(mu, False, "negative discriminant", None, None)
            )
            infeasible = True
            continue
        sq = math.sqrt(disc)
        l, u = (a - sq) / mod2, (a + sq) / mod2
        per.append(EigenConstraint(mu, True, None, l, u))
        lo, hi = max(lo, l), min(hi, u)
    empty = infeasible or not lo < hi
    return FeasibleInterval(
        lower=None if empty else lo,
        upper=None if empty else hi,
        empty=empty,
        unconstrained=False,
        per_eigen=tuple(per),
        mode=mode,
    )


def pick_coupling_gains(intervals, overrides=None):
    """Choose one gain per mode: the midpoint, unless overridden.

    ``overrides`` maps modes to user gains, each of which must lie
    strictly inside its mode's interval.  Raises InfeasibleGainError on
    empty intervals or out-of-interval overrides.
    """
    overrides = dict(overrides or {})
    unknown = set(overrides) - set(intervals)
    if unknown:
        raise InfeasibleGainError(
            f"gains supplied for unknown mode(s) {sorted(unknown)}",
            modes=tuple(sorted(unknown)),
        )
    empty = tuple(mode for mode, iv in intervals.items() if iv.empty)
    if empty:
        raise InfeasibleGainError(
            f"no stabilizing coupling gain exists for mode(s) {list(empty)}",
            modes=empty,
        )
    gains = {}
    for mode, iv in intervals.items():
        if mode in overrides:
            k = float(overrides[mode])
            if not iv.contains(k):
                bound = (
                    "any finite value"
                    if iv.unconstrained
                    else f"({iv.lower:.12g}, {iv.upper:.12g})"
                )
                raise InfeasibleGainError(
                    f"gain {k:g} for mode {mode} lies outside the feasible "
                    f"interval {bound}",
                    modes=(mode,),
                )
            gains[mode] = k
        else:
            gains[mode] = iv.midpoint
    return gains


@dataclass(frozen=True)
class OutputInjection:
    """Designed injection gain with its verified closed-loop radius."""

    L: np.ndarray
    radius: float
    iterations: int


def design_output_injection(F, H, agent=None):
    """Stabilizing injection gain for one detectable subsystem.

    Iterates the Riccati fixed point, forms the steady-state gain, and
    verifies the closed loop ``F - L H`` is Schur with margin.  Raises
    GainSynthesisError when the iteration stalls or verification fails.
    """
    F = np.asarray(F, dtype=float)
    H = np.asarray(H, dtype=float)
    who = "" if agent is None else f"agent {agent}: "
    z = F.shape[0]
    p = H.shape[0]
    if z == 0:
        L = np.zeros((0, p))
        return OutputInjection(L=L, radius=0.0, iterations=0)
    if p == 0:
        radius = spectral_radius(F)
        if not radius < 1.0 - STOL:
            raise GainSynthesisError(
                f"{who}subsystem has no outputs but spectral radius "
                f"{radius:.12g}",
                agent=agent,
            )
        return OutputInjection(L=np.zeros((z, 0)), radius=radius, iterations=0)
    try:
        # undetectable inputs make the iterate blow up before the cap;
        # that is reported below, not worth numpy's overflow chatter
        with np.errstate(over="ignore", invalid="ignore"):
            P, iters, delta = dare_fixed_point(
                np.ascontiguousarray(F), np.ascontiguousarray(H), DARE_TOL, DARE_MAX_ITER
            )
    except np.linalg.LinAlgError as exc:
        raise GainSynthesisError(
            f"{who}Riccati iteration broke down ({exc}); the subsystem is "
            "likely not detectable",
            agent=agent,
        ) from exc
    if not delta < DARE_TOL:
        raise GainSynthesisError(
            f"{who}Riccati iteration did not converge in {DARE_MAX_ITER} "
            f"steps (last update {delta:.3g})",
            agent=agent,
        )
    G = F @ P @ H.T
    S = H @ P @ H.T + np.eye(p)
    L = np.linalg.solve(S, G.T).T
    radius = spectral_radius(F - L @ H)
    if not radius < 1.0 - STOL:
        raise GainSynthesisError(
            f"{who}closed loop is not Schur stable: spectral radius "
            f"{radius:.12g}",
            agent=agent,
        )
    L.setflags(write=False)
    return OutputInjection(L=L, radius=float(radius), iterations=int(iters))


def mode_error_matrix(k, reduced, A_blk):
    """Consensus error dynamics ``(I - k*Lr) (x) A_blk`` for one mode."""
    reduced = np.asarray(reduced, dtype=float)
    A_blk = np.asarray(A_blk, dtype=float)
    q = reduced.shape[0]
    return np.kron(np.eye(q) - k * reduced, A_blk)


def _directed_hausdorff(a, b):
    if a.size == 0:
        return 0.0
    if b.size == 0:
        return math.inf
    return float(np.max(np.min(np.abs(a[:, None] - b[None, :]), axis=1)))


def kron_spectrum_check(k, reduced, A_blk):
    """Compare the product spectrum against the assembled matrix.

    The eigenvalues of ``(I - k*Lr) (x) A_blk`` are the pairwise
    products ``(1 - k*mu) * lam``; both routes are computed here and the
    Hausdorff distance between the two multisets is returned.
    """
    reduced = np.asarray(reduced, dtype=float)
    A_blk = np.asarray(A_blk, dtype=float)
    mus = eigenvalues(reduced)
    lams = eigenvalues(A_blk)
    products = ((1.0 - k * mus)[:, None] * lams[None, :]).ravel()
    direct = eigenvalues(mode_error_matrix(k, reduced, A_blk))
    dist = max(
        _directed_hausdorff(products, direct),
        _directed_hausdorff(direct, products),
    )
    return KronSpectrumReport(products=products, direct=direct, hausdorff=dist)


@dataclass(frozen=True)
class KronSpectrumReport:
    """Both eigenvalue routes and their multiset Hausdorff distance."""

    products: np.ndarray
    direct: np.ndarray
    hausdorff: float


@dataclass(frozen=True)
class ForestReport:
    """Reachability of the non-self-sufficient agents from the roots."""

    reachable: bool
    orphaned: tuple
    reached: tuple


def spanning_forest_diagnostic(graph, v3):
    """Check every agent is reachable from the self-sufficient set.

    Walks communication edges forward (from sender to receiver) starting
    at the agents in ``v3``.  A feasible mode requires a spanning forest
    rooted in ``v3``; agents no root reaches are reported as orphaned.
    """
    N = graph.N
    adj = np.asarray(graph.adjacency)
    seen = set(v3)
    queue = deque(sorted(v3))
    while queue:
        j = queue.popleft()
        for i in range(1, N + 1):
            if i not in seen and adj[i - 1, j - 1] > 0.0:
                seen.add(i)
                queue.append(i)
    orphaned = tuple(i for i in range(1, N + 1) if i not in seen)
    return ForestReport(
        reachable=not orphaned,
        orphaned=orphaned,
        reached=tuple(sorted(seen)),
    )


@dataclass(frozen=True)
class GainPlan:
    """Complete verified gain set for one network.

    ``injections`` maps agent labels to OutputInjection results;
    ``coupling`` maps unstable modes to scalar gains; ``intervals`` and
    ``mode_radii`` record the feasibility analysis and the verified
    spectral radius of each mode's error dynamics.
    """

    injections: dict
    coupling: dict
    intervals: dict
    mode_radii: dict
    verified: bool

    def L(self, i):
        return self.injections[i].L


def design_gains(model, sensors, graph, overrides=None, analysis=None,
                 structure=None):
    """End-to-end gain synthesis for a network.

    Checks both structural assumptions, designs every agent's output
    injection, computes per-mode feasibility intervals, picks coupling
    gains (midpoint unless overridden), and verifies every closed loop.
    Raises AssumptionError, GainSynthesisError, or InfeasibleGainError
    on the corresponding failure; an infeasible mode's error carries a
    reachability diagnostic naming orphaned agents.
    """
    if analysis is None:
        analysis = analyze_network(model, sensors)
    if structure is None:
        structure = build_network_structure(model, sensors, analysis)

    injections = {}
    for i, sub in structure.subsystems.items():
        injections[i] = design_output_injection(sub.F, sub.H, agent=i)

    intervals = {}
    reduced = {}
    for mode in model.unstable_modes():
        ell, _ = mode
        v3 = analysis.mode_sets.v3[mode]
        red, _kept = reduced_laplacian(graph.laplacian, v3)
        reduced[mode] = red
        rho = model.eig_of(ell).modulus
        intervals[mode] = feasible_interval(rho, eigenvalues(red), mode=mode)

    bad = tuple(mode for mode, iv in intervals.items() if iv.empty)
    if bad:
        diagnostics = {
            mode: spanning_forest_diagnostic(graph, analysis.mode_sets.v3[mode])
            for mode in bad
        }
        orphan_note = "; ".join(
            f"mode {mode}: orphaned agent(s) {list(diagnostics[mode].orphaned)}"
            for mode in bad
            if diagnostics[mode].orphaned
        )
        raise InfeasibleGainError(
            f"no stabilizing coupling gain exists for mode(s) {list(bad)}"
            + (f" ({orphan_note})" if orphan_note else ""),
            modes=bad,
            diagnostics=diagnostics,
        )

    coupling = pick_coupling_gains(intervals, overrides)

    mode_radii = {}
    unstable = []
    for mode, k in coupling.items():
        ell, h = mode
        radius = spectral_radius(
            mode_error_matrix(k, reduced[mode], model.block_matrix(ell, h))
        )
        mode_radii[mode] = radius
        if not radius < 1.0 - STOL:
            unstable.append(mode)
    if unstable:
        raise InfeasibleGainError(
            f"verification failed: consensus error dynamics not Schur stable "
            f"for mode(s) {unstable}",
            modes=tuple(unstable),
        )
    return GainPlan(
        injections=injections,
        coupling=coupling,
        intervals=intervals,
        mode_radii=mode_radii,
        verified=True,
    )
