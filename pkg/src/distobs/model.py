"""Plant, sensor, graph, and simulation descriptions.

The plant state matrix is described structurally rather than numerically:
a list of distinct eigenvalues, each with the unit sizes of its Jordan
miniblocks.  A real eigenvalue ``a`` contributes scalar units; a complex
conjugate pair ``a +/- b*i`` (stored with ``b > 0``) contributes 2x2
rotation units ``[[a, b], [-b, a]]`` with identity superdiagonal coupling
inside a miniblock.  The full state matrix in these coordinates is block
diagonal over miniblocks and is assembled on demand by ``assemble_A``.

Naming convention used across the toolkit: agents ``i``, eigenvalue
indices ``l`` and miniblock indices ``h`` are 1-based labels, matching
how they appear in reports and gain files.  State offsets and index maps
are 0-based positions into the global state vector.

Eigenvalues are stored unstable-first (modulus >= 1 before modulus < 1,
original relative order otherwise preserved).  When loading re-sorts the
file's entries, the permutation is recorded on the model so results can
be mapped back to the file's ordering.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ModelFormatError

# Two distinct eigenvalues closer than this are rejected as duplicates.
DISTINCT_TOL = 1e-9

_TOP_KEYS = {"eigenvalues", "B", "sensors", "adjacency", "transform", "simulation"}
_EIG_KEYS = {"re", "im", "miniblock_dims"}
_SIM_KEYS = {"horizon", "x0", "input", "observer_init", "seed"}
_INPUT_KINDS = {"zero", "constant", "sinusoid"}


def _frozen(a, dtype=float):
    out = np.array(a, dtype=dtype)
    out.setflags(write=False)
    return out


def _fail(msg):
    raise ModelFormatError(msg)


@dataclass(frozen=True)
class EigenvalueSpec:
    """One distinct eigenvalue of the plant.

    ``im == 0`` means a real eigenvalue with scalar units; ``im > 0``
    means the conjugate pair ``re +/- im*i`` with 2x2 real units.
    """

    re: float
    im: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.re) and math.isfinite(self.im)):
            _fail("eigenvalue entries must be finite")
        if self.im < 0.0:
            _fail("complex eigenvalues are stored with positive imaginary part")

    @property
    def is_real(self):
        return self.im == 0.0

    @property
    def unit_size(self):
        return 1 if self.is_real else 2

    @property
    def modulus(self):
        return math.hypot(self.re, self.im)

    @property
    def unstable(self):
        return self.modulus >= 1.0

    @property
    def value(self):
        """Representative complex value (positive imaginary part)."""
        return complex(self.re, self.im)


@dataclass(frozen=True)
class MiniblockSpec:
    """One Jordan miniblock: position ``h`` under eigenvalue ``l``.

    ``dim_units`` counts Jordan units; the scalar width is
    ``dim_units * unit_size``.  ``state_offset`` is the 0-based scalar
    index of the miniblock's first state entry.
    """

    eig_index: int
    block_index: int
    dim_units: int
    unit_size: int
    state_offset: int

    @property
    def dim_scalar(self):
        return self.dim_units * self.unit_size

    @property
    def mode(self):
        return (self.eig_index, self.block_index)


@dataclass(frozen=True)
class PlantModel:
    """Structural plant description in real Jordan coordinates."""

    n: int
    m: int
    eigs: tuple[EigenvalueSpec, ...]
    miniblocks: tuple[MiniblockSpec, ...]
    B: np.ndarray
    T: np.ndarray | None = None
    eig_order: tuple[int, ...] = ()
    state_permutation: tuple[int, ...] = ()

    @property
    def r(self):
        """Number of distinct eigenvalues."""
        return len(self.eigs)

    @property
    def r_u(self):
        """Number of unstable eigenvalues (they come first)."""
        return sum(1 for e in self.eigs if e.unstable)

    def eig_of(self, ell):
        if not 1 <= ell <= self.r:
            raise ValueError(f"eigenvalue index {ell} out of range 1..{self.r}")
        return self.eigs[ell - 1]

    def miniblocks_of(self, ell):
        self.eig_of(ell)
        return tuple(b for b in self.miniblocks if b.eig_index == ell)

    def g(self, ell):
        """Number of miniblocks under eigenvalue ``ell``."""
        return len(self.miniblocks_of(ell))

    def miniblock(self, ell, h):
        blocks = self.miniblocks_of(ell)
        if not 1 <= h <= len(blocks):
            raise ValueError(
                f"miniblock index {h} out of range 1..{len(blocks)} for eigenvalue {ell}"
            )
        return blocks[h - 1]

    def block_slice(self, ell, h):
        """Scalar state slice occupied by miniblock ``(ell, h)``."""
        b = self.miniblock(ell, h)
        return slice(b.state_offset, b.state_offset + b.dim_scalar)

    def block_matrix(self, ell, h):
        """Real Jordan miniblock of ``(ell, h)`` as a dense array."""
        e = self.eig_of(ell)
        b = self.miniblock(ell, h)
        return _frozen(_jordan_block(e, b.dim_units))

    def block_spectrum(self, ell):
        """Eigenvalues of one unit of ``ell`` (a pair when complex)."""
        e = self.eig_of(ell)
        if e.is_real:
            return (complex(e.re, 0.0),)
        return (complex(e.re, e.im), complex(e.re, -e.im))

    def unstable_modes(self):
        """All (l, h) labels with unstable eigenvalue, lexicographic."""
        return tuple(
            b.mode for b in self.miniblocks if self.eigs[b.eig_index - 1].unstable
        )


@dataclass(frozen=True)
class SensorSuite:
    """Per-agent output matrices, all with ``n`` columns."""

    matrices: tuple[np.ndarray, ...]

    @property
    def N(self):
        return len(self.matrices)

    def C(self, i):
        if not 1 <= i <= self.N:
            raise ValueError(f"agent index {i} out of range 1..{self.N}")
        return self.matrices[i - 1]

    def p(self, i):
        return self.C(i).shape[0]

    def stacked(self):
        return np.vstack([np.asarray(c) for c in self.matrices])


@dataclass(frozen=True)
class CommGraph:
    """Directed communication graph on ``N`` agents.

    ``adjacency[i-1, j-1] > 0`` means agent ``i`` receives from agent
    ``j``.  The Laplacian is ``D - A`` with ``D`` the diagonal of row
    sums, so each row of the Laplacian sums to zero.
    """

    adjacency: np.ndarray
    laplacian: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.laplacian is None:
            object.__setattr__(self, "laplacian", _frozen(laplacian_of(self.adjacency)))

    @property
    def N(self):
        return self.adjacency.shape[0]

    def in_neighbors(self, i):
        """1-based labels of agents ``i`` receives from."""
        row = self.adjacency[i - 1]
        return tuple(int(j) + 1 for j in np.nonzero(row > 0.0)[0])


@dataclass(frozen=True)
class InputSpec:
    """One input channel's deterministic drive signal."""

    kind: str
    value: float = 0.0
    amplitude: float = 0.0
    period: float = 0.0

    def sample(self, t):
        if self.kind == "zero":
            return 0.0
        if self.kind == "constant":
            return self.value
        return self.amplitude * math.sin(2.0 * math.pi * t / self.period)


@dataclass(frozen=True)
class SimConfig:
    """Scenario for a closed network simulation.

    ``observer_init`` is either the string ``"zero"`` or ``"random"`` or
    an (N, n) array of per-agent initial full-state estimates; when
    ``"random"`` the entries are drawn standard normal from ``seed``.
    """

    horizon: int
    x0: np.ndarray
    inputs: tuple[InputSpec, ...]
    observer_init: str | np.ndarray = "zero"
    seed: int = 0


def _jordan_block(eig, dim_units):
    """Dense real miniblock for ``dim_units`` units of one eigenvalue."""
    if eig.is_real:
        blk = np.eye(dim_units) * eig.re
        idx = np.arange(dim_units - 1)
        blk[idx, idx + 1] = 1.0
        return blk
    rot = np.array([[eig.re, eig.im], [-eig.im, eig.re]])
    d = dim_units * 2
    blk = np.zeros((d, d))
    for u in range(dim_units):
        blk[2 * u : 2 * u + 2, 2 * u : 2 * u + 2] = rot
        if u + 1 < dim_units:
            blk[2 * u : 2 * u + 2, 2 * u + 2 : 2 * u + 4] = np.eye(2)
    return blk


def assemble_A(model):
    """Dense block diagonal state matrix in the model's coordinates."""
    A = np.zeros((model.n, model.n))
    for b in model.miniblocks:
        e = model.eigs[b.eig_index - 1]
        s = slice(b.state_offset, b.state_offset + b.dim_scalar)
        A[s, s] = _jordan_block(e, b.dim_units)
    return A


def laplacian_of(adjacency):
    """Graph Laplacian ``D - A`` with ``D`` the diagonal of row sums."""
    A = np.asarray(adjacency, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError("adjacency must be square")
    return np.diag(A.sum(axis=1)) - A


# ---------------------------------------------------------------------------
# JSON parsing and serialization
# ---------------------------------------------------------------------------


def _as_matrix(obj, what):
    try:
        M = np.array(obj, dtype=float)
    except (TypeError, ValueError):
        _fail(f"{what} is not a numeric matrix")
    if M.ndim == 1 and M.size == 0:
        M = M.reshape(0, 0)
    if M.ndim != 2:
        _fail(f"{what} must be a 2-d array, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        _fail(f"{what} contains non-finite entries")
    return M


def _as_vector(obj, what):
    try:
        v = np.array(obj, dtype=float)
    except (TypeError, ValueError):
        _fail(f"{what} is not a numeric vector")
    if v.ndim != 1:
        _fail(f"{what} must be a 1-d array, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        _fail(f"{what} contains non-finite entries")
    return v


def _parse_eigenvalues(doc):
    raw = doc.get("eigenvalues")
    if not isinstance(raw, list) or not raw:
        _fail("'eigenvalues' must be a non-empty list")
    eigs = []
    dims = []
    for pos, entry in enumerate(raw, start=1):
        if not isinstance(entry, dict):
            _fail(f"eigenvalue {pos} must be an object")
        extra = set(entry) - _EIG_KEYS
        if extra:
            _fail(f"eigenvalue {pos} has unknown keys {sorted(extra)}")
        if "re" not in entry or "miniblock_dims" not in entry:
            _fail(f"eigenvalue {pos} needs 're' and 'miniblock_dims'")
        try:
            re = float(entry["re"])
            im = float(entry.get("im", 0.0))
        except (TypeError, ValueError):
            _fail(f"eigenvalue {pos} has non-numeric re/im")
        mb = entry["miniblock_dims"]
        if not isinstance(mb, list) or not mb:
            _fail(f"eigenvalue {pos}: 'miniblock_dims' must be a non-empty list")
        for d in mb:
            if not isinstance(d, int) or isinstance(d, bool) or d < 1:
                _fail(f"eigenvalue {pos}: miniblock dims must be positive integers")
        eigs.append(EigenvalueSpec(re=re, im=im))
        dims.append(tuple(mb))
    for a in range(len(eigs)):
        for b in range(a + 1, len(eigs)):
            if abs(eigs[a].value - eigs[b].value) <= DISTINCT_TOL:
                _fail(
                    f"eigenvalues {a + 1} and {b + 1} are not distinct "
                    f"(closer than {DISTINCT_TOL:g})"
                )
    return eigs, dims


def _layout(eigs, dims):
    """Miniblock specs and total scalar dimension for an eigenvalue order."""
    blocks = []
    offset = 0
    for ell, (e, ds) in enumerate(zip(eigs, dims), start=1):
        for h, d in enumerate(ds, start=1):
            blocks.append(
                MiniblockSpec(
                    eig_index=ell,
                    block_index=h,
                    dim_units=d,
                    unit_size=e.unit_size,
                    state_offset=offset,
                )
            )
            offset += d * e.unit_size
    return tuple(blocks), offset


def model_from_dict(doc):
    """Build a validated PlantModel plus sensors, graph, and sim config.

    Returns ``(model, sensors, graph, sim_config_or_None)``.  Eigenvalues
    are re-sorted unstable-first when needed; ``B``, sensor columns, the
    transform's columns, and any simulation state vectors are permuted
    consistently, and the permutation is recorded on the model.
    """
    if not isinstance(doc, dict):
        _fail("model document must be a JSON object")
    extra = set(doc) - _TOP_KEYS
    if extra:
        _fail(f"unknown top-level keys {sorted(extra)}")
    for key in ("eigenvalues", "B", "sensors", "adjacency"):
        if key not in doc:
            _fail(f"missing required key '{key}'")

    eigs, dims = _parse_eigenvalues(doc)

    # Stable sort: unstable eigenvalues first, file order otherwise kept.
    order = sorted(range(len(eigs)), key=lambda k: (0 if eigs[k].unstable else 1, k))
    eig_order = tuple(k + 1 for k in order)
    old_blocks, n = _layout(eigs, dims)
    eigs_sorted = [eigs[k] for k in order]
    dims_sorted = [dims[k] for k in order]
    blocks, n2 = _layout(eigs_sorted, dims_sorted)
    assert n == n2

    # Scalar permutation: position k of the sorted state reads entry
    # perm[k] of the file-ordered state.
    old_by_eig = {}
    for b in old_blocks:
        old_by_eig.setdefault(b.eig_index, []).append(b)
    perm = []
    for orig in eig_order:
        for b in old_by_eig[orig]:
            perm.extend(range(b.state_offset, b.state_offset + b.dim_scalar))
    perm = np.array(perm, dtype=np.intp)
    assert perm.shape == (n,)

    B = _as_matrix(doc["B"], "'B'")
    if B.shape[0] != n:
        _fail(f"'B' has {B.shape[0]} rows, state dimension is {n}")
    if B.shape[1] < 1:
        _fail("'B' must have at least one column")
    m = B.shape[1]
    B = B[perm]

    raw_sensors = doc.get("sensors")
    if not isinstance(raw_sensors, list) or not raw_sensors:
        _fail("'sensors' must be a non-empty list of matrices")
    mats = []
    for i, raw in enumerate(raw_sensors, start=1):
        C = _as_matrix(raw, f"sensor matrix of agent {i}")
        if C.size == 0:
            C = C.reshape(0, n)
        if C.shape[1] != n:
            _fail(
                f"sensor matrix of agent {i} has {C.shape[1]} columns, "
                f"state dimension is {n}"
            )
        mats.append(_frozen(C[:, perm]))
    N = len(mats)

    adjacency = _as_matrix(doc["adjacency"], "'adjacency'")
    if adjacency.shape != (N, N):
        _fail(
            f"'adjacency' has shape {adjacency.shape}, expected ({N}, {N}) "
            f"for {N} agents"
        )
    if np.any(adjacency < 0.0):
        _fail("'adjacency' entries must be non-negative")
    if np.any(np.diag(adjacency) != 0.0):
        _fail("'adjacency' must have a zero diagonal (no self-loops)")

    T = None
    if "transform" in doc:
        T = _as_matrix(doc["transform"], "'transform'")
        if T.shape != (n, n):
            _fail(f"'transform' has shape {T.shape}, expected ({n}, {n})")
        sv = np.linalg.svd(T, compute_uv=False)
        if sv[-1] <= 1e-12 * sv[0]:
            _fail("'transform' is singular to working precision")
        T = T[:, perm]

    model = PlantModel(
        n=n,
        m=m,
        eigs=tuple(eigs_sorted),
        miniblocks=blocks,
        B=_frozen(B),
        T=None if T is None else _frozen(T),
        eig_order=eig_order,
        state_permutation=tuple(int(k) for k in perm),
    )
    sensors = SensorSuite(matrices=tuple(mats))
    graph = CommGraph(adjacency=_frozen(adjacency))
    config = None
    if "simulation" in doc:
        config = _parse_simulation(doc["simulation"], n, m, N, perm)
    return model, sensors, graph, config


def _parse_simulation(raw, n, m, N, perm):
    if not isinstance(raw, dict):
        _fail("'simulation' must be an object")
    extra = set(raw) - _SIM_KEYS
    if extra:
        _fail(f"'simulation' has unknown keys {sorted(extra)}")

    horizon = raw.get("horizon", 0)
    if not isinstance(horizon, int) or isinstance(horizon, bool) or horizon < 1:
        _fail("'simulation.horizon' must be a positive integer")

    if "x0" in raw:
        x0 = _as_vector(raw["x0"], "'simulation.x0'")
        if x0.shape != (n,):
            _fail(f"'simulation.x0' has length {x0.shape[0]}, expected {n}")
        x0 = x0[perm]
    else:
        x0 = np.zeros(n)

    inputs = _parse_inputs(raw.get("input", {"kind": "zero"}), m)

    obs = raw.get("observer_init", "zero")
    if isinstance(obs, str):
        if obs not in ("zero", "random"):
            _fail("'simulation.observer_init' must be 'zero', 'random', or arrays")
        observer_init = obs
    else:
        O = _as_matrix(obs, "'simulation.observer_init'")
        if O.shape != (N, n):
            _fail(
                f"'simulation.observer_init' has shape {O.shape}, "
                f"expected ({N}, {n})"
            )
        observer_init = _frozen(O[:, perm])

    seed = raw.get("seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool) or seed < 0:
        _fail("'simulation.seed' must be a non-negative integer")

    return SimConfig(
        horizon=horizon,
        x0=_frozen(x0),
        inputs=inputs,
        observer_init=observer_init,
        seed=seed,
    )


def _parse_one_input(entry, where):
    if not isinstance(entry, dict) or "kind" not in entry:
        _fail(f"{where} must be an object with a 'kind'")
    kind = entry["kind"]
    if kind not in _INPUT_KINDS:
        _fail(f"{where} has unknown kind '{kind}'")
    allowed = {"zero": {"kind"}, "constant": {"kind", "value"},
               "sinusoid": {"kind", "amplitude", "period"}}[kind]
    extra = set(entry) - allowed
    if extra:
        _fail(f"{where} has unexpected keys {sorted(extra)} for kind '{kind}'")
    try:
        value = float(entry.get("value", 0.0))
        amplitude = float(entry.get("amplitude", 0.0))
        period = float(entry.get("period", 0.0))
    except (TypeError, ValueError):
        _fail(f"{where} has non-numeric parameters")
    if kind == "sinusoid" and period <= 0.0:
        _fail(f"{where} needs a positive 'period'")
    return InputSpec(kind=kind, value=value, amplitude=amplitude, period=period)


def _parse_inputs(raw, m):
    if isinstance(raw, dict):
        spec = _parse_one_input(raw, "'simulation.input'")
        return tuple([spec] * m)
    if isinstance(raw, list):
        if len(raw) != m:
            _fail(f"'simulation.input' lists {len(raw)} channels, expected {m}")
        return tuple(
            _parse_one_input(e, f"'simulation.input[{k}]'") for k, e in enumerate(raw)
        )
    _fail("'simulation.input' must be an object or a list of objects")


def load_model(path):
    """Load and validate a model file.

    Returns ``(model, sensors, graph, sim_config_or_None)``.
    """
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ModelFormatError(f"cannot read model file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"model file {path} is not valid JSON: {exc}") from exc
    return model_from_dict(doc)


def model_to_dict(model, sensors, graph, config=None):
    """Serialize back to the JSON document structure.

    Matrices are written in the model's own (unstable-first) eigenvalue
    order, so a save/load round trip reproduces them bit for bit.
    """
    eig_entries = []
    for ell in range(1, model.r + 1):
        e = model.eig_of(ell)
        eig_entries.append(
            {
                "re": e.re,
                "im": e.im,
                "miniblock_dims": [b.dim_units for b in model.miniblocks_of(ell)],
            }
        )
    doc = {
        "eigenvalues": eig_entries,
        "B": np.asarray(model.B).tolist(),
        "sensors": [np.asarray(C).tolist() for C in sensors.matrices],
        "adjacency": np.asarray(graph.adjacency).tolist(),
    }
    if model.T is not None:
        doc["transform"] = np.asarray(model.T).tolist()
    if config is not None:
        sim = {
            "horizon": config.horizon,
            "x0": np.asarray(config.x0).tolist(),
            "input": [
                {
                    "kind": s.kind,
                    **({"value": s.value} if s.kind == "constant" else {}),
                    **(
                        {"amplitude": s.amplitude, "period": s.period}
                        if s.kind == "sinusoid"
                        else {}
                    ),
                }
                for s in config.inputs
            ],
            "seed": config.seed,
        }
        if isinstance(config.observer_init, str):
            sim["observer_init"] = config.observer_init
        else:
            sim["observer_init"] = np.asarray(config.observer_init).tolist()
        doc["simulation"] = sim
    return doc


def save_model(path, model, sensors, graph, config=None):
    """Write the model document as indented JSON."""
    doc = model_to_dict(model, sensors, graph, config)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")
