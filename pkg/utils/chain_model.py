"""Physical description of a chain of Euler-Bernoulli beams.

A chain is m segments joined at m-1 junctions, closed by a left and a right
end condition. Coefficients are sampled at equispaced nodes of each segment
and interpolated piecewise linearly.
"""

import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from config.settings import TOL_PSD
from utils.errors import (
    DimensionMismatch,
    NonPositiveCoefficient,
    SchemaError,
    SingularBoundaryMatrix,
    UnsupportedClosure,
    ZeroLengthSegment,
)

logger = logging.getLogger(__name__)

JUNCTION_KINDS = (1, 2, 3, 4)
CONSERVATIVE_KINDS = ("pinned", "free", "shear_hinge", "clamped")
END_KINDS = ("dissipative",) + CONSERVATIVE_KINDS + ("explicit",)


# ---- Matrix parsing ----

def parse_matrix(value: Any, shape: Tuple[int, int], name: str) -> np.ndarray:
    """Row-major nested lists to an array; complex entries are [re, im] pairs."""
    rows, cols = shape
    if rows == 0 or cols == 0:
        if value not in (None, []) and np.size(value) != 0:
            raise DimensionMismatch(f"{name}: expected an empty {rows}x{cols} matrix")
        return np.zeros(shape)
    if not isinstance(value, list) or len(value) != rows:
        raise DimensionMismatch(f"{name}: expected {rows} rows")

    out = np.zeros(shape, dtype=complex)
    for i, row in enumerate(value):
        if not isinstance(row, list) or len(row) != cols:
            raise DimensionMismatch(f"{name}: row {i} must have {cols} entries")
        for k, entry in enumerate(row):
            if isinstance(entry, list):
                if len(entry) != 2:
                    raise DimensionMismatch(f"{name}[{i}][{k}]: complex entries are [re, im]")
                out[i, k] = complex(float(entry[0]), float(entry[1]))
            else:
                out[i, k] = complex(float(entry))

    if np.all(out.imag == 0.0):
        return out.real.copy()
    return out


def hermitian_part(K: np.ndarray) -> np.ndarray:
    return 0.5 * (K + K.conj().T)


def is_psd(Q: np.ndarray, tol: float = TOL_PSD) -> bool:
    if Q.size == 0:
        return True
    scale = max(1.0, float(np.linalg.norm(Q, 2)))
    return float(np.linalg.eigvalsh(hermitian_part(Q))[0]) >= -tol * scale


# ---- Domain types ----

@dataclass(frozen=True)
class CoefficientProfile:
    """Strictly positive samples at equispaced nodes of [0, 1]."""

    samples: np.ndarray

    @property
    def nodes(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, len(self.samples))

    def __call__(self, zeta) -> np.ndarray:
        return np.interp(zeta, self.nodes, self.samples)

    @property
    def left(self) -> float:
        return float(self.samples[0])

    @property
    def right(self) -> float:
        return float(self.samples[-1])

    @property
    def minimum(self) -> float:
        return float(np.min(self.samples))

    def lipschitz(self) -> float:
        """Largest absolute slope of the interpolant on the unit interval."""
        slopes = np.diff(self.samples) * (len(self.samples) - 1)
        return float(np.max(np.abs(slopes)))


@dataclass(frozen=True)
class BeamSegment:
    length: float
    rho: CoefficientProfile
    ei: CoefficientProfile


@dataclass(frozen=True)
class ControllerSpec:
    """Finite-dimensional feedback (A_c, B_c, C_c, D_c); n = 0 is static."""

    A_c: np.ndarray
    B_c: np.ndarray
    C_c: np.ndarray
    D_c: np.ndarray

    @property
    def n(self) -> int:
        return int(self.A_c.shape[0])

    @property
    def is_complex(self) -> bool:
        return any(np.iscomplexobj(M) for M in (self.A_c, self.B_c, self.C_c, self.D_c))


@dataclass(frozen=True)
class JunctionSpec:
    kind: int
    K: np.ndarray
    controller: Optional[ControllerSpec] = None


@dataclass(frozen=True)
class EndConditionSpec:
    """End closure. `K` is K0 for a dissipative end, D for an explicit one."""

    side: str
    kind: str
    K: Optional[np.ndarray] = None
    W_B: Optional[np.ndarray] = None
    W_C: Optional[np.ndarray] = None
    controller: Optional[ControllerSpec] = None

    @property
    def is_conservative(self) -> bool:
        return self.kind in CONSERVATIVE_KINDS and self.controller is None


@dataclass(frozen=True)
class ChainModel:
    segments: Tuple[BeamSegment, ...]
    junctions: Tuple[JunctionSpec, ...]
    left_end: EndConditionSpec
    right_end: EndConditionSpec
    name: str = "chain"

    @property
    def m(self) -> int:
        return len(self.segments)

    @property
    def total_length(self) -> float:
        return float(sum(s.length for s in self.segments))

    @property
    def breakpoints(self) -> np.ndarray:
        return np.concatenate([[0.0], np.cumsum([s.length for s in self.segments])])

    def controllers(self) -> List[Tuple[str, ControllerSpec]]:
        """All dynamic or static controllers keyed by port label."""
        found = []
        if self.left_end.controller is not None:
            found.append(("left", self.left_end.controller))
        for j, junction in enumerate(self.junctions, start=1):
            if junction.controller is not None:
                found.append((f"junction_{j}", junction.controller))
        if self.right_end.controller is not None:
            found.append(("right", self.right_end.controller))
        return found


@dataclass(frozen=True)
class NormalizedSegment:
    """Segment mapped to [0, 1]; H = diag(1/rho, EI), P2 block scale 1/length^2."""

    length: float
    rho: CoefficientProfile
    ei: CoefficientProfile

    @property
    def scale(self) -> float:
        return 1.0 / self.length ** 2

    def hamiltonian(self, zeta) -> np.ndarray:
        """Diagonal entries of H at zeta, stacked along the last axis."""
        zeta = np.asarray(zeta, dtype=float)
        return np.stack([1.0 / self.rho(zeta), self.ei(zeta)], axis=-1)


@dataclass(frozen=True)
class NormalizedModel:
    segments: Tuple[NormalizedSegment, ...]
    junctions: Tuple[JunctionSpec, ...]
    left_end: EndConditionSpec
    right_end: EndConditionSpec
    lengths: Tuple[float, ...] = field(default=())
    name: str = "chain"

    @property
    def m(self) -> int:
        return len(self.segments)

    def physical_point(self, j: int, zeta: float) -> float:
        """Position along the chain of node zeta on segment j (1-based)."""
        return float(sum(self.lengths[: j - 1]) + zeta * self.lengths[j - 1])


# ---- Reports ----

@dataclass
class SegmentRegularity:
    segment: int
    min_rho: float
    min_ei: float
    lipschitz_rho: float
    lipschitz_ei: float
    lipschitz_rho_physical: float
    lipschitz_ei_physical: float


@dataclass
class RegularityReport:
    segments: List[SegmentRegularity]
    passed: bool

    def to_dict(self) -> Dict[str, Any]:
        return {"passed": self.passed, "segments": [vars(s) for s in self.segments]}


@dataclass
class JunctionMonotonicity:
    junction: int
    rho_left: float
    rho_right: float
    ei_left: float
    ei_right: float
    scalar_margin: float
    matrix_margin: float
    printed_margin: float
    scalar_pass: bool
    matrix_pass: bool
    violations: List[str]


@dataclass
class MonotonicityReport:
    junctions: List[JunctionMonotonicity]
    passed: bool

    @property
    def forms_agree(self) -> bool:
        return all(j.scalar_pass == j.matrix_pass for j in self.junctions)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "passed": self.passed,
            "forms_agree": self.forms_agree,
            "junctions": [vars(j) for j in self.junctions],
        }


# ---- Building ----

def _require(doc: Dict[str, Any], key: str, where: str) -> Any:
    if key not in doc:
        raise SchemaError(f"{where}.{key}", "missing required field")
    return doc[key]


def _build_profile(values: Any, name: str) -> CoefficientProfile:
    if isinstance(values, (int, float)):
        values = [values, values]
    samples = np.asarray(values, dtype=float)
    if samples.ndim != 1 or samples.size < 2:
        raise DimensionMismatch(f"{name}: a profile needs at least 2 samples")
    if np.any(~np.isfinite(samples)) or np.any(samples <= 0.0):
        bad = int(np.argmin(samples))
        raise NonPositiveCoefficient(f"{name}[{bad}] = {samples[bad]} must be > 0")
    return CoefficientProfile(samples)


def _build_controller(doc: Dict[str, Any], where: str) -> ControllerSpec:
    D_c = parse_matrix(_require(doc, "D_c", where), (2, 2), f"{where}.D_c")
    A_raw = doc.get("A_c", [])
    n = len(A_raw) if isinstance(A_raw, list) else 0
    A_c = parse_matrix(A_raw, (n, n), f"{where}.A_c")
    B_c = parse_matrix(doc.get("B_c", []), (n, 2), f"{where}.B_c")
    C_c = parse_matrix(doc.get("C_c", []), (2, n), f"{where}.C_c")
    return ControllerSpec(A_c=A_c, B_c=B_c, C_c=C_c, D_c=D_c)


def _build_end(doc: Dict[str, Any], side: str) -> EndConditionSpec:
    where = f"{side}_end"
    kind = _require(doc, "kind", where)
    if kind not in END_KINDS:
        raise SchemaError(f"{where}.kind", f"unknown end kind {kind!r}")

    K = None
    if "K" in doc:
        K = parse_matrix(doc["K"], (2, 2), f"{where}.K")
        if not is_psd(hermitian_part(K)):
            raise UnsupportedClosure(f"{where}: Hermitian part of K is not positive semidefinite")
    elif kind == "dissipative":
        raise SchemaError(f"{where}.K", "a dissipative end needs a 2x2 matrix K")

    W_B = W_C = None
    if kind == "explicit":
        W_B = parse_matrix(_require(doc, "W_B", where), (2, 4), f"{where}.W_B")
        W_C = parse_matrix(_require(doc, "W_C", where), (2, 4), f"{where}.W_C")
        W = np.vstack([W_B, W_C])
        if np.linalg.matrix_rank(W) < 4:
            raise SingularBoundaryMatrix(f"{where}: [W_B; W_C] is not invertible")

    controller = _build_controller(doc["controller"], f"{where}.controller") if "controller" in doc else None
    if controller is not None and kind in CONSERVATIVE_KINDS:
        raise SchemaError(f"{where}.controller", f"a {kind} end takes no controller")
    return EndConditionSpec(side=side, kind=kind, K=K, W_B=W_B, W_C=W_C, controller=controller)


def build_chain(doc: Dict[str, Any]) -> ChainModel:
    """Validate a parsed chain document and return the model."""
    segments_doc = _require(doc, "segments", "document")
    if not isinstance(segments_doc, list) or not segments_doc:
        raise DimensionMismatch("document.segments: at least one segment is required")

    segments = []
    for j, seg in enumerate(segments_doc, start=1):
        where = f"segments[{j - 1}]"
        length = float(_require(seg, "length", where))
        if not np.isfinite(length) or length <= 0.0:
            raise ZeroLengthSegment(f"{where}.length = {length} must be > 0")
        rho = _build_profile(_require(seg, "rho", where), f"{where}.rho")
        ei = _build_profile(_require(seg, "ei", where), f"{where}.ei")
        segments.append(BeamSegment(length=length, rho=rho, ei=ei))

    junctions_doc = doc.get("junctions", [])
    if len(junctions_doc) != len(segments) - 1:
        raise DimensionMismatch(
            f"document.junctions: expected {len(segments) - 1} junctions, got {len(junctions_doc)}"
        )

    junctions = []
    for j, jd in enumerate(junctions_doc, start=1):
        where = f"junctions[{j - 1}]"
        kind = _require(jd, "kind", where)
        if kind not in JUNCTION_KINDS:
            raise SchemaError(f"{where}.kind", f"junction kind must be one of {JUNCTION_KINDS}, got {kind!r}")
        K = parse_matrix(jd.get("K", [[0, 0], [0, 0]]), (2, 2), f"{where}.K")
        if not is_psd(hermitian_part(K)):
            raise UnsupportedClosure(f"{where}: Hermitian part of K is not positive semidefinite")
        controller = _build_controller(jd["controller"], f"{where}.controller") if "controller" in jd else None
        junctions.append(JunctionSpec(kind=int(kind), K=K, controller=controller))

    left = _build_end(_require(doc, "left_end", "document"), "left")
    right = _build_end(_require(doc, "right_end", "document"), "right")

    model = ChainModel(
        segments=tuple(segments),
        junctions=tuple(junctions),
        left_end=left,
        right_end=right,
        name=str(doc.get("name", "chain")),
    )
    logger.debug("Built chain %s with m=%d, L=%.6g", model.name, model.m, model.total_length)
    return model


# ---- Hypothesis checks ----

def validate_regularity(model: ChainModel) -> RegularityReport:
    """Condition (R): positivity margins and Lipschitz constants per segment."""
    entries = []
    for j, seg in enumerate(model.segments, start=1):
        lip_rho = seg.rho.lipschitz()
        lip_ei = seg.ei.lipschitz()
        entries.append(SegmentRegularity(
            segment=j,
            min_rho=seg.rho.minimum,
            min_ei=seg.ei.minimum,
            lipschitz_rho=lip_rho,
            lipschitz_ei=lip_ei,
            lipschitz_rho_physical=lip_rho / seg.length,
            lipschitz_ei_physical=lip_ei / seg.length,
        ))
    passed = all(e.min_rho > 0.0 and e.min_ei > 0.0 for e in entries)
    return RegularityReport(segments=entries, passed=passed)


def check_jump_monotonicity(model: ChainModel) -> MonotonicityReport:
    """Conditions (M) and its matrix form at every junction.

    The matrix form compares H^j(1) - H^{j+1}(0) with the damped end at zeta = 0;
    the printed orientation H^{j+1}(0) - H^j(1) is kept as `printed_margin`.
    """
    entries = []
    for j in range(1, model.m):
        left_seg, right_seg = model.segments[j - 1], model.segments[j]
        rho_l, rho_r = left_seg.rho.right, right_seg.rho.left
        ei_l, ei_r = left_seg.ei.right, right_seg.ei.left

        scalar_margin = min(rho_r - rho_l, ei_l - ei_r)
        scalar_tol = TOL_PSD * max(rho_l, rho_r, ei_l, ei_r)
        scalar_pass = scalar_margin >= -scalar_tol

        jump = np.diag([1.0 / rho_l - 1.0 / rho_r, ei_l - ei_r])
        matrix_margin = float(np.linalg.eigvalsh(jump)[0])
        printed_margin = float(np.linalg.eigvalsh(-jump)[0])
        matrix_tol = TOL_PSD * max(1.0 / rho_l, 1.0 / rho_r, ei_l, ei_r)
        matrix_pass = matrix_margin >= -matrix_tol

        violations = []
        if rho_l > rho_r + scalar_tol:
            violations.append(f"rho(l^{j}-) = {rho_l:g} > rho(l^{j}+) = {rho_r:g}")
        if ei_l < ei_r - scalar_tol:
            violations.append(f"EI(l^{j}-) = {ei_l:g} < EI(l^{j}+) = {ei_r:g}")

        entries.append(JunctionMonotonicity(
            junction=j,
            rho_left=rho_l,
            rho_right=rho_r,
            ei_left=ei_l,
            ei_right=ei_r,
            scalar_margin=float(scalar_margin),
            matrix_margin=matrix_margin,
            printed_margin=printed_margin,
            scalar_pass=bool(scalar_pass),
            matrix_pass=bool(matrix_pass),
            violations=violations,
        ))

    return MonotonicityReport(junctions=entries, passed=all(e.scalar_pass for e in entries))


def normalize(model: ChainModel) -> NormalizedModel:
    """Map every segment to [0, 1] in port-Hamiltonian form."""
    segments = tuple(
        NormalizedSegment(length=seg.length, rho=seg.rho, ei=seg.ei) for seg in model.segments
    )
    return NormalizedModel(
        segments=segments,
        junctions=model.junctions,
        left_end=model.left_end,
        right_end=model.right_end,
        lengths=tuple(seg.length for seg in model.segments),
        name=model.name,
    )
