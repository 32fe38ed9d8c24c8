"""Summation-by-parts discretization of a normalized beam chain.

Each segment carries nodal values of x1 = rho w_t and x2 = w_ss on N + 1
equispaced nodes of [0, 1]. The second derivative satisfies

    P D2 = -A + e_N d_N^T - e_0 d_0^T

and both equations use D2 directly, so the assembled form S reproduces the
continuous boundary fluxes exactly. Junction and end conditions are eliminated:
the generator acts on the subspace of nodal states that obey every closure,
written in an energy-orthonormal basis so that M_h = I.
"""

import hashlib
import json
import logging
import operator
import os
from dataclasses import dataclass, field
from functools import cached_property
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
from scipy import io as sio
from scipy import linalg, sparse

from config.settings import MIN_CELLS, ROUNDING_ULPS
from utils.chain_model import NormalizedModel, hermitian_part
from utils.errors import AssemblyDimension, DimensionMismatch, UnsupportedClosure
from utils.passivity_checker import check_boundary_matrices
from utils.port_maps import COMPONENTS, PortMap, end_port, junction_port

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Grid:
    cells_per_segment: int

    def __post_init__(self):
        try:
            cells = operator.index(self.cells_per_segment)
        except TypeError as exc:
            raise AssemblyDimension(f"cells_per_segment must be an integer, got {self.cells_per_segment!r}") from exc
        if cells < MIN_CELLS:
            raise AssemblyDimension(f"cells_per_segment must be >= {MIN_CELLS}, got {cells}")
        object.__setattr__(self, "cells_per_segment", int(cells))

    @property
    def h(self) -> float:
        return 1.0 / self.cells_per_segment

    @property
    def nodes(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.cells_per_segment + 1)

    @property
    def n_nodes(self) -> int:
        return self.cells_per_segment + 1


def sbp_operators(grid: Grid) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Norm weights, Neumann stiffness A and boundary derivative rows d_0, d_N."""
    N, h = grid.cells_per_segment, grid.h
    n = N + 1
    weights = np.full(n, h)
    weights[0] = weights[-1] = 0.5 * h

    A = (2.0 * np.eye(n) - np.eye(n, k=1) - np.eye(n, k=-1)) / h
    A[0, 0] = A[-1, -1] = 1.0 / h

    d0 = np.zeros(n)
    d0[:3] = np.array([-1.5, 2.0, -0.5]) / h
    dN = np.zeros(n)
    dN[-3:] = np.array([0.5, -2.0, 1.5]) / h
    return weights, A, d0, dN


@dataclass(frozen=True, eq=False)
class OperatorBundle:
    """Discrete generator with M_h A_h = J_h - R_h on the constrained subspace.

    States are coordinates in `basis`, an energy-orthonormal basis of the nodal
    states obeying every closure, so M_h = I. `lift` returns the nodal vector:
    per segment (x1, x2) on the grid nodes, then the controller states.
    `trace_rows[(j, side)]` maps a nodal vector to (v, dv, m, dm) at one end
    of segment j (1-based); `ports` pairs every junction and end with its
    nodal trace map.
    """

    model: NormalizedModel
    grid: Grid
    dim: int
    n_plant: int
    n_nodal: int
    A_h: np.ndarray
    M_h: np.ndarray
    J_h: np.ndarray
    R_h: np.ndarray
    weights: np.ndarray
    basis: np.ndarray
    nodal_weights: np.ndarray
    trace_rows: Dict[Tuple[int, str], np.ndarray]
    ports: Tuple[Tuple[PortMap, np.ndarray], ...]
    controller_slices: Dict[str, slice]
    config_hash: str
    segment_offsets: Tuple[int, ...] = field(default=())

    @property
    def is_complex(self) -> bool:
        return np.iscomplexobj(self.A_h)

    @property
    def is_conservative(self) -> bool:
        return not np.any(self.R_h)

    @property
    def n_eliminated(self) -> int:
        return self.n_nodal - self.dim

    @property
    def Bmat(self) -> Dict[str, np.ndarray]:
        return {port.label: port.Gamma_B @ T @ self.basis for port, T in self.ports}

    @property
    def Cmat(self) -> Dict[str, np.ndarray]:
        return {port.label: port.Gamma_C @ T @ self.basis for port, T in self.ports}

    @property
    def B0mat(self) -> Dict[str, np.ndarray]:
        return {port.label: port.Gamma_B0 @ T @ self.basis for port, T in self.ports if port.size == 8}

    @cached_property
    def magnitude(self) -> np.ndarray:
        """|A_h| entrywise, for rounding bounds."""
        return np.abs(self.A_h)

    def lift(self, x: np.ndarray) -> np.ndarray:
        return self.basis @ x

    def restrict(self, y: np.ndarray) -> np.ndarray:
        """Coordinates of the energy-orthogonal projection of a nodal vector."""
        return self.basis.conj().T @ (self.nodal_weights * y)

    def segment_state(self, x: np.ndarray, j: int) -> Tuple[np.ndarray, np.ndarray]:
        """(x1, x2) nodal vectors of segment j (1-based)."""
        y = self.lift(x)
        n = self.grid.n_nodes
        start = self.segment_offsets[j - 1]
        return y[start:start + n], y[start + n:start + 2 * n]

    def controller_state(self, x: np.ndarray, label: str) -> np.ndarray:
        return self.lift(x)[self.controller_slices[label]]


@dataclass
class TraceVector:
    segment_ends: Dict[Tuple[int, str], np.ndarray]
    B: Dict[str, np.ndarray]
    C: Dict[str, np.ndarray]
    B0: Dict[str, np.ndarray]
    constraint_residual: Dict[str, np.ndarray]
    selector: Dict[str, complex]


@dataclass
class PowerBalanceBreakdown:
    lhs: float
    rhs: float
    flux: float
    controller_power: float
    dissipation: float
    residual: float
    norm_sq: float = 0.0
    rounding: float = 0.0

    def tolerance(self, rtol: float = 1e-10) -> float:
        """rtol in the energy norm plus the rounding bound of the forms evaluated."""
        return rtol * self.norm_sq + self.rounding

    def holds(self, rtol: float = 1e-10) -> bool:
        return abs(self.residual) <= self.tolerance(rtol)

    def to_dict(self) -> Dict[str, Any]:
        return dict(vars(self))


# ---- Helpers ----

def config_hash(nm: NormalizedModel, grid: Grid) -> str:
    """Stable digest of everything that determines the assembled matrices."""
    digest = hashlib.sha256()
    digest.update(json.dumps({"N": int(grid.cells_per_segment), "name": nm.name}).encode())
    for seg in nm.segments:
        for arr in (np.array([seg.length]), seg.rho.samples, seg.ei.samples):
            digest.update(np.ascontiguousarray(arr, dtype=float).tobytes())
    for junction in nm.junctions:
        digest.update(str(junction.kind).encode())
        digest.update(np.ascontiguousarray(junction.K, dtype=complex).tobytes())
    for end in (nm.left_end, nm.right_end):
        digest.update(f"{end.side}:{end.kind}".encode())
        for arr in (end.K, end.W_B, end.W_C):
            if arr is not None:
                digest.update(np.ascontiguousarray(arr, dtype=complex).tobytes())
    for ctrl in [e.controller for e in (nm.left_end, nm.right_end)] + [j.controller for j in nm.junctions]:
        if ctrl is not None:
            for arr in (ctrl.A_c, ctrl.B_c, ctrl.C_c, ctrl.D_c):
                digest.update(np.ascontiguousarray(arr, dtype=complex).tobytes())
    return digest.hexdigest()[:16]


def _controller_labels(nm: NormalizedModel) -> List[Tuple[str, Any]]:
    found = []
    if nm.left_end.controller is not None:
        found.append(("left", nm.left_end.controller))
    for j, junction in enumerate(nm.junctions, start=1):
        if junction.controller is not None:
            found.append((f"junction_{j}", junction.controller))
    if nm.right_end.controller is not None:
        found.append(("right", nm.right_end.controller))
    return found


def _is_complex_model(nm: NormalizedModel) -> bool:
    arrays = [j.K for j in nm.junctions]
    for end in (nm.left_end, nm.right_end):
        arrays.extend(a for a in (end.K, end.W_B, end.W_C) if a is not None)
    arrays.extend(
        getattr(c, name) for _, c in _controller_labels(nm) for name in ("A_c", "B_c", "C_c", "D_c")
    )
    return any(np.iscomplexobj(a) for a in arrays)


def _check_dim(bundle: OperatorBundle, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x)
    if x.shape != (bundle.dim,):
        raise DimensionMismatch(f"state has shape {x.shape}, bundle dim is {bundle.dim}")
    return x


def constraint_rows(
    ports: List[Tuple[PortMap, np.ndarray]],
    slices: Dict[str, slice],
    n_nodal: int,
    dtype,
) -> np.ndarray:
    """Unit rows E with E y = 0 exactly for the nodal states obeying every closure."""
    blocks = []
    for port, T in ports:
        rows = (port.closure_rows() @ T).astype(dtype)
        if port.controller is not None and port.controller.n:
            rows[:2, slices[port.label]] += port.controller.C_c
        blocks.append(rows)
    E = np.vstack(blocks) if blocks else np.zeros((0, n_nodal), dtype=dtype)
    norms = np.linalg.norm(E, axis=1)
    keep = norms > 0.0
    return E[keep] / norms[keep, None]


def constrained_basis(E: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Basis Q of {y : E y = 0} with Q* W Q = I for W = diag(weights).

    Coordinates outside the support of E keep their own scaled unit vector;
    the null space is only computed on the boundary coordinates E touches.
    """
    size = E.shape[1]
    touched = np.flatnonzero(np.any(E != 0.0, axis=0))
    untouched = np.setdiff1d(np.arange(size), touched)
    dtype = np.result_type(E.dtype, float)

    local = np.zeros((touched.size, 0), dtype=dtype)
    if touched.size:
        local = linalg.null_space(E[:, touched])
    if local.shape[1]:
        gram = hermitian_part(local.conj().T @ (weights[touched, None] * local))
        factor = linalg.cholesky(gram, lower=True)
        local = linalg.solve_triangular(factor, local.conj().T, lower=True).conj().T

    basis = np.zeros((size, untouched.size + local.shape[1]), dtype=dtype)
    basis[untouched, np.arange(untouched.size)] = 1.0 / np.sqrt(weights[untouched])
    basis[np.ix_(touched, np.arange(untouched.size, basis.shape[1]))] = local
    return basis


# ---- Operations ----

def assemble(nm: NormalizedModel, grid: Grid) -> OperatorBundle:
    """Assemble A_h, M_h and the trace maps of the closed-loop chain."""
    for end in (nm.left_end, nm.right_end):
        if end.kind == "explicit" and not check_boundary_matrices(end.W_B, end.W_C).passed:
            raise UnsupportedClosure(f"{end.side} end: W_B, W_C are not impedance passive")

    n = grid.n_nodes
    weights_ref, A, d0, dN = sbp_operators(grid)
    controllers = _controller_labels(nm)
    n_plant = 2 * n * nm.m
    n_nodal = n_plant + sum(c.n for _, c in controllers)
    dtype = complex if _is_complex_model(nm) else float

    S = np.zeros((n_nodal, n_nodal), dtype=dtype)
    R = np.zeros((n_nodal, n_nodal), dtype=dtype)
    nodal_weights = np.ones(n_nodal)
    trace_rows: Dict[Tuple[int, str], np.ndarray] = {}
    offsets = []

    for j, seg in enumerate(nm.segments, start=1):
        start = (j - 1) * 2 * n
        offsets.append(start)
        rho = seg.rho(grid.nodes)
        ei = seg.ei(grid.nodes)
        ell = seg.length
        x1 = slice(start, start + n)
        x2 = slice(start + n, start + 2 * n)

        nodal_weights[x1] = ell * weights_ref / rho
        nodal_weights[x2] = ell * weights_ref * ei

        block = (A / rho[:, None]) * ei[None, :] / ell
        S[x1, x2] += block
        S[x2, x1] -= block.T

        for side, e_idx, d in (("left", 0, d0), ("right", n - 1, dN)):
            rows = np.zeros((4, n_nodal))
            rows[0, start + e_idx] = 1.0 / rho[e_idx]
            rows[1, x1] = d / rho / ell
            rows[2, start + n + e_idx] = ei[e_idx]
            rows[3, x2] = d * ei / ell
            trace_rows[(j, side)] = rows

        # boundary terms of P D2 on both fields
        tv0, tdv0, tm0, tdm0 = trace_rows[(j, "left")]
        tvN, tdvN, tmN, tdmN = trace_rows[(j, "right")]
        S += np.outer(tv0, tdm0) - np.outer(tvN, tdmN) + np.outer(tmN, tdvN) - np.outer(tm0, tdv0)

    ports = [(end_port(nm.left_end), trace_rows[(1, "left")])]
    for j, junction in enumerate(nm.junctions, start=1):
        T = np.vstack([trace_rows[(j, "right")], trace_rows[(j + 1, "left")]])
        ports.append((junction_port(j, junction), T))
    ports.append((end_port(nm.right_end), trace_rows[(nm.m, "right")]))

    slices = {}
    cursor = n_plant
    for label, ctrl in controllers:
        slices[label] = slice(cursor, cursor + ctrl.n)
        cursor += ctrl.n

    for port, T in ports:
        R += T.T @ port.loss @ T
        if port.controller is None:
            R += T.T @ (port.dissipation_form() - port.loss) @ T
            continue

        ctrl = port.controller
        sl = slices[port.label]
        CT = port.Gamma_C @ T
        S[sl, :] += ctrl.B_c @ CT
        S[sl, sl] += ctrl.A_c

        stacked = np.vstack([np.eye(n_nodal)[sl], CT])
        G = np.block([[ctrl.A_c, ctrl.B_c], [-ctrl.C_c, -ctrl.D_c]]) if ctrl.n else -ctrl.D_c
        R -= stacked.T @ hermitian_part(G) @ stacked

    E = constraint_rows(ports, slices, n_nodal, dtype)
    basis = constrained_basis(E, nodal_weights)
    dim = basis.shape[1]
    S = basis.conj().T @ S @ basis
    R = hermitian_part(basis.conj().T @ R @ basis)

    mismatch = float(np.max(np.abs(hermitian_part(S) + R))) if dim else 0.0
    scale = max(1.0, float(np.max(np.abs(S)))) if dim else 1.0
    if mismatch > 1e-9 * scale:
        raise AssemblyDimension(
            f"assembled dissipation does not match the closure forms (mismatch {mismatch:.3e})"
        )

    J = 0.5 * (S - S.conj().T)
    bundle = OperatorBundle(
        model=nm,
        grid=grid,
        dim=dim,
        n_plant=n_plant,
        n_nodal=n_nodal,
        A_h=J - R,
        M_h=np.eye(dim),
        J_h=J,
        R_h=R,
        weights=np.ones(dim),
        basis=basis,
        nodal_weights=nodal_weights,
        trace_rows=trace_rows,
        ports=tuple(ports),
        controller_slices=slices,
        config_hash=config_hash(nm, grid),
        segment_offsets=tuple(offsets),
    )
    logger.debug(
        "Assembled %s: N=%d, dim=%d (%d constraints eliminated), complex=%s",
        nm.name, grid.cells_per_segment, dim, bundle.n_eliminated, bundle.is_complex,
    )
    return bundle


def energy(bundle: OperatorBundle, x: np.ndarray) -> float:
    """Total energy: 1/2 x* M_h x, controller coordinates included."""
    x = _check_dim(bundle, x)
    return 0.5 * float(np.real(np.vdot(x, bundle.weights * x)))


def discrete_power_balance(bundle: OperatorBundle, x: np.ndarray) -> PowerBalanceBreakdown:
    """Both sides of d/dt energy = supplied boundary power + controller power."""
    x = _check_dim(bundle, x)
    lhs = float(np.real(np.vdot(x, bundle.weights * (bundle.A_h @ x))))
    ax = np.abs(x)
    size = float(ax @ (bundle.magnitude @ ax))

    y = bundle.lift(x)
    flux = controller_power = 0.0
    for port, T in bundle.ports:
        t = T @ y
        phi = port.raw_flux()
        flux += float(np.real(np.vdot(t, phi @ t)))
        size += float(np.abs(t) @ (np.abs(phi) @ np.abs(t)))
        if port.controller is not None:
            ctrl = port.controller
            xc = y[bundle.controller_slices[port.label]]
            c = port.Gamma_C @ t
            controller_power += float(np.real(np.vdot(xc, ctrl.A_c @ xc + ctrl.B_c @ c)))
            size += float(np.abs(xc) @ (np.abs(ctrl.A_c) @ np.abs(xc) + np.abs(ctrl.B_c) @ np.abs(c)))

    rhs = flux + controller_power
    dissipation = -float(np.real(np.vdot(x, bundle.R_h @ x)))
    return PowerBalanceBreakdown(
        lhs=lhs,
        rhs=rhs,
        flux=flux,
        controller_power=controller_power,
        dissipation=dissipation,
        residual=lhs - rhs,
        norm_sq=float(np.real(np.vdot(x, bundle.weights * x))),
        rounding=ROUNDING_ULPS * float(np.finfo(float).eps) * size,
    )


def traces(bundle: OperatorBundle, x: np.ndarray) -> TraceVector:
    """One-sided traces and the port values B, C, B0 of a discrete state."""
    x = _check_dim(bundle, x)
    y = bundle.lift(x)
    ends = {key: rows @ y for key, rows in bundle.trace_rows.items()}

    B, C, B0, residual = {}, {}, {}, {}
    for port, T in bundle.ports:
        t = T @ y
        B[port.label] = port.Gamma_B @ t
        C[port.label] = port.Gamma_C @ t
        if port.size == 8:
            B0[port.label] = port.Gamma_B0 @ t
        closure = B[port.label] + port.feedthrough @ C[port.label]
        if port.controller is not None and port.controller.n:
            closure = closure + port.controller.C_c @ y[bundle.controller_slices[port.label]]
        residual[port.label] = np.concatenate([closure, B0.get(port.label, np.zeros(0))])

    m = bundle.model.m
    selector = {}
    for name, (side, idx) in COMPONENTS.items():
        key = (1, "left") if side == "left" else (m, "right")
        selector[name] = ends[key][idx]
    return TraceVector(segment_ends=ends, B=B, C=C, B0=B0, constraint_residual=residual, selector=selector)


def export_matrices(bundle: OperatorBundle, out_dir: str) -> List[str]:
    """Write A_h and M_h in Matrix Market coordinate format."""
    os.makedirs(out_dir, exist_ok=True)
    written = []
    for name, matrix in (("A_h", bundle.A_h), ("M_h", bundle.M_h)):
        path = os.path.join(out_dir, f"{name}.mtx")
        sio.mmwrite(path, sparse.coo_matrix(matrix), comment=f"beamchain {bundle.config_hash}")
        written.append(path)
    logger.info("Exported %s", ", ".join(written))
    return written


def nodal_profiles(bundle: OperatorBundle, velocity, curvature, controller: Optional[np.ndarray] = None) -> np.ndarray:
    """Nodal vector from callables v(j, zeta) = w_t and k(j, zeta) = w_ss."""
    y = np.zeros(bundle.n_nodal, dtype=complex if bundle.is_complex else float)
    zeta = bundle.grid.nodes
    n = bundle.grid.n_nodes
    for j, seg in enumerate(bundle.model.segments, start=1):
        start = bundle.segment_offsets[j - 1]
        y[start:start + n] = seg.rho(zeta) * velocity(j, zeta)
        y[start + n:start + 2 * n] = curvature(j, zeta)
    if controller is not None:
        y[bundle.n_plant:] = controller
    return y


def state_from_profiles(bundle: OperatorBundle, velocity, curvature, controller: Optional[np.ndarray] = None) -> np.ndarray:
    """Discrete state closest in energy to the sampled profiles."""
    return bundle.restrict(nodal_profiles(bundle, velocity, curvature, controller))
