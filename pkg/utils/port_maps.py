"""Boundary and junction port maps in terms of one-sided traces.

Every segment end carries four traces ordered as (v, dv, m, dm):
velocity ω_t, angular velocity ω_tζ, bending moment EIω_ζζ and its
physical derivative. The shear force is p = -dm.

For each port, the supplied power satisfies

    raw(t) = Re<B t, C t> + Re<B0 t, F t> - t* loss t

where B0 collects the jumps of the continuous pair (junctions only), F the
matching averaged fluxes and `loss` is nonzero only for explicit boundary
matrices that are passive but not lossless. On traces obeying the closure
(B + D C = 0, B0 = 0) the supplied power is -Re<D C, C> - t* loss t.
"""

from dataclasses import dataclass
from typing import Dict, Optional, Tuple

import numpy as np

from utils.chain_model import ControllerSpec, EndConditionSpec, JunctionSpec
from utils.errors import UnsupportedClosure

V, DV, MO, DM = 0, 1, 2, 3
TRACE_NAMES = ("v", "dv", "m", "dm")

SIGMA = np.block([[np.zeros((2, 2)), np.eye(2)], [np.eye(2), np.zeros((2, 2))]])

# y = Gamma_y t, with raw power = y* SIGMA y / 2
_PORT_VECTOR = {
    "left": np.array([
        [1.0, 0.0, 0.0, 0.0],
        [0.0, 0.0, 1.0, 0.0],
        [0.0, 0.0, 0.0, 1.0],
        [0.0, -1.0, 0.0, 0.0],
    ]),
    "right": np.array([
        [1.0, 0.0, 0.0, 0.0],
        [0.0, 0.0, 1.0, 0.0],
        [0.0, 0.0, 0.0, -1.0],
        [0.0, 1.0, 0.0, 0.0],
    ]),
}


def _unit(index: int, size: int = 4, sign: float = 1.0) -> np.ndarray:
    row = np.zeros(size)
    row[index] = sign
    return row


def _rows(*rows: np.ndarray) -> np.ndarray:
    return np.vstack(rows)


def _shear(offset: int = 0, size: int = 4) -> np.ndarray:
    return _unit(offset + DM, size, -1.0)


# (B rows, C rows) for the named closures, per side
def _named_end_rows(side: str, kind: str) -> Tuple[np.ndarray, np.ndarray]:
    v, dv, m, dm = (_unit(i) for i in range(4))
    p = -dm
    if side == "left":
        table = {
            "dissipative": ((-m, -p), (dv, v)),
            "pinned": ((v, m), (-p, -dv)),
            "free": ((-p, -m), (v, dv)),
            "shear_hinge": ((-p, dv), (v, -m)),
            "clamped": ((v, dv), (-p, -m)),
        }
    else:
        table = {
            "dissipative": ((m, p), (dv, v)),
            "pinned": ((v, m), (p, dv)),
            "free": ((p, m), (v, dv)),
            "shear_hinge": ((p, dv), (v, m)),
            "clamped": ((v, dv), (p, m)),
        }
    if kind not in table:
        raise UnsupportedClosure(f"no named {side} closure {kind!r}")
    b_rows, c_rows = table[kind]
    return _rows(*b_rows), _rows(*c_rows)


def raw_flux_form(side: str) -> np.ndarray:
    """Phi with Re(t* Phi t) = power entering the segment through this end."""
    phi = np.zeros((4, 4))
    sign = 1.0 if side == "left" else -1.0
    phi[V, DM] = sign
    phi[MO, DV] = -sign
    return phi


@dataclass(frozen=True)
class PortMap:
    """Linear maps from a port's traces to (B, C, B0, F) plus the closure law."""

    label: str
    size: int
    Gamma_B: np.ndarray
    Gamma_C: np.ndarray
    Gamma_B0: np.ndarray
    Gamma_F: np.ndarray
    loss: np.ndarray
    K: np.ndarray
    controller: Optional[ControllerSpec] = None

    @property
    def feedthrough(self) -> np.ndarray:
        """Static gain acting on C: K, or D_c when a controller is attached."""
        return self.controller.D_c if self.controller is not None else self.K

    def raw_flux(self) -> np.ndarray:
        if self.size == 4:
            return raw_flux_form("left" if self.label == "left" else "right")
        phi = np.zeros((8, 8))
        phi[:4, :4] = raw_flux_form("right")
        phi[4:, 4:] = raw_flux_form("left")
        return phi

    def closure_rows(self) -> np.ndarray:
        """Rows whose vanishing is the closure: B + D C (less C_c x_c), then B0."""
        gain = self.feedthrough
        return np.vstack([self.Gamma_B + gain @ self.Gamma_C, self.Gamma_B0])

    def dissipation_form(self) -> np.ndarray:
        """Hermitian form removed by the closure when no controller state is present."""
        gain = self.feedthrough
        herm = 0.5 * (gain + gain.conj().T)
        return self.loss + self.Gamma_C.T @ herm @ self.Gamma_C


def end_port(spec: EndConditionSpec) -> PortMap:
    side = spec.side
    if spec.kind == "explicit":
        gamma_y = _PORT_VECTOR[side]
        W = np.vstack([spec.W_B, spec.W_C])
        gamma_b = spec.W_B @ gamma_y
        gamma_c = spec.W_C @ gamma_y
        excess = W.conj().T @ SIGMA @ W - SIGMA
        loss = 0.5 * gamma_y.T @ excess @ gamma_y
    else:
        gamma_b, gamma_c = _named_end_rows(side, spec.kind)
        loss = np.zeros((4, 4))

    K = spec.K if spec.K is not None else np.zeros((2, 2))
    if spec.kind in ("pinned", "free", "shear_hinge", "clamped"):
        K = np.zeros((2, 2))
    return PortMap(
        label=side,
        size=4,
        Gamma_B=gamma_b,
        Gamma_C=gamma_c,
        Gamma_B0=np.zeros((0, 4)),
        Gamma_F=np.zeros((0, 4)),
        loss=loss,
        K=K,
        controller=spec.controller,
    )


def junction_port(index: int, spec: JunctionSpec) -> PortMap:
    """Port of junction `index` (1-based); traces are (t at l^j-, t at l^j+)."""
    minus = {name: _unit(i, 8) for i, name in enumerate(TRACE_NAMES)}
    plus = {name: _unit(4 + i, 8) for i, name in enumerate(TRACE_NAMES)}
    minus["p"], plus["p"] = _shear(0, 8), _shear(4, 8)

    def jump(name):
        return minus[name] - plus[name]

    def avg(name):
        return 0.5 * (minus[name] + plus[name])

    # (continuous, jumping) trace of the (p, v) and (m, dv) power pairs
    pairs = {
        1: (("v", "p"), ("dv", "m")),
        2: (("v", "p"), ("m", "dv")),
        3: (("p", "v"), ("dv", "m")),
        4: (("p", "v"), ("m", "dv")),
    }[spec.kind]

    gamma_b = _rows(*(jump(jumping) for _, jumping in pairs))
    gamma_c = _rows(*(avg(cont) for cont, _ in pairs))
    gamma_b0 = _rows(*(jump(cont) for cont, _ in pairs))
    gamma_f = _rows(*(avg(jumping) for _, jumping in pairs))

    return PortMap(
        label=f"junction_{index}",
        size=8,
        Gamma_B=gamma_b,
        Gamma_C=gamma_c,
        Gamma_B0=gamma_b0,
        Gamma_F=gamma_f,
        loss=np.zeros((8, 8)),
        K=spec.K,
        controller=spec.controller,
    )


# ---- Dissipation selectors ----

COMPONENTS: Dict[str, Tuple[str, int]] = {
    "H1(0)": ("left", V),
    "H1'(0)": ("left", DV),
    "H2(0)": ("left", MO),
    "H2'(0)": ("left", DM),
    "H1(1)": ("right", V),
    "H1'(1)": ("right", DV),
    "H2(1)": ("right", MO),
    "H2'(1)": ("right", DM),
}

ASYMPTOTIC_SELECTORS = {
    "asymptotic-1": ("H1(0)", "H1'(0)", "H2(0)", "H2'(1)"),
    "asymptotic-2": ("H1(0)", "H1'(0)", "H2'(0)", "H2(1)"),
    "asymptotic-3": ("H1(0)", "H2(0)", "H2'(0)", "H1'(1)"),
    "asymptotic-4": ("H1'(0)", "H2(0)", "H2'(0)", "H1(1)"),
}


def _exponential_selectors() -> Dict[str, Tuple[str, ...]]:
    found = {}
    for a in ("H1'(0)", "H2'(0)"):
        for b in ("H1(1)", "H2'(1)"):
            for c in ("H1'(1)", "H2(1)"):
                found[f"exponential[{a},{b},{c}]"] = ("H1(0)", "H2(0)", a, b, c)
    return found


EXPONENTIAL_SELECTORS = _exponential_selectors()

AUTOMATIC_SELECTORS = {
    name: comps for name, comps in EXPONENTIAL_SELECTORS.items()
    if (comps[2], comps[4]) in (("H1'(0)", "H2(1)"), ("H2'(0)", "H1'(1)"))
}

ZERO_ONLY_SELECTORS = {
    name.replace("asymptotic", "zero-only"): comps[:3] for name, comps in ASYMPTOTIC_SELECTORS.items()
}


def selector_rows(components: Tuple[str, ...], side: str) -> np.ndarray:
    """Rows picking the components of a selector that live at one end."""
    rows = [_unit(idx) for name in components for s, idx in [COMPONENTS[name]] if s == side]
    return np.vstack(rows) if rows else np.zeros((0, 4))
