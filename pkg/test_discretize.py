"""
Tests for the SBP assembly, energy, power balance and trace maps
"""
import os

import numpy as np
import pytest
from scipy import io as sio

from config.settings import DEFAULT_CELLS
from utils.chain_model import build_chain, normalize
from utils.config_loader import load_config
from utils.discretizer import (
    Grid,
    assemble,
    config_hash,
    discrete_power_balance,
    energy,
    export_matrices,
    nodal_profiles,
    state_from_profiles,
    traces,
)
from utils.errors import AssemblyDimension, DimensionMismatch, UnsupportedClosure
from utils.passivity_checker import check_controller

SCENARIOS = os.path.join(os.path.dirname(os.path.abspath(__file__)), "scenarios")
SCENARIO_NAMES = sorted(name[:-5] for name in os.listdir(SCENARIOS) if name.endswith(".json"))


def clamped_free_doc():
    return {
        "segments": [{"length": 1.0, "rho": 1.0, "ei": 1.0}],
        "junctions": [],
        "left_end": {"kind": "clamped"},
        "right_end": {"kind": "free"},
    }


def damped_pair_doc(junction=None):
    return {
        "segments": [
            {"length": 0.4, "rho": [1.0, 1.2, 1.1], "ei": [2.0, 1.8]},
            {"length": 0.6, "rho": [1.3, 1.5], "ei": [1.6, 1.4, 1.5]},
        ],
        "junctions": [junction or {"kind": 1, "K": [[0.5, 0.1], [0.1, 0.2]]}],
        "left_end": {"kind": "dissipative", "K": [[1, 0], [0, 1]]},
        "right_end": {"kind": "pinned"},
    }


def bundle_for(doc, cells=16):
    return assemble(normalize(build_chain(doc)), Grid(cells))


def scenario_bundle(name, cells):
    doc = load_config(os.path.join(SCENARIOS, f"{name}.json"))
    return assemble(normalize(build_chain(doc)), Grid(cells))


def unit_states(dim, count, seed=0):
    rng = np.random.default_rng(seed)
    for _ in range(count):
        x = rng.standard_normal(dim)
        yield x / np.linalg.norm(x)


def physical(bundle, j, zeta):
    lengths = bundle.model.lengths
    return sum(lengths[: j - 1]) + zeta * lengths[j - 1]


# ---- Grid and assembly ----

def test_grid_minimum_cells():
    with pytest.raises(AssemblyDimension):
        Grid(7)
    assert Grid(8).n_nodes == 9


def test_grid_accepts_numpy_integers():
    grid = Grid(np.int64(16))
    assert type(grid.cells_per_segment) is int
    assert grid.n_nodes == 17

    nm = normalize(build_chain(clamped_free_doc()))
    assert config_hash(nm, grid) == config_hash(nm, Grid(16))
    assert assemble(nm, grid).config_hash == assemble(nm, Grid(16)).config_hash

    with pytest.raises(AssemblyDimension):
        Grid(16.5)
    with pytest.raises(AssemblyDimension):
        Grid("16")


def test_conservative_chain_is_skew():
    bundle = bundle_for(clamped_free_doc(), cells=8)
    # clamped fixes v, dv and free fixes m, dm
    assert bundle.n_eliminated == 4
    assert bundle.dim == 2 * 9 - 4
    assert bundle.is_conservative
    assert np.allclose(bundle.M_h, np.eye(bundle.dim))
    for x in unit_states(bundle.dim, 100):
        assert abs(np.real(x @ (bundle.M_h @ (bundle.A_h @ x)))) <= 1e-12


def test_eliminated_constraints_per_port():
    bundle = bundle_for(damped_pair_doc(), cells=16)
    # two per end, four per junction
    assert bundle.n_eliminated == 2 + 4 + 2
    assert bundle.dim == 2 * 2 * 17 - 8
    assert bundle.basis.shape == (bundle.n_nodal, bundle.dim)
    gram = bundle.basis.T @ (bundle.nodal_weights[:, None] * bundle.basis)
    assert np.allclose(gram, np.eye(bundle.dim), atol=1e-10)


def test_damped_chain_is_dissipative():
    bundle = bundle_for(damped_pair_doc(), cells=24)
    assert not bundle.is_conservative
    assert np.allclose(bundle.J_h, -bundle.J_h.T)
    assert np.linalg.eigvalsh(bundle.R_h)[0] >= -1e-10 * np.abs(bundle.R_h).max()
    for x in unit_states(bundle.dim, 100, seed=1):
        assert np.real(x @ (bundle.M_h @ (bundle.A_h @ x))) <= 1e-10


def test_every_scenario_is_dissipative_at_default_cells():
    for name in SCENARIO_NAMES:
        bundle = scenario_bundle(name, DEFAULT_CELLS)
        for x in unit_states(bundle.dim, 1000, seed=7):
            balance = discrete_power_balance(bundle, x)
            assert balance.holds(), (name, balance.residual, balance.tolerance())
            if bundle.is_conservative:
                assert abs(balance.lhs) <= balance.tolerance(1e-12), (name, balance.lhs)
            else:
                assert balance.lhs <= balance.tolerance(1e-10), (name, balance.lhs)


def test_grid_scale_curvature_at_damped_end_is_not_stationary():
    bundle = scenario_bundle("chen87_m2", 24)
    n = bundle.grid.n_nodes
    y = np.zeros(bundle.n_nodal)
    y[n:n + 2] = (-2.0, 1.0)
    x = bundle.restrict(y)
    assert np.linalg.norm(x) > 0.0
    assert np.linalg.norm(bundle.A_h @ x) >= 1e-3 * np.linalg.norm(x)


def test_dynamic_controller_dissipativity():
    controller = {
        "A_c": [[-1, 1], [-1, -1]],
        "B_c": [[1, 0], [0, 1]],
        "C_c": [[1, 0], [0, 1]],
        "D_c": [[1, 0], [0, 1]],
    }
    plain = bundle_for(damped_pair_doc({"kind": 1}), cells=24)
    bundle = bundle_for(damped_pair_doc({"kind": 1, "controller": controller}), cells=24)
    assert bundle.dim == plain.dim + 2
    assert bundle.n_plant == plain.n_plant
    assert bundle.controller_slices["junction_1"] == slice(bundle.n_plant, bundle.n_plant + 2)

    spec = build_chain(damped_pair_doc({"kind": 1, "controller": controller})).junctions[0].controller
    kappa = check_controller(spec).kappa
    assert kappa == pytest.approx(1.0, abs=1e-8)

    rng = np.random.default_rng(2)
    for _ in range(100):
        x = rng.standard_normal(bundle.dim)
        x /= np.linalg.norm(x)
        power = np.real(x @ (bundle.M_h @ (bundle.A_h @ x)))
        output = spec.D_c @ (bundle.Cmat["junction_1"] @ x)
        assert power <= -kappa * np.dot(output, output) + 1e-10


def test_explicit_active_end_rejected():
    doc = clamped_free_doc()
    doc["right_end"] = {
        "kind": "explicit",
        "W_B": [[1, 0, 0, 0], [0, 1, 0, 0]],
        "W_C": [[0, 0, 2, 0], [0, 0, 0, 2]],
    }
    with pytest.raises(UnsupportedClosure):
        bundle_for(doc)


def test_assembly_is_deterministic():
    first = bundle_for(damped_pair_doc())
    second = bundle_for(damped_pair_doc())
    assert first.config_hash == second.config_hash
    assert np.array_equal(first.A_h, second.A_h)
    assert first.config_hash != bundle_for(damped_pair_doc(), cells=20).config_hash


def test_complex_gain_gives_complex_bundle():
    doc = damped_pair_doc()
    doc["left_end"]["K"] = [[1, [0, 0.5]], [[0, -0.5], 1]]
    bundle = bundle_for(doc)
    assert bundle.is_complex
    rng = np.random.default_rng(4)
    for _ in range(20):
        x = rng.standard_normal(bundle.dim) + 1j * rng.standard_normal(bundle.dim)
        x /= np.linalg.norm(x)
        assert np.real(np.vdot(x, bundle.M_h @ (bundle.A_h @ x))) <= 1e-10


# ---- Energy ----

def test_energy_examples():
    doc = clamped_free_doc()
    doc["left_end"] = {"kind": "free"}
    bundle = bundle_for(doc)
    assert energy(bundle, np.zeros(bundle.dim)) == 0.0

    # rho = 1 and w_t = 1 is admissible between free ends
    x = state_from_profiles(bundle, lambda j, z: np.ones_like(z), lambda j, z: np.zeros_like(z))
    assert energy(bundle, x) == pytest.approx(0.5, abs=1e-12)
    assert energy(bundle, 2.0 * x) == pytest.approx(4.0 * energy(bundle, x))


def test_energy_rejects_wrong_dimension():
    bundle = bundle_for(clamped_free_doc())
    with pytest.raises(DimensionMismatch):
        energy(bundle, np.zeros(bundle.dim + 1))


# ---- Power balance ----

def test_power_balance_conservative():
    bundle = bundle_for(clamped_free_doc())
    for x in unit_states(bundle.dim, 20, seed=3):
        balance = discrete_power_balance(bundle, x)
        assert balance.holds()
        assert abs(balance.residual) <= 1e-10
        assert balance.dissipation == 0.0


def test_power_balance_damped():
    bundle = bundle_for(damped_pair_doc(), cells=24)
    for x in unit_states(bundle.dim, 20, seed=4):
        balance = discrete_power_balance(bundle, x)
        assert balance.holds()
        assert balance.lhs <= balance.tolerance()
        assert abs(balance.lhs - balance.dissipation) <= balance.tolerance()


def test_power_balance_without_boundary_flux():
    bundle = bundle_for(damped_pair_doc(), cells=24)
    rng = np.random.default_rng(5)
    n = bundle.grid.n_nodes
    y = np.zeros(bundle.n_nodal)
    for j in (1, 2):
        start = bundle.segment_offsets[j - 1]
        for block in (start, start + n):
            y[block + 3:block + n - 3] = rng.standard_normal(n - 6)

    x = bundle.restrict(y)
    assert np.allclose(bundle.lift(x), y, atol=1e-12)
    for rows in bundle.trace_rows.values():
        assert np.allclose(rows @ bundle.lift(x), 0.0, atol=1e-10)
    balance = discrete_power_balance(bundle, x)
    assert abs(balance.lhs) <= balance.tolerance()
    assert abs(balance.flux) <= balance.tolerance()


# ---- Traces ----

def test_traces_exact_on_linear_profiles():
    bundle = bundle_for(damped_pair_doc(), cells=16)
    model = bundle.model

    def velocity(j, zeta):
        return 2.0 + 3.0 * physical(bundle, j, zeta)

    def curvature(j, zeta):
        return (1.0 + 2.0 * physical(bundle, j, zeta)) / model.segments[j - 1].ei(zeta)

    y = nodal_profiles(bundle, velocity, curvature)
    for (j, side), rows in bundle.trace_rows.items():
        t = rows @ y
        s = physical(bundle, j, 1.0 if side == "right" else 0.0)
        assert t[0] == pytest.approx(2.0 + 3.0 * s, abs=1e-12)
        assert t[1] == pytest.approx(3.0, abs=1e-11)
        assert t[2] == pytest.approx(1.0 + 2.0 * s, abs=1e-12)
        assert t[3] == pytest.approx(2.0, abs=1e-11)


def test_admissible_profiles_are_reproduced():
    doc = damped_pair_doc({"kind": 1, "K": [[0, 0], [0, 0]]})
    for seg in doc["segments"]:
        seg["rho"], seg["ei"] = 1.0, 1.0
    bundle = bundle_for(doc)

    # v = 1 - s and m = -1 - s + 2 s^2 meet the damped, junction and pinned closures
    y = nodal_profiles(
        bundle,
        lambda j, z: 1.0 - physical(bundle, j, z),
        lambda j, z: -1.0 - physical(bundle, j, z) + 2.0 * physical(bundle, j, z) ** 2,
    )
    x = bundle.restrict(y)
    assert np.allclose(bundle.lift(x), y, atol=1e-10)

    tv = traces(bundle, x)
    assert np.allclose(tv.B0["junction_1"], 0.0, atol=1e-10)
    assert np.allclose(tv.B["junction_1"], 0.0, atol=1e-10)
    for label, residual in tv.constraint_residual.items():
        assert np.allclose(residual, 0.0, atol=1e-10), label


def test_every_state_obeys_the_closures():
    controller = {"A_c": [[-2.0]], "B_c": [[1.0, 0.0]], "C_c": [[1.0], [0.0]], "D_c": [[1.0, 0.0], [0.0, 1.0]]}
    bundle = bundle_for(damped_pair_doc({"kind": 2, "controller": controller}), cells=20)
    for x in unit_states(bundle.dim, 20, seed=8):
        tv = traces(bundle, x)
        scale = max(np.max(np.abs(t)) for t in tv.segment_ends.values())
        for label, residual in tv.constraint_residual.items():
            assert np.max(np.abs(residual), initial=0.0) <= 1e-10 * scale, label


def test_pinned_end_selector_components_vanish():
    doc = clamped_free_doc()
    doc["right_end"] = {"kind": "pinned"}
    bundle = bundle_for(doc, cells=32)
    x = state_from_profiles(
        bundle,
        lambda j, z: np.sin(np.pi * z),
        lambda j, z: np.sin(np.pi * z),
    )
    tv = traces(bundle, x)
    assert abs(tv.selector["H1(1)"]) <= 1e-12
    assert abs(tv.selector["H2(1)"]) <= 1e-12
    assert np.allclose(tv.constraint_residual["right"], 0.0, atol=1e-12)


def test_port_maps_match_traces():
    bundle = bundle_for(damped_pair_doc())
    x = next(unit_states(bundle.dim, 1, seed=6))
    tv = traces(bundle, x)
    for label, B in bundle.Bmat.items():
        assert np.allclose(B @ x, tv.B[label])
        assert np.allclose(bundle.Cmat[label] @ x, tv.C[label])


# ---- Export ----

def test_export_matrices(tmp_path):
    bundle = bundle_for(clamped_free_doc(), cells=8)
    paths = export_matrices(bundle, str(tmp_path))
    assert [os.path.basename(p) for p in paths] == ["A_h.mtx", "M_h.mtx"]
    A = sio.mmread(paths[0]).toarray()
    assert np.allclose(A, bundle.A_h)


if __name__ == "__main__":
    import tempfile

    tests = [value for name, value in sorted(globals().items()) if name.startswith("test_") and callable(value)]
    for test in tests:
        try:
            if test is test_export_matrices:
                with tempfile.TemporaryDirectory() as tmp:
                    test(tmp)
            else:
                test()
            print(f"✅ {test.__name__}")
        except Exception as e:
            print(f"❌ {test.__name__}: {e}")
