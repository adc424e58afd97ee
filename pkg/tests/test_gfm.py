"""Tests for line assembly, the Thomas solver, and operator application."""

import numpy as np
import pytest

from gfmpbe.errors import AssemblyError, ConfigError
from gfmpbe.gfm import JumpData, LineSystem, apply_operator, assemble_line, thomas_solve
from gfmpbe.grid import build_grid
from gfmpbe.molecule import Atom, AtomSet, PhysicalParams
from gfmpbe.stepping import compute_jumps
from gfmpbe.surface import classify_union

NO_JUMP = JumpData(0.0, 0.0)


def _uniform_line(n=8, eps=3.0, h=0.5, bc=(1.0, -2.0), inside=True):
    flags = np.full(n, inside, dtype=bool)
    return assemble_line(0, flags, (eps, 80.0) if inside else (1.0, eps), {}, bc, h)


def _dense_neg_a(sys: LineSystem) -> np.ndarray:
    """Materialize the stored negated operator M = -A."""
    m = sys.n_interior
    mat = np.zeros((m, m))
    mat[np.arange(m), np.arange(m)] = sys.diag
    mat[np.arange(m - 1), np.arange(1, m)] = sys.off
    mat[np.arange(1, m), np.arange(m - 1)] = sys.off
    return mat


def _fold(sys: LineSystem) -> np.ndarray:
    f = np.zeros(sys.n_interior)
    f[0] = sys.w_lo * sys.bc_lo
    f[-1] = sys.w_hi * sys.bc_hi
    return f


class TestRegularStencil:
    def test_constant_eps_tridiag(self):
        eps, h = 3.0, 0.5
        sys = _uniform_line(n=8, eps=eps, h=h)
        w = eps / h**2
        np.testing.assert_allclose(sys.diag, 2 * w, rtol=1e-15)
        np.testing.assert_allclose(sys.off, -w, rtol=1e-15)
        np.testing.assert_allclose(sys.corr, 0.0)
        assert sys.w_lo == pytest.approx(w)
        assert sys.w_hi == pytest.approx(w)

    def test_homogeneous_jump_reduces_to_harmonic(self):
        # One cut with a = b = 0: harmonic edge weight, zero corrections.
        flags = np.array([True, True, True, False, False, False])
        eps_in, eps_out, h, theta = 2.0, 80.0, 1.0, 0.3
        sys = assemble_line(
            0, flags, (eps_in, eps_out), {2: (theta, NO_JUMP)}, (0.0, 0.0), h
        )
        denom = eps_out * theta + eps_in * (1 - theta)
        w_hat = eps_in * eps_out / denom
        # Cut edge (2,3) couples interior nodes 2 and 3 -> off index 1.
        assert -sys.off[1] == pytest.approx(w_hat, rel=1e-14)
        np.testing.assert_allclose(sys.corr, 0.0)

    def test_constants_in_kernel(self):
        sys = _uniform_line(n=9, bc=(4.0, 4.0))
        v = np.full(9, 4.0)
        np.testing.assert_allclose(apply_operator(sys, v), 0.0, atol=1e-12)

    def test_zero_everything(self):
        sys = _uniform_line(n=7, bc=(0.0, 0.0))
        np.testing.assert_allclose(apply_operator(sys, np.zeros(7)), 0.0)


class TestManufactured:
    """Piecewise-linear two-material profiles are reproduced exactly."""

    def _draw(self, rng):
        n = int(rng.integers(8, 16))
        h = 1.0 / (n - 1)
        cut = int(rng.integers(1, n - 2))
        theta = float(rng.uniform(0.05, 0.95))
        alpha, beta, gamma = rng.uniform(-2, 2, size=3)
        eps_in = float(rng.uniform(0.5, 4.0))
        eps_out = float(rng.uniform(eps_in, 100.0))
        low_inside = bool(rng.integers(0, 2))
        x = np.arange(n) * h
        x_i = (cut + theta) * h
        # delta chosen freely; the jump conditions absorb any mismatch
        delta = float(rng.uniform(-2, 2))
        lo = lambda s: alpha * s + beta
        hi = lambda s: gamma * s + delta
        u = np.where(np.arange(n) <= cut, lo(x), hi(x))
        if low_inside:
            a = hi(x_i) - lo(x_i)
            b = eps_out * gamma - eps_in * alpha
        else:
            a = lo(x_i) - hi(x_i)
            b = eps_out * alpha - eps_in * gamma
        flags = np.zeros(n, dtype=bool)
        flags[: cut + 1] = low_inside
        flags[cut + 1 :] = not low_inside
        sys = assemble_line(
            0,
            flags,
            (eps_in, eps_out),
            {cut: (theta, JumpData(a, b))},
            (u[0], u[-1]),
            h,
        )
        return sys, u

    def test_twenty_random_draws(self):
        rng = np.random.default_rng(2024)
        for _ in range(20):
            sys, u = self._draw(rng)
            scale = max(1.0, np.abs(u).max())
            # The profile is a discrete steady state: A u + c + fold = 0.
            res = apply_operator(sys, u)
            assert np.abs(res).max() / (scale / sys.h**2) < 1e-12
            # Direct solve reproduces the interior nodal values.
            m = _dense_neg_a(sys)
            x = np.linalg.solve(m, sys.corr + _fold(sys))
            np.testing.assert_allclose(x, u[1:-1], rtol=0, atol=1e-12 * scale)
            # And the shifted solve has the profile as fixed point.
            for dt in (1e-3, 0.1, 7.0):
                y = thomas_solve(sys, dt, u[1:-1].copy())
                np.testing.assert_allclose(y, u[1:-1], rtol=0, atol=1e-11 * scale)


class TestThomas:
    def _random_system(self, rng, n=12):
        weights = rng.uniform(0.5, 20.0, size=n - 1)
        flags = np.full(n, True)
        h = 0.25
        sys = assemble_line(0, flags, (1.0, 80.0), {}, (0.0, 0.0), h)
        # Replace by a synthetic variable-coefficient system.
        return LineSystem(
            diag=weights[:-1] + weights[1:],
            off=-weights[1:-1],
            corr=rng.normal(size=n - 2),
            bc_lo=float(rng.normal()),
            bc_hi=float(rng.normal()),
            w_lo=float(weights[0]),
            w_hi=float(weights[-1]),
            h=h,
        )

    def test_identity_at_dt_zero(self):
        rng = np.random.default_rng(5)
        sys = self._random_system(rng)
        rhs = rng.normal(size=sys.n_interior)
        np.testing.assert_array_equal(thomas_solve(sys, 0.0, rhs.copy()), rhs)

    def test_small_system_vs_dense(self):
        rng = np.random.default_rng(8)
        sys = self._random_system(rng, n=5)  # 3 interior unknowns
        dt = 0.37
        rhs = rng.normal(size=3)
        got = thomas_solve(sys, dt, rhs.copy())
        mat = np.eye(3) + dt * _dense_neg_a(sys)
        want = np.linalg.solve(mat, rhs + dt * (sys.corr + _fold(sys)))
        np.testing.assert_allclose(got, want, rtol=0, atol=1e-13)

    def test_residual_bound_random_100(self):
        rng = np.random.default_rng(13)
        sys = self._random_system(rng, n=102)
        dt = 2.5
        rhs = rng.normal(size=100)
        x = thomas_solve(sys, dt, rhs.copy())
        mat = np.eye(100) + dt * _dense_neg_a(sys)
        full_rhs = rhs + dt * (sys.corr + _fold(sys))
        res = np.abs(mat @ x - full_rhs).max()
        assert res <= 1e-10 * max(np.abs(full_rhs).max(), 1.0)

    def test_rhs_length_checked(self):
        sys = _uniform_line(n=8)
        with pytest.raises(ConfigError):
            thomas_solve(sys, 0.1, np.zeros(7))


class TestApplyOperator:
    def test_random_vs_dense(self):
        rng = np.random.default_rng(21)
        flags = np.array([True] * 4 + [False] * 6)
        jump = JumpData(a=0.7, b=-1.3)
        sys = assemble_line(
            0, flags, (2.0, 80.0), {3: (0.4, jump)}, (0.6, -0.9), 0.5
        )
        v = rng.normal(size=10)
        v[0], v[-1] = sys.bc_lo, sys.bc_hi
        got = apply_operator(sys, v)
        m = _dense_neg_a(sys)
        want = -m @ v[1:-1] + sys.corr + _fold(sys)
        np.testing.assert_allclose(got[1:-1], want, rtol=0, atol=1e-13)
        assert got[0] == 0.0 and got[-1] == 0.0

    def test_length_checked(self):
        sys = _uniform_line(n=8)
        with pytest.raises(ConfigError):
            apply_operator(sys, np.zeros(9))


class TestAssemblyValidation:
    def test_mixed_edge_without_cut(self):
        flags = np.array([True, True, False, False, False])
        with pytest.raises(AssemblyError, match="no crossing"):
            assemble_line(0, flags, (1.0, 80.0), {}, (0.0, 0.0), 1.0)

    def test_cut_on_uniform_edge(self):
        flags = np.full(5, True)
        with pytest.raises(AssemblyError, match="no side change"):
            assemble_line(
                0, flags, (1.0, 80.0), {1: (0.5, NO_JUMP)}, (0.0, 0.0), 1.0
            )

    def test_theta_clamp_range(self):
        flags = np.array([True, True, False, False, False])
        with pytest.raises(AssemblyError, match="clamp"):
            assemble_line(
                0, flags, (1.0, 80.0), {1: (1e-9, NO_JUMP)}, (0.0, 0.0), 1.0
            )

    def test_non_finite_jump_rejected(self):
        with pytest.raises(AssemblyError):
            JumpData(float("nan"), 0.0)

    def test_harmonic_limits(self):
        eps_in, eps_out = 2.0, 80.0
        flags = np.array([True, True, True, False, False, False])
        lo = assemble_line(
            0, flags, (eps_in, eps_out), {2: (1e-6, NO_JUMP)}, (0.0, 0.0), 1.0
        )
        hi = assemble_line(
            0, flags, (eps_in, eps_out), {2: (1.0 - 1e-6, NO_JUMP)}, (0.0, 0.0), 1.0
        )
        # theta -> 0: weight approaches the far-side eps; theta -> 1: near side.
        assert -lo.off[1] == pytest.approx(eps_out, rel=1e-4)
        assert -hi.off[1] == pytest.approx(eps_in, rel=1e-4)


class TestTwoSphereLines:
    """Symmetry and dominance on every assembled line of a real problem."""

    def test_all_lines_symmetric_and_dominant(self):
        atoms = AtomSet(
            [Atom((0.0, 0.0, 0.0), 1.0, 1.8), Atom((2.2, 0.4, -0.3), -0.6, 1.5)]
        )
        grid = build_grid(atoms, h=0.5, probe_radius=1.0)
        data = classify_union(grid, atoms)
        params = PhysicalParams(eps_in=1.0, eps_out=80.0, kappa_sq=1.0)
        jumps = compute_jumps(data, atoms, params)
        eps = (params.eps_in, params.eps_out)
        n_checked = 0
        n_expected = 0
        for axis in range(3):
            t1, t2 = (a for a in range(3) if a != axis)
            n_expected += (grid.shape[t1] - 2) * (grid.shape[t2] - 2)
            cuts_by_line = {}
            for key, c in data.crossings.items():
                if c.axis != axis:
                    continue
                tv = (c.index[t1], c.index[t2])
                cuts_by_line.setdefault(tv, {})[c.index[axis]] = (
                    c.theta,
                    jumps[key],
                )
            for a1 in range(1, grid.shape[t1] - 1):
                for a2 in range(1, grid.shape[t2] - 1):
                    sl = [slice(None)] * 3
                    sl[t1], sl[t2] = a1, a2
                    flags = data.inside[tuple(sl)]
                    sys = assemble_line(
                        axis, flags, eps, cuts_by_line.get((a1, a2), {}),
                        (0.0, 0.0), grid.h,
                    )
                    assert np.all(sys.off <= 0.0)
                    assert np.all(sys.diag >= 0.0)
                    # Row sums: diagonal equals the two couplings exactly,
                    # counting the boundary links for the end rows.
                    m = sys.n_interior
                    coupling = np.zeros(m)
                    coupling[1:] += -sys.off
                    coupling[:-1] += -sys.off
                    coupling[0] += sys.w_lo
                    coupling[-1] += sys.w_hi
                    np.testing.assert_allclose(
                        sys.diag, coupling, rtol=1e-13, atol=0
                    )
                    # -A is PSD: check via Gershgorin (diag dominance of M).
                    evals = np.linalg.eigvalsh(_dense_neg_a(sys))
                    assert evals.min() >= -1e-10 * max(1.0, evals.max())
                    n_checked += 1
        assert n_checked == n_expected
