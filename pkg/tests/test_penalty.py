"""Penalty values, derivatives, proximal maps, and the critical lambda."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from frailty_glasso import (FitConfig, PenaltyKind, PenaltySpec, fit,
                            lambda_max, penalty_value, prox_group,
                            prox_group_penalty)
from frailty_glasso.data import GroupStructure
from frailty_glasso.errors import ConfigError
from frailty_glasso.penalty import group_penalty_deriv, group_penalty_scalar

KINDS = [PenaltyKind.GROUP_LASSO, PenaltyKind.GROUP_SCAD, PenaltyKind.GROUP_MCP]


def _spec(kind, lam, gamma_scad=3.7, gamma_mcp=3.0):
    return PenaltySpec(kind=kind, lam=lam, gamma_scad=gamma_scad,
                       gamma_mcp=gamma_mcp)


class TestSpecValidation:
    def test_negative_lambda_rejected(self):
        with pytest.raises(ConfigError):
            PenaltySpec(kind="glasso", lam=-0.1)

    def test_shape_parameter_bounds(self):
        with pytest.raises(ConfigError):
            PenaltySpec(kind="gscad", lam=0.1, gamma_scad=2.0)
        with pytest.raises(ConfigError):
            PenaltySpec(kind="gmcp", lam=0.1, gamma_mcp=1.0)

    def test_string_kind_coerced(self):
        assert PenaltySpec(kind="gmcp", lam=0.1).kind is PenaltyKind.GROUP_MCP


class TestScalarPenalty:
    @pytest.mark.parametrize("kind", KINDS)
    def test_zero_at_zero_and_increasing(self, kind):
        spec = _spec(kind, 0.5)
        assert group_penalty_scalar(spec, 0.0, 3) == 0.0
        vals = [group_penalty_scalar(spec, t, 3)
                for t in np.linspace(0.0, 4.0, 60)]
        assert all(b >= a - 1e-12 for a, b in zip(vals, vals[1:]))

    @pytest.mark.parametrize("kind", KINDS)
    def test_continuous_at_breakpoints(self, kind):
        spec = _spec(kind, 0.8)
        # breakpoints of the scalar penalties in t = sqrt(size) * norm
        pts = [spec.lam, spec.gamma_scad * spec.lam, spec.gamma_mcp * spec.lam]
        for t in pts:
            lo = group_penalty_scalar(spec, (t - 1e-9), 1)
            hi = group_penalty_scalar(spec, (t + 1e-9), 1)
            assert hi == pytest.approx(lo, abs=1e-7)

    @pytest.mark.parametrize("kind", KINDS)
    def test_deriv_matches_finite_differences(self, kind):
        spec = _spec(kind, 0.6)
        h = 1e-7
        for norm in [0.1, 0.5, 1.0, 2.0, 5.0]:
            for size in [1, 3]:
                fd = (group_penalty_scalar(spec, norm + h, size)
                      - group_penalty_scalar(spec, norm - h, size)) / (2 * h)
                got = group_penalty_deriv(spec, norm, size)
                assert got == pytest.approx(fd, abs=1e-5)

    def test_nonconvex_penalties_saturate(self):
        scad = _spec(PenaltyKind.GROUP_SCAD, 0.5)
        mcp = _spec(PenaltyKind.GROUP_MCP, 0.5)
        big = group_penalty_scalar(scad, 100.0, 1)
        assert big == group_penalty_scalar(scad, 200.0, 1)
        assert big == pytest.approx(0.25 * (3.7 + 1) / 2)
        assert group_penalty_deriv(mcp, 100.0, 1) == 0.0

    def test_penalty_value_sums_groups(self):
        gs = GroupStructure(((0, 1), (2,)))
        beta = np.array([3.0, 4.0, -2.0])
        spec = _spec(PenaltyKind.GROUP_LASSO, 0.5)
        want = 0.5 * (np.sqrt(2) * 5.0 + 1.0 * 2.0)
        assert penalty_value(spec, beta, gs) == pytest.approx(want)


class TestProxGroup:
    def test_soft_threshold_shrinks_norm(self):
        z = np.array([3.0, 4.0])
        out = prox_group(z, 2.0)
        assert np.allclose(out, z * (1 - 2.0 / 5.0))
        assert np.allclose(prox_group(z, 5.0), 0.0)
        assert np.allclose(prox_group(z, 6.0), 0.0)

    @staticmethod
    def _brute_force(spec, z, step, size):
        """Dense search over the prox objective along the direction of z."""
        u = float(np.linalg.norm(z))
        xs = np.linspace(0.0, 2.0 * u + 1.0, 20001)
        vals = [(x - u) ** 2 / (2 * step)
                + group_penalty_scalar(spec, x, size) for x in xs]
        return float(np.min(vals))

    @pytest.mark.parametrize("kind", KINDS)
    def test_prox_beats_dense_search(self, kind):
        rng = np.random.default_rng(17)
        for _ in range(20):
            size = int(rng.integers(1, 4))
            z = rng.normal(scale=1.5, size=size)
            step = float(rng.uniform(0.05, 2.0))
            lam = float(rng.uniform(0.05, 1.5))
            spec = _spec(kind, lam)
            out = prox_group_penalty(spec, z, step, size)
            # prox output stays on the ray through z
            u = float(np.linalg.norm(z))
            x = float(np.linalg.norm(out))
            if x > 0:
                assert np.allclose(out, (x / u) * z)
            got = ((x - u) ** 2 / (2 * step)
                   + group_penalty_scalar(spec, x, size))
            want = self._brute_force(spec, z, step, size)
            assert got <= want + 1e-6

    def test_prox_zero_input(self):
        for kind in KINDS:
            out = prox_group_penalty(_spec(kind, 0.5), np.zeros(3), 1.0, 3)
            assert np.all(out == 0.0)

    @settings(max_examples=40, deadline=None)
    @given(
        z0=st.floats(-4, 4, allow_nan=False),
        z1=st.floats(-4, 4, allow_nan=False),
        step=st.floats(0.01, 3.0),
        lam=st.floats(0.0, 2.0),
        kind=st.sampled_from(KINDS),
    )
    def test_prox_never_lengthens(self, z0, z1, step, lam, kind):
        z = np.array([z0, z1])
        out = prox_group_penalty(_spec(kind, lam), z, step, 2)
        assert np.linalg.norm(out) <= np.linalg.norm(z) + 1e-12


class TestLambdaMax:
    def test_zero_solution_at_lambda_max(self, small_data):
        lmax = lambda_max(small_data, alpha0=1.0)
        assert lmax > 0
        res = fit(small_data, _spec(PenaltyKind.GROUP_LASSO, lmax),
                  FitConfig())
        assert np.all(res.beta_hat == 0.0)
        assert res.active_groups == ()

    def test_nonzero_solution_below_lambda_max(self, small_data):
        lmax = lambda_max(small_data, alpha0=1.0)
        res = fit(small_data, _spec(PenaltyKind.GROUP_LASSO, 0.2 * lmax),
                  FitConfig())
        assert np.any(res.beta_hat != 0.0)
