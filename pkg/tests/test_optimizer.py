import logging
from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stokespump import SolverConfig, WallShapeParams, build_channel
from stokespump.io import write_table
from stokespump.optimizer import (
    LOG_COLUMNS,
    OptimizerConfig,
    OptState,
    bfgs_minimize,
    initial_sigma,
    lower_wall_frozen_mask,
    multiplier_estimate,
    random_top_wall,
    replay_transcript,
    solve_constrained,
    symmetric_bump,
)
from stokespump.shape_calculus import GradientVector


class Synthetic:
    """Analytic stand-in for the flow solver: quadratic cost, linear constraints."""

    def __init__(self, A, xs, a, q, b, v):
        self.A, self.xs, self.a, self.q, self.b, self.v = A, xs, a, q, b, v
        self.forward_solves = self.adjoint_solves = 0

    @property
    def solves(self):
        return self.forward_solves + self.adjoint_solves

    def values(self, x):
        self.forward_solves += 1
        d = x - self.xs
        return SimpleNamespace(J_PL=0.5 * d @ self.A @ d, C_Q=self.a @ x - self.q, C_V=self.b @ x - self.v)

    def gradient(self, x):
        self.adjoint_solves += 1
        return self.values(x), GradientVector(self.A @ (x - self.xs), self.a, self.b)


def random_spd(rng, n, cond=10.0):
    Q, _ = np.linalg.qr(rng.normal(size=(n, n)))
    return Q @ np.diag(rng.uniform(1.0, cond, n)) @ Q.T


def synthetic(seed, n=6):
    rng = np.random.default_rng(seed)
    return Synthetic(random_spd(rng, n), rng.normal(size=n), rng.normal(size=n), 0.3, rng.normal(size=n), -0.2)


def kkt_point(p):
    n = len(p.xs)
    C = np.vstack([p.a, p.b])
    K = np.block([[p.A, C.T], [C, np.zeros((2, 2))]])
    return np.linalg.solve(K, np.concatenate([p.A @ p.xs, [p.q, p.v]]))[:n]


@pytest.mark.parametrize("n", [5, 10, 20, 41])
@pytest.mark.parametrize("seed", [0, 1])
def test_bfgs_on_quadratic(n, seed):
    rng = np.random.default_rng(seed)
    A, xs = random_spd(rng, n), rng.normal(size=n)
    p = Synthetic(A, xs, np.zeros(n), 0.0, np.zeros(n), 0.0)
    state = OptState.initial((10.0, 10.0))
    opt = OptimizerConfig(gtol=1e-11, max_inner=4 * n, max_step=1e6)
    x, info = bfgs_minimize(np.zeros(n), state, p, opt)
    assert np.max(np.abs(x - xs)) < 1e-10
    assert info["iterations"] <= 4 * n
    assert not info["line_search_failed"]


def test_bfgs_inner_monotone():
    p = synthetic(3)
    state = OptState.initial((10.0, 10.0))
    bfgs_minimize(np.zeros(6), state, p, OptimizerConfig())
    values = [row[LOG_COLUMNS.index("L_A")] for row in state.log]
    assert all(b <= a for a, b in zip(values, values[1:]))


def test_bfgs_reports_line_search_failure():
    class Walled(Synthetic):
        def values(self, x):
            return None if np.any(x != 0) else super().values(x)

    p = Walled(np.eye(2), np.ones(2), np.zeros(2), 0.0, np.zeros(2), 0.0)
    x, info = bfgs_minimize(np.zeros(2), OptState.initial((10.0, 10.0)), p, OptimizerConfig(max_halvings=5))
    assert info["line_search_failed"]
    np.testing.assert_array_equal(x, 0.0)


def test_bfgs_respects_mask():
    p = synthetic(4)
    mask = np.array([True, False, True, False, True, True])
    x, _ = bfgs_minimize(np.zeros(6), OptState.initial((10.0, 10.0)), p, OptimizerConfig(), mask=mask)
    assert np.all(x[~mask] == 0.0)


@pytest.mark.parametrize("lambda0", ["zero", "least-squares"])
def test_constrained_synthetic_reaches_kkt_point(lambda0):
    p = synthetic(5)
    opt = OptimizerConfig(lambda0=lambda0, max_step=10.0, zeta_star=1e-6)
    res = _run_synthetic(p, opt)
    assert res.converged
    np.testing.assert_allclose(res.params.xi[:6], kkt_point(p), atol=1e-5)


def _run_synthetic(p, opt):
    # the optimizer only needs ``xi`` and ``with_xi`` from the start shape
    start = SimpleNamespace(xi=np.zeros(len(p.xs)), with_xi=lambda xi: SimpleNamespace(xi=np.asarray(xi)))
    return solve_constrained(start, 0.0, 0.0, None, opt, evaluator=p)


def test_transcript_replays_exactly():
    p = synthetic(6)
    res = _run_synthetic(p, OptimizerConfig(max_step=10.0, zeta_star=1e-7))
    st = res.state
    rows = [(h[2], h[3]) for h in st.history]
    lam0 = st.transcript[0][2:4]
    replayed = replay_transcript(rows, tuple(st.sigma0), st.zeta_star, lam0)
    assert replayed == st.transcript
    sig = np.array([row[4:6] for row in st.transcript])
    assert np.all(np.diff(sig, axis=0) >= 0) and np.all(sig > 0)
    assert all(min(row[6:8]) > 0 for row in st.transcript)


@settings(max_examples=30)
@given(st.lists(st.tuples(st.floats(-2, 2), st.floats(-2, 2)), min_size=1, max_size=12))
def test_replay_follows_branch_rules(rows):
    sigma0 = (10.0, 100.0)
    out = replay_transcript(rows, sigma0, 1e-3)
    assert out[0][1] == "init"
    zeta = np.array(sigma0) ** -0.1
    lam = np.zeros(2)
    sigma = np.array(sigma0)
    for (cq, cv), row in zip(rows, out[1:]):
        if abs(cq) < zeta[0] and abs(cv) < zeta[1]:
            if abs(cq) < 1e-3 and abs(cv) < 1e-3:
                assert row[1] == "stop"
                break
            lam = lam - sigma * np.array([cq, cv])
            zeta = np.array(sigma0) ** -0.9 * zeta
            assert row[1] == "multiplier"
        else:
            sigma = 10 * sigma
            zeta = np.array(sigma0) ** -0.1
            assert row[1] == "penalty"
        np.testing.assert_allclose(row[2:], [*lam, *sigma, *zeta])


def test_determinism(tmp_path):
    paths = []
    for i in range(2):
        res = _run_synthetic(synthetic(7), OptimizerConfig(max_step=10.0))
        path = tmp_path / f"log{i}.tsv"
        write_table(path, LOG_COLUMNS, res.state.log)
        paths.append(path.read_bytes())
    assert paths[0] == paths[1]


def test_initial_sigma_rule():
    opt = OptimizerConfig()
    assert initial_sigma(opt, 0.5, 10.0) == (10.0, 10.0)
    assert initial_sigma(opt, 1.5, 10.0) == (10.0, 100.0)
    assert initial_sigma(OptimizerConfig(sigma0=(5.0, 7.0)), 100.0, 1.0) == (5.0, 7.0)


def test_multiplier_estimate_recovers_exact_combination():
    rng = np.random.default_rng(0)
    dq, dv = rng.normal(size=9), rng.normal(size=9)
    grad = GradientVector(2.0 * dq - 3.0 * dv, dq, dv)
    np.testing.assert_allclose(multiplier_estimate(grad), [2.0, -3.0])


def test_config_validation():
    with pytest.raises(ValueError):
        OptimizerConfig(zeta_star=0.0)
    with pytest.raises(ValueError):
        OptimizerConfig(lambda0="guess")
    with pytest.raises(ValueError):
        OptState.initial((0.0, 1.0))


def test_initial_shapes():
    rng = np.random.default_rng(0)
    s = random_top_wall(5, rng, 0.2)
    mask = lower_wall_frozen_mask(5)
    assert np.all(s.xi[~mask] == 0.0)
    assert mask.sum() == 21
    b = symmetric_bump(5, 0.3)
    geom = build_channel(b, 32, 16)
    assert geom.upper.x[16, 1] == pytest.approx(1.3)
    assert geom.lower.x[16, 1] == pytest.approx(-1.3)


def test_flat_start_is_already_optimal(caplog):
    flat = WallShapeParams.flat(5)
    geom = build_channel(flat, 48, 32)
    cfg = SolverConfig(M=48)
    with caplog.at_level(logging.WARNING):
        res = solve_constrained(flat, 0.0, geom.volume, cfg, OptimizerConfig())
    assert res.converged and res.state.m == 1
    assert res.state.history[0][5] <= 1
    np.testing.assert_allclose(res.params.xi, flat.xi, atol=1e-12)
    assert res.solves <= 4
