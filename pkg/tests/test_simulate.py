import math

import numpy as np
import pytest
from scipy import stats

from skorokhod import measure as M
from skorokhod import simulate as S
from skorokhod.boundary import ay_boundary, perkins_boundary
from skorokhod.certificate import RunningCost, power
from skorokhod.errors import TruncationDominates, ValidationError
from skorokhod.simulate import _fallback

needs_kernel = pytest.mark.skipif(S._kernel is None, reason="compiled kernel not built")

NAMES = ["uniform", "two-point", "three-atom", "pareto-truncated"]


@needs_kernel
@pytest.mark.parametrize("name", NAMES)
@pytest.mark.parametrize("emb", ["ay", "perkins", "cw"])
def test_backend_parity(name, emb):
    m = M.named(name)
    cfg = S.SimConfig(num_paths=200, dt=1e-3, seed=3)
    g = RunningCost("shifted", c=1.0)
    a = S.simulate(emb, m, cfg, g, backend="cython")
    b = S.simulate(emb, m, cfg, g, backend="python")
    assert np.array_equal(a.steps, b.steps)
    assert np.array_equal(a.code, b.code)
    for f in ("w_tau", "s_tau", "i_tau", "tau", "running_integral"):
        assert np.allclose(getattr(a, f), getattr(b, f), rtol=1e-12, atol=1e-12), f


def test_deterministic_and_splittable():
    m = M.named("uniform")
    cfg = S.SimConfig(num_paths=400, dt=1e-3, seed=9)
    a = S.simulate("perkins", m, cfg)
    b = S.simulate("perkins", m, cfg)
    assert np.array_equal(a.w_tau, b.w_tau)
    # paths are indexed, so a run can be split in two
    tail = S.simulate("perkins", m, S.SimConfig(num_paths=150, dt=1e-3, seed=9), first_path=250)
    assert np.array_equal(a.w_tau[250:], tail.w_tau)
    c = S.simulate("perkins", m, S.SimConfig(num_paths=400, dt=1e-3, seed=10))
    assert not np.array_equal(a.w_tau, c.w_tau)


def test_shared_paths_on_two_point():
    # all three rules reduce to the exit from (-1, 1) and share the Brownian path
    m = M.named("two-point")
    cfg = S.SimConfig(num_paths=500, dt=1e-3, seed=4)
    runs = [S.simulate(e, m, cfg) for e in ("ay", "perkins", "cw")]
    for r in runs[1:]:
        assert np.array_equal(r.tau, runs[0].tau)
        assert np.array_equal(r.w_tau, runs[0].w_tau)


def test_normals_are_gaussian():
    z = np.concatenate([_fallback.normals(5, p, 2000) for p in range(20)])
    assert stats.kstest(z, "norm").pvalue > 1e-3
    assert abs(z.mean()) < 0.02 and abs(z.std() - 1) < 0.02


@pytest.mark.parametrize("name", ["uniform", "three-atom"])
@pytest.mark.parametrize("emb", ["ay", "perkins", "cw"])
def test_embeds_target(name, emb):
    m = M.named(name)
    smp = S.simulate(emb, m, S.SimConfig(num_paths=10_000, dt=1e-3, seed=1))
    d, p = S.ks_test(smp.w_tau, m)
    assert p > 1e-3, (d, p)
    assert smp.truncated_fraction == 0.0


def test_perkins_zero_atom_randomisation():
    m = M.named("three-atom")
    smp = S.simulate("perkins", m, S.SimConfig(num_paths=20_000, dt=1e-3, seed=2))
    z = smp.code == 3
    assert abs(z.mean() - 0.5) < 4 * math.sqrt(0.25 / 20_000)
    assert np.all(smp.tau[z] == 0) and np.all(smp.w_tau[z] == 0)
    assert set(smp.stopped_by[z]) == {"zero-atom"}


def test_ay_maximum_law():
    m = M.named("uniform")
    smp = S.simulate("ay", m, S.SimConfig(num_paths=10_000, dt=1e-3, seed=6))
    assert S.ks_test_cdf(smp.s_tau, stats.uniform(0, 1).cdf)[1] > 1e-3
    # stopping on the boundary: W = beta(S)
    assert np.allclose(smp.w_tau, 2 * smp.s_tau - 1, atol=1e-8)


def test_ito_identity_in_report():
    m = M.named("uniform")
    g = RunningCost("shifted", c=1.0)
    smp = S.simulate("ay", m, S.SimConfig(num_paths=5000, dt=1e-3, seed=8), g)
    rep = S.mc_report(smp, power(1.0), g)
    assert abs(rep["ito_gap"]) < 4 * rep["ito_gap_se"] + 1e-3
    assert rep["mean_F"] == pytest.approx(0.5, abs=4 * rep["se_F"])
    assert rep["stopped_by"] == {"ay-boundary": 5000}
    assert rep["max_survival"]["survival"][0] == 1.0


def test_truncation_guard():
    m = M.named("pareto")
    cfg = S.SimConfig(num_paths=300, dt=1e-3, seed=0, level_cap=0.5)
    with pytest.raises(TruncationDominates):
        S.simulate("ay", m, cfg)
    smp = S.simulate("ay", m, cfg, strict=False)
    assert smp.truncated_fraction > 0.01
    assert "truncation" in set(smp.stopped_by)


@pytest.mark.parametrize("kw", [dict(num_paths=0), dict(dt=0.0), dict(dt=-1.0)])
def test_config_validation(kw):
    with pytest.raises(ValidationError):
        S.SimConfig(**kw)


def test_unknown_embedding_and_backend():
    with pytest.raises(ValidationError):
        S.simulate("root", M.named("uniform"), S.SimConfig(num_paths=10))
    with pytest.raises(ValidationError):
        S.simulate("ay", M.named("uniform"), S.SimConfig(num_paths=10), backend="fortran")


def test_csv_export(tmp_path):
    smp = S.simulate("perkins", M.named("three-atom"), S.SimConfig(num_paths=20, dt=1e-3))
    p = tmp_path / "s.csv"
    smp.to_csv(p)
    lines = p.read_text().splitlines()
    assert lines[0] == "w_tau,s_tau,i_tau,tau,integral,stopped_by"
    assert len(lines) == 21
    assert smp.sample(0)["stopped_by"] in S.STOP_LABELS


def test_chacon_walsh_tree_leaves():
    tree = S.chacon_walsh_tree(M.named("three-atom"), depth=6)
    assert sorted(set(np.round(tree.leaves, 12))) == [-1.0, 0.0, 1.0]
    assert tree.x[0] == pytest.approx(0.0)


def test_ks_distance_with_atoms():
    m = M.named("two-point")
    assert S.ks_distance(np.array([-1.0, 1.0]), m) == pytest.approx(0.0, abs=1e-15)
    assert S.ks_distance(np.array([-1.0, -1.0, -1.0, 1.0]), m) == pytest.approx(0.25)
