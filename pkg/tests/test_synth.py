import numpy as np
import pytest
from scipy import stats

from cpaudit import RngStream
from cpaudit.errors import ConfigError
from cpaudit.synth import BLOCK, SynthSpec, generate, standard_normal
from cpaudit.theory import std_normal_cdf


def noise(spec):
    d = generate(spec)
    return d, d.y - d.X @ np.asarray(spec.beta)


def test_mixture_moments():
    _, eps = noise(SynthSpec("mixture", n=10**5, mu=20.0, seed=1))
    assert abs(eps.mean()) < 0.2
    assert abs(np.abs(eps).mean() - 20.0) < 0.05


def test_mixture_mu_zero_is_standard_normal():
    _, eps = noise(SynthSpec("mixture", n=10**5, mu=0.0, seed=2))
    assert abs(eps.var() - 1.0) < 0.02


def test_gaussian_residuals():
    _, eps = noise(SynthSpec("gaussian", n=10**4, beta=(1.0, -1.0), sigma=1.0, seed=3))
    assert abs(eps.mean()) < 0.02 and abs(eps.var() - 1.0) < 0.03


def test_mixture_sign_independent_of_x():
    d, eps = noise(SynthSpec("mixture", n=10**4, mu=20.0, seed=4))
    table = np.histogram2d(eps > 0, d.X[:, 0] > 0, bins=2)[0]
    assert stats.chi2_contingency(table)[1] > 0.001


def test_logistic_labels():
    d = generate(SynthSpec("logistic", n=3000, k=4, d=3, seed=5))
    assert d.task == "classification" and d.dim == 3
    assert set(np.unique(d.y)) == {0, 1, 2, 3}


def test_determinism_and_blocks():
    spec = SynthSpec("gaussian", n=BLOCK * 2 + 17, seed=6)
    a, b = generate(spec), generate(spec)
    assert np.array_equal(a.X, b.X) and np.array_equal(a.y, b.y)
    short = generate(SynthSpec("gaussian", n=BLOCK + 5, seed=6))
    assert np.array_equal(short.X[:BLOCK], a.X[:BLOCK])


def test_groups_equal_mass():
    d = generate(SynthSpec("gaussian", n=20_000, n_groups=10, seed=7))
    counts = np.unique(d.groups, return_counts=True)[1]
    assert len(counts) == 10 and np.all(np.abs(counts - 2000) < 200)


def test_standard_normal_moments():
    z = RngStream(8).normals(10**6)
    assert abs(z.mean()) < 0.004 and abs(z.var() - 1) < 0.006


def test_standard_normal_determinism_and_ks():
    a, b = RngStream(9), RngStream(9)
    assert [standard_normal(a) for _ in range(5)] == [standard_normal(b) for _ in range(5)]
    z = np.sort(RngStream(10).normals(10**4))
    u = std_normal_cdf(z)
    ecdf = np.arange(1, z.size + 1) / z.size
    ks = max(np.max(ecdf - u), np.max(u - (ecdf - 1 / z.size)))
    assert ks < 0.02


@pytest.mark.parametrize("kw", [dict(kind="poisson"), dict(n=0), dict(mu=-1.0),
                                dict(sigma=0.0), dict(k=1), dict(kind="logistic", weights=np.zeros((3, 3)))])
def test_spec_validation(kw):
    with pytest.raises(ConfigError):
        SynthSpec(**kw)
