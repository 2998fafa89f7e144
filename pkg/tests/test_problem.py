import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mchtp.problem import (
    SignalStructure,
    gen_gaussian_matrix,
    gen_signal,
    gen_tight_frame,
    generate_instance,
    instance_from_dict,
    instance_to_dict,
    make_instance,
    signal_ratio,
)


def test_gaussian_matrix_column_norms():
    phi = gen_gaussian_matrix(256, 512, seed=7)
    norms = np.linalg.norm(phi, axis=0)
    assert 0.9 <= norms.mean() <= 1.1


def test_gaussian_matrix_deterministic():
    assert np.array_equal(gen_gaussian_matrix(16, 32, 5), gen_gaussian_matrix(16, 32, 5))
    assert not np.array_equal(gen_gaussian_matrix(16, 32, 5), gen_gaussian_matrix(16, 32, 6))


def test_gaussian_matrix_rejects_overdetermined():
    with pytest.raises(ValueError):
        gen_gaussian_matrix(4, 2, 0)


def test_normalized_columns():
    phi = gen_gaussian_matrix(10, 20, 1, normalize=True)
    assert np.allclose(np.linalg.norm(phi, axis=0), 1.0)


def test_tight_frame_rows_orthonormal():
    phi = gen_tight_frame(8, 12, 3, unit_columns=False)
    assert np.allclose(phi @ phi.T, np.eye(8), atol=1e-12)
    assert np.allclose(np.linalg.norm(gen_tight_frame(8, 12, 3), axis=0), 1.0)


def test_flat_single_entry():
    x = gen_signal(10, 1, SignalStructure("flat"), seed=0)
    assert np.count_nonzero(x) == 1
    assert abs(np.abs(x).max() - 1.0) < 1e-15


def test_linear_profile():
    x = gen_signal(20, 3, SignalStructure("linear"), seed=1)
    mags = np.sort(np.abs(x[x != 0]))
    alpha = np.sqrt(6 / (3 * 4 * 7))
    assert np.isclose(alpha, 0.2673, atol=1e-4)
    assert np.allclose(mags, alpha * np.array([1, 2, 3]))
    assert np.isclose(np.linalg.norm(x), 1.0)


def test_decaying_alpha_one_is_flat():
    x = gen_signal(30, 6, SignalStructure("decaying", alpha=1.0), seed=2)
    mags = np.abs(x[x != 0])
    assert np.allclose(mags, 1 / np.sqrt(6))


def test_bad_structures():
    with pytest.raises(ValueError):
        SignalStructure("spiky")
    with pytest.raises(ValueError):
        SignalStructure("decaying")
    with pytest.raises(ValueError):
        SignalStructure("decaying", alpha=1.5)
    with pytest.raises(ValueError):
        gen_signal(5, 6)


@settings(max_examples=60)
@given(st.sampled_from(["flat", "linear", "decaying", "gaussian"]),
       st.integers(1, 20), st.floats(0.1, 10), st.floats(0.3, 1.0), st.integers(0, 10**6))
def test_signal_norm_and_sparsity(kind, K, norm, alpha, seed):
    s = SignalStructure(kind, alpha if kind == "decaying" else None, norm)
    x = gen_signal(40, K, s, seed)
    assert np.count_nonzero(x) == K
    assert np.isclose(np.linalg.norm(x), norm, rtol=1e-12)


def test_signal_ratio_examples():
    assert signal_ratio(gen_signal(20, 5, SignalStructure("flat"), 0))[2] == pytest.approx(1.0)
    assert signal_ratio(gen_signal(20, 5, SignalStructure("linear"), 0))[2] == pytest.approx(5.0)
    x = gen_signal(20, 5, SignalStructure("decaying", alpha=0.8), 0)
    assert signal_ratio(x)[2] == pytest.approx(0.8 ** (1 - 5))
    with pytest.raises(ValueError):
        signal_ratio(np.zeros(4))


def test_measurement_noiseless(rng):
    phi = rng.standard_normal((6, 10))
    x = gen_signal(10, 2, seed=0)
    inst = make_instance(phi, x)
    assert np.linalg.norm(inst.y - phi @ x) == 0
    assert np.all(make_instance(phi, np.zeros(10)).y == 0)


def test_measurement_noise_energy():
    phi = gen_gaussian_matrix(256, 512, 0)
    x = gen_signal(512, 10, seed=0)
    energies = [np.sum((make_instance(phi, x, 0.01, seed=s).y - phi @ x) ** 2) for s in range(400)]
    # chi-square mean 256e-4, standard error of the mean about 1.1e-4
    assert abs(np.mean(energies) - 0.0256) < 6e-4


def test_instance_roundtrip():
    inst = generate_instance(12, 30, 4, SignalStructure("linear"), seed=9, noise_std=0.1)
    for entries in (False, True):
        d = json.loads(json.dumps(instance_to_dict(inst, include_entries=entries)))
        back = instance_from_dict(d)
        assert np.array_equal(back.phi, inst.phi)
        assert np.array_equal(back.x, inst.x)
        assert np.array_equal(back.y, inst.y)
