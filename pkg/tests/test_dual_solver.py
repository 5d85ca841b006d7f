# tests/test_dual_solver.py

import itertools
import math

import numpy as np
import pytest

from core.dual_solver import (
    CHI2,
    KL,
    build_sorted_table,
    check_adversarial_weights,
    dual_objective,
    frank_wolfe_gap,
    fw_reference_weights,
    get_divergence,
    most_adverse_weights,
    pav,
    penalized_euclidean_projection,
    primal_value,
    risk_value,
    update_entry,
)
from core.errors import (
    DataError,
    IndexOutOfRangeError,
    NumericalError,
    ParameterError,
    PreconditionError,
    SizeError,
)
from core.spectra import make_spectrum

FAMILIES = [("cvar", 0.5), ("cvar", 0.2), ("extremile", 2.0), ("esrm", 1.0), ("esrm", 3.0)]


def _random_instance(rng):
    n = int(rng.integers(1, 31))
    family, param = FAMILIES[int(rng.integers(len(FAMILIES)))]
    losses = rng.uniform(0.0, 1.0, size=n)
    nu = float(10 ** rng.uniform(-1.3, 1.0))
    return losses, make_spectrum(family, param, n), nu


# --- Sorted table ---


def test_build_sorted_table_is_a_stable_sort():
    table = build_sorted_table([3.0, 1.0, 2.0, 1.0])
    assert table.perm.tolist() == [1, 3, 2, 0]
    assert table.rank.tolist() == [3, 0, 2, 1]
    assert table.sorted_values().tolist() == [1.0, 1.0, 2.0, 3.0]


def test_build_sorted_table_rejects_bad_input():
    with pytest.raises(SizeError):
        build_sorted_table([])
    with pytest.raises(DataError):
        build_sorted_table([1.0, float("nan")])
    with pytest.raises(DataError):
        build_sorted_table([1.0, math.inf])


def test_update_entry_moves_single_entry():
    table = build_sorted_table([0.0, 1.0, 2.0, 3.0])
    swaps = update_entry(table, 0, 2.5)
    assert swaps == 2
    assert table.perm.tolist() == [1, 2, 0, 3]
    assert table.sorted_values().tolist() == [1.0, 2.0, 2.5, 3.0]


def test_update_entry_breaks_ties_by_index():
    table = build_sorted_table([0.0, 1.0, 1.0, 1.0])
    update_entry(table, 0, 1.0)
    assert table.perm.tolist() == [0, 1, 2, 3]
    update_entry(table, 3, 0.5)
    assert table.perm.tolist() == [3, 0, 1, 2]


def test_update_entry_out_of_range():
    table = build_sorted_table([0.0, 1.0])
    with pytest.raises(IndexOutOfRangeError):
        update_entry(table, 2, 0.0)
    with pytest.raises(IndexError):
        update_entry(table, -1, 0.0)


def test_bubble_updates_keep_table_sorted():
    rng = np.random.default_rng(0)
    n = 1000
    # small integer range so that ties are frequent
    table = build_sorted_table(rng.integers(0, 50, size=n).astype(float))
    for _ in range(10_000):
        j = int(rng.integers(n))
        old_rank = int(table.rank[j])
        value = float(rng.integers(0, 50)) if rng.random() < 0.5 else float(rng.normal(25.0, 10.0))
        swaps = update_entry(table, j, value)
        assert swaps == abs(int(table.rank[j]) - old_rank)
        assert np.array_equal(table.perm, np.argsort(table.values, kind="stable"))
    assert np.array_equal(table.rank[table.perm], np.arange(n))


# --- PAV ---


def test_pav_chi2_two_points():
    spectrum = make_spectrum("cvar", 0.5, 2)
    np.testing.assert_allclose(pav([0.0, 1.0], spectrum, 1.0, CHI2), [-1.5, -1.5])


def test_pav_chi2_equal_losses():
    spectrum = make_spectrum("erm", None, 3)
    np.testing.assert_allclose(pav([1.0, 1.0, 1.0], spectrum, 1.0, CHI2), [-1.0, -1.0, -1.0])


def test_pav_output_is_sorted():
    rng = np.random.default_rng(1)
    for _ in range(50):
        losses, spectrum, nu = _random_instance(rng)
        for divergence in (CHI2, KL):
            c = pav(np.sort(losses), spectrum, nu, divergence)
            assert np.all(np.diff(c) >= -1e-12 * max(1.0, np.max(np.abs(c[np.isfinite(c)]), initial=1.0)))


def test_pav_rejects_unsorted_input():
    spectrum = make_spectrum("cvar", 0.5, 3)
    with pytest.raises(PreconditionError):
        pav([1.0, 0.0, 2.0], spectrum, 1.0, CHI2)


def test_pav_rejects_bad_shift_cost_and_size():
    spectrum = make_spectrum("cvar", 0.5, 2)
    with pytest.raises(ParameterError):
        pav([0.0, 1.0], spectrum, 0.0, CHI2)
    with pytest.raises(SizeError):
        pav([0.0, 1.0, 2.0], spectrum, 1.0, CHI2)


# --- Most adverse weights ---


def test_chi2_weights_two_points():
    table = build_sorted_table([0.0, 1.0])
    weights = most_adverse_weights(table, make_spectrum("cvar", 0.5, 2), 1.0, CHI2)
    np.testing.assert_allclose(weights, [0.375, 0.625], atol=1e-15)


def test_chi2_weights_follow_the_input_order():
    table = build_sorted_table([1.0, 0.0])
    weights = most_adverse_weights(table, make_spectrum("cvar", 0.5, 2), 1.0, CHI2)
    np.testing.assert_allclose(weights, [0.625, 0.375], atol=1e-15)


def test_kl_weights_over_the_simplex_are_a_softmax():
    # σ = (0, 1) makes P(σ) the whole simplex
    table = build_sorted_table([0.0, 1.0])
    weights = most_adverse_weights(table, make_spectrum("cvar", 0.5, 2), 1.0, KL)
    np.testing.assert_allclose(weights, [1 / (1 + math.e), math.e / (1 + math.e)], atol=1e-12)


def test_kl_weights_are_positive():
    rng = np.random.default_rng(2)
    for _ in range(50):
        losses, spectrum, nu = _random_instance(rng)
        weights = most_adverse_weights(build_sorted_table(losses), spectrum, nu, KL)
        assert np.all(weights > 0)


def test_uniform_spectrum_returns_a_copy():
    spectrum = make_spectrum("erm", None, 4)
    weights = most_adverse_weights(build_sorted_table([4.0, 3.0, 2.0, 1.0]), spectrum, 1.0, CHI2)
    np.testing.assert_allclose(weights, 0.25)
    weights[0] = 1.0
    assert spectrum.weights[0] == 0.25


def test_size_mismatch():
    with pytest.raises(SizeError):
        most_adverse_weights(build_sorted_table([0.0, 1.0]), make_spectrum("cvar", 0.5, 3), 1.0, CHI2)


def test_weights_are_permutation_equivariant():
    rng = np.random.default_rng(3)
    losses = rng.normal(size=12)
    spectrum = make_spectrum("extremile", 2.0, 12)
    perm = rng.permutation(12)
    for divergence in (CHI2, KL):
        weights = most_adverse_weights(build_sorted_table(losses), spectrum, 0.5, divergence)
        permuted = most_adverse_weights(build_sorted_table(losses[perm]), spectrum, 0.5, divergence)
        np.testing.assert_allclose(permuted, weights[perm], atol=1e-14)


@pytest.mark.parametrize("divergence", [CHI2, KL], ids=["chi2", "kl"])
def test_weights_feasible_and_strongly_dual(divergence):
    rng = np.random.default_rng(4)
    for _ in range(200):
        losses, spectrum, nu = _random_instance(rng)
        table = build_sorted_table(losses)
        weights = most_adverse_weights(table, spectrum, nu, divergence)
        check_adversarial_weights(weights, spectrum)

        sorted_losses = table.sorted_values()
        c = pav(sorted_losses, spectrum, nu, divergence)
        primal = primal_value(weights, losses, nu, divergence)
        dual = dual_objective(sorted_losses, c, spectrum, nu, divergence)
        assert abs(primal - dual) <= 1e-8 * (1 + abs(dual))

        gap = frank_wolfe_gap(weights, losses, spectrum, nu, divergence)
        assert gap <= 1e-8 * (1 + abs(primal))


@pytest.mark.parametrize("divergence", [CHI2, KL], ids=["chi2", "kl"])
def test_weights_are_lipschitz_in_the_losses(divergence):
    rng = np.random.default_rng(5)
    for _ in range(100):
        losses, spectrum, nu = _random_instance(rng)
        n = losses.size
        perturbed = losses + rng.normal(scale=0.05, size=n)
        q = most_adverse_weights(build_sorted_table(losses), spectrum, nu, divergence)
        q_perturbed = most_adverse_weights(build_sorted_table(perturbed), spectrum, nu, divergence)
        bound = np.linalg.norm(perturbed - losses) / (n * nu * divergence.strong_convexity(n))
        assert np.linalg.norm(q_perturbed - q) <= bound * (1 + 1e-9) + 1e-12


def test_negative_weights_are_rejected():
    spectrum = make_spectrum("cvar", 0.5, 2)
    with pytest.raises(NumericalError):
        check_adversarial_weights(np.array([-0.1, 1.1]), spectrum)
    with pytest.raises(NumericalError):
        check_adversarial_weights(np.array([0.3, 0.3]), spectrum)
    with pytest.raises(NumericalError):
        # top entry above σₙ of a uniform spectrum
        check_adversarial_weights(np.array([0.2, 0.8]), make_spectrum("erm", None, 2))


# --- Risk value ---


def test_risk_value_two_points():
    table = build_sorted_table([0.0, 1.0])
    assert risk_value(table, make_spectrum("cvar", 0.5, 2), 1.0, CHI2) == pytest.approx(0.5625, abs=1e-15)


def test_risk_value_without_shift_cost_is_the_l_estimator():
    table = build_sorted_table([3.0, 1.0, 2.0])
    assert risk_value(table, make_spectrum("cvar", 0.5, 3), 0.0, CHI2) == pytest.approx(2.5)


def test_risk_value_limits_in_the_shift_cost():
    rng = np.random.default_rng(6)
    losses = rng.uniform(size=20)
    table = build_sorted_table(losses)
    spectrum = make_spectrum("cvar", 0.25, 20)
    l_estimator = risk_value(table, spectrum, 0.0, CHI2)
    assert risk_value(table, spectrum, 1e-8, CHI2) == pytest.approx(l_estimator, abs=1e-6)
    assert risk_value(table, spectrum, 1e6, CHI2) == pytest.approx(losses.mean(), abs=1e-4)

    previous = math.inf
    for nu in (1e-3, 1e-2, 1e-1, 1.0, 10.0):
        current = risk_value(table, spectrum, nu, CHI2)
        assert current <= previous + 1e-12
        assert current <= l_estimator + 1e-12
        previous = current


def test_risk_value_rejects_negative_shift_cost():
    with pytest.raises(ParameterError):
        risk_value(build_sorted_table([0.0, 1.0]), make_spectrum("cvar", 0.5, 2), -1.0, CHI2)


def test_get_divergence():
    assert get_divergence("chi2") is CHI2
    assert get_divergence("kl") is KL
    with pytest.raises(ParameterError):
        get_divergence("tv")


# --- Frank-Wolfe reference ---


def test_frank_wolfe_line_search_two_points():
    spectrum = make_spectrum("cvar", 0.5, 2)
    weights = fw_reference_weights([0.0, 1.0], spectrum, 1.0, CHI2, iters=20, step_rule="line_search")
    np.testing.assert_allclose(weights, [0.375, 0.625], atol=1e-12)


def test_frank_wolfe_open_loop_two_points():
    spectrum = make_spectrum("cvar", 0.5, 2)
    weights = fw_reference_weights([0.0, 1.0], spectrum, 1.0, CHI2, iters=5000)
    np.testing.assert_allclose(weights, [0.375, 0.625], atol=1e-4)


def test_frank_wolfe_rejects_bad_arguments():
    spectrum = make_spectrum("cvar", 0.5, 2)
    with pytest.raises(ParameterError):
        fw_reference_weights([0.0, 1.0], spectrum, 1.0, CHI2, iters=0)
    with pytest.raises(ParameterError):
        fw_reference_weights([0.0, 1.0], spectrum, 1.0, CHI2, iters=5, step_rule="armijo")


@pytest.mark.slow
def test_pav_agrees_with_frank_wolfe_over_the_grid():
    grid = list(
        itertools.product(range(2, 11), [("cvar", 0.5), ("extremile", 2.0), ("esrm", 1.0)], [1e-2, 1.0, 1e2], [CHI2, KL])
    )
    rng = np.random.default_rng(7)
    for k in range(200):
        n, (family, param), nu, divergence = grid[k % len(grid)]
        spectrum = make_spectrum(family, param, n)
        losses = rng.uniform(0.0, 1.0, size=n)

        exact = most_adverse_weights(build_sorted_table(losses), spectrum, nu, divergence)
        check_adversarial_weights(exact, spectrum)
        exact_value = primal_value(exact, losses, nu, divergence)
        scale = 1 + abs(exact_value)
        ordered = np.sort(losses)
        c = pav(ordered, spectrum, nu, divergence)
        assert abs(exact_value - dual_objective(ordered, c, spectrum, nu, divergence)) <= 1e-8 * scale

        fw = fw_reference_weights(losses, spectrum, nu, divergence, iters=5000)
        fw_value = primal_value(fw, losses, nu, divergence)
        assert exact_value >= fw_value - 1e-6 * scale
        assert exact_value <= fw_value + frank_wolfe_gap(fw, losses, spectrum, nu, divergence) + 1e-9 * scale
        assert frank_wolfe_gap(exact, losses, spectrum, nu, divergence) <= 1e-8 * scale


@pytest.mark.parametrize("divergence", [CHI2, KL], ids=["chi2", "kl"])
def test_frank_wolfe_line_search_is_certified_by_pav(divergence):
    rng = np.random.default_rng(8)
    losses = rng.uniform(size=6)
    spectrum = make_spectrum("extremile", 2.0, 6)
    fw = fw_reference_weights(losses, spectrum, 0.5, divergence, iters=300, step_rule="line_search")
    check_adversarial_weights(fw, spectrum)
    fw_value = primal_value(fw, losses, 0.5, divergence)
    exact_value = primal_value(
        most_adverse_weights(build_sorted_table(losses), spectrum, 0.5, divergence), losses, 0.5, divergence
    )
    assert fw_value <= exact_value + 1e-12
    assert exact_value <= fw_value + frank_wolfe_gap(fw, losses, spectrum, 0.5, divergence) + 1e-12


# --- Penalized projection ---


def test_projection_two_points():
    spectrum = make_spectrum("cvar", 0.5, 2)
    np.testing.assert_array_equal(penalized_euclidean_projection([0.0, 2.0], spectrum, 1.0), [0.0, 1.0])


def test_projection_first_order_optimality():
    rng = np.random.default_rng(9)
    n = 4
    spectrum = make_spectrum("extremile", 2.0, n)
    vertices = [spectrum.weights[list(p)] for p in itertools.permutations(range(n))]
    for _ in range(50):
        z = rng.normal(scale=0.5, size=n)
        strength = float(10 ** rng.uniform(-2, 2))
        q = penalized_euclidean_projection(z, spectrum, strength)
        check_adversarial_weights(q, spectrum)
        grad = strength * (q - 1.0 / n) + (q - z)
        for vertex in vertices:
            assert np.dot(grad, vertex - q) >= -1e-10


def test_projection_rejects_nonpositive_strength():
    with pytest.raises(ParameterError):
        penalized_euclidean_projection([0.0, 1.0], make_spectrum("cvar", 0.5, 2), 0.0)
