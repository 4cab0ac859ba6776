"""
Invariant suite: symmetry checks, operator identities, the zero lemma and
gradient checks, including the negative controls.
"""
import pytest

from nn import Architecture
from verify import (
    check_boundary_identities,
    check_gradients,
    check_joint_equivariance,
    check_joint_invariance,
    check_laplacian_oracles,
    check_permutation_equivariance,
    check_zero_lemma,
    default_check_config,
    run_all,
    suite_passed,
)


class TestSymmetryChecks:
    def test_eign_equivariance(self):
        report = check_joint_equivariance(default_check_config(), trials=5, seed=1)
        assert report.passed
        assert report.instances == 5
        assert report.max_deviation <= report.tolerance

    def test_eign_invariance(self):
        assert check_joint_invariance(default_check_config(), trials=5, seed=1).passed

    def test_identity_flip_is_exact(self):
        report = check_joint_equivariance(default_check_config(), trials=3, identity_flip=True)
        assert report.max_deviation == 0.0

    def test_permutation(self):
        report = check_permutation_equivariance(default_check_config(), trials=5, seed=2)
        assert report.passed
        assert report.details["flip_permutation_commute"]

    @pytest.mark.parametrize("arch", [Architecture.EIGN_GCN, Architecture.EIGN_CHEB, Architecture.DIR_GNN])
    def test_variants_equivariant(self, arch):
        assert check_joint_equivariance(default_check_config(arch), trials=3).passed

    def test_relu_hodge_breaks_equivariance(self):
        report = check_joint_equivariance(default_check_config(Architecture.HODGE_DIR), trials=5)
        assert not report.passed
        assert report.counterexample is not None

    def test_hodge_inv_breaks_invariance(self):
        report = check_joint_invariance(default_check_config(Architecture.HODGE_INV), trials=5)
        assert not report.passed


class TestOperatorChecks:
    def test_boundary_identities(self):
        report = check_boundary_identities(trials=10, seed=0)
        assert report.passed
        assert report.details["q0_insensitive"]
        assert report.details["q_positive_sensitive"]

    def test_laplacian_oracles(self):
        report = check_laplacian_oracles(trials=10, seed=0, max_edges=40)
        assert report.passed
        assert report.details["min_eigenvalue"] >= -1e-10


class TestZeroLemma:
    def test_zero_pattern(self):
        report = check_zero_lemma(trials=5)
        assert report.passed
        assert report.details["control_breaks_zero_pattern"]
        assert report.tolerance == 0.0

    def test_undirected_only(self):
        assert check_zero_lemma(trials=3, undirected_only=True).passed


class TestGradients:
    def test_default_config(self):
        report = check_gradients(seed=0)
        assert report.passed
        assert report.max_deviation <= report.tolerance


class TestSuite:
    def test_run_all_passes(self):
        reports = run_all(seed=0, trials=4)
        assert suite_passed(reports)
        expected = [r for r in reports if r.details.get("expected_failure")]
        assert len(expected) == 2

    def test_failure_is_detected(self):
        reports = run_all(seed=0, trials=2)
        reports[0].passed = False
        assert not suite_passed(reports)
