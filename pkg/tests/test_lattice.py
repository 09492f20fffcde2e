import json
import math

import numpy as np
import pytest

from mixattack.geometry import ThreatModel
from mixattack.lattice import (
    AdversarialLattice,
    ResourceLimitError,
    at_least_feasible,
    build_lattice,
    feasible_via_srh_pgd,
    indices_of,
    lattice_to_dict,
    mask_of,
    maximal_elements,
    optimal_attack_bruteforce,
)
from mixattack.linear import (
    LabeledPoint,
    LinearClassifier,
    Mixture,
    sample_random_mixture,
    trial_rng,
    zero_one_mixture,
)

TM = ThreatModel.l2(1.0)
ORIGIN = LabeledPoint(np.zeros(2), -1)


def fan(theta_deg: float, distance: float = 0.7) -> Mixture:
    """Two unit normals separated by theta, boundaries at `distance`."""
    half = math.radians(theta_deg) / 2.0
    return Mixture((
        LinearClassifier(np.array([math.cos(half), math.sin(half)]), -distance),
        LinearClassifier(np.array([math.cos(-half), math.sin(-half)]), -distance),
    ))


def wedge_corner_distance(theta_deg: float, distance: float) -> float:
    """Closed-form distance to the intersection of the two vulnerable
    half-planes of `fan`: the wedge corner sits on the bisector."""
    return distance / math.cos(math.radians(theta_deg) / 2.0)


class TestFeasibility:
    def test_pair_feasible_matches_closed_form(self):
        res = at_least_feasible(0b11, fan(60), ORIGIN, TM)
        assert res.feasible
        assert res.distance == pytest.approx(wedge_corner_distance(60, 0.7), abs=1e-8)
        assert not res.degenerate
        # witness misclassifies both members within tolerance
        for h in fan(60).classifiers:
            assert -1 * h.score(res.witness) <= 1e-9

    def test_pair_infeasible_beyond_budget(self):
        assert wedge_corner_distance(120, 0.7) == pytest.approx(1.4)
        res = at_least_feasible(0b11, fan(120), ORIGIN, TM)
        assert not res.feasible
        assert res.distance > TM.epsilon
        assert res.witness is None

    def test_singleton_margin(self):
        res = at_least_feasible(0b01, fan(60), ORIGIN, TM)
        assert res.feasible
        assert res.distance == pytest.approx(0.7)

    def test_empty_intersection_certified(self):
        """Opposite normals with positive margins: the joint system has no
        solution anywhere, which the dual certificate must catch."""
        mix = Mixture((LinearClassifier(np.array([1.0, 0.0]), -0.5),
                       LinearClassifier(np.array([-1.0, 0.0]), -0.5)))
        res = at_least_feasible(0b11, mix, ORIGIN, TM)
        assert not res.feasible
        assert res.distance > TM.epsilon

    def test_rejects_empty_subset(self):
        with pytest.raises(ValueError):
            at_least_feasible(0, fan(60), ORIGIN, TM)

    def test_linf_matches_l2_construction(self):
        """For the symmetric fan the l-infinity distance to the wedge equals
        the aggregated-constraint bound distance/cos(theta/2)."""
        tm = ThreatModel.linf(1.0)
        res = at_least_feasible(0b11, fan(60), ORIGIN, tm)
        assert res.feasible
        assert res.distance == pytest.approx(wedge_corner_distance(60, 0.7), abs=1e-8)

    def test_pgd_cross_check_agrees(self):
        rng = trial_rng(123)
        agree = 0
        for trial in range(40):
            mix = sample_random_mixture(3, 3, 0.3, 0.2, rng=trial_rng(123, trial))
            pt = LabeledPoint(np.zeros(3), -1)
            exact = at_least_feasible(0b111, mix, pt, TM)
            if exact.degenerate:
                continue
            by_pgd, _ = feasible_via_srh_pgd(0b111, mix, pt, TM)
            # PGD success certifies feasibility; on clear instances both agree
            if by_pgd:
                assert exact.feasible
            if abs(exact.distance - TM.epsilon) > 0.05:
                assert by_pgd == exact.feasible
                agree += 1
        assert agree >= 10


class TestLattice:
    def test_single_vulnerable_classifier(self):
        mix = Mixture((LinearClassifier(np.array([1.0, 0.0]), -0.7),))
        lat = build_lattice(mix, ORIGIN, TM)
        assert set(lat.nodes) == {0, 1}

    def test_both_vulnerable_but_not_jointly(self):
        mix = Mixture((LinearClassifier(np.array([1.0, 0.0]), -0.5),
                       LinearClassifier(np.array([-1.0, 0.0]), -0.5)))
        lat = build_lattice(mix, ORIGIN, TM)
        assert set(lat.nodes) == {0, 0b01, 0b10}
        assert maximal_elements(lat) == {0b01, 0b10}

    def test_jointly_vulnerable_pair(self):
        lat = build_lattice(fan(60), ORIGIN, TM)
        assert set(lat.nodes) == {0, 0b01, 0b10, 0b11}
        assert maximal_elements(lat) == {0b11}

    def test_downward_closure_random(self):
        for trial in range(30):
            rng = trial_rng(55, trial)
            m = int(rng.integers(2, 6))
            d = int(rng.integers(2, 6))
            mix = sample_random_mixture(d, m, 0.3, 0.25, rng=rng)
            lat = build_lattice(mix, LabeledPoint(np.zeros(d), -1), TM)
            for node in lat.nodes:
                for i in indices_of(node):
                    assert (node & ~(1 << i)) in lat.nodes

    def test_witnesses_are_valid(self):
        for trial in range(20):
            rng = trial_rng(77, trial)
            mix = sample_random_mixture(3, 4, 0.3, 0.25, rng=rng)
            pt = LabeledPoint(np.zeros(3), -1)
            lat = build_lattice(mix, pt, TM)
            for node, witness in lat.nodes.items():
                if node == 0:
                    continue
                assert np.linalg.norm(witness - pt.x) <= TM.epsilon + 1e-9
                for i in indices_of(node):
                    assert pt.y * mix.classifiers[i].score(witness) <= 1e-8

    def test_resource_limit(self):
        rng = trial_rng(1)
        mix = sample_random_mixture(3, 21, 0.3, 0.2, rng=rng)
        with pytest.raises(ResourceLimitError):
            build_lattice(mix, LabeledPoint(np.zeros(3), -1), TM)


class TestMaximalElements:
    def test_four_classifier_example(self):
        """Hand-built ten-node lattice with three maximal subsets."""
        nodes = [(), (0,), (1,), (2,), (3,), (0, 1), (0, 2), (0, 3), (2, 3),
                 (0, 1, 2)]
        lat = AdversarialLattice(4, {mask_of(s): np.zeros(2) for s in nodes})
        assert maximal_elements(lat) == {mask_of((0, 3)), mask_of((2, 3)),
                                         mask_of((0, 1, 2))}

    def test_chain(self):
        lat = AdversarialLattice(2, {0: np.zeros(2), 0b01: np.zeros(2),
                                     0b11: np.zeros(2)})
        assert maximal_elements(lat) == {0b11}

    def test_robust_point(self):
        lat = AdversarialLattice(2, {0: np.zeros(2)})
        assert maximal_elements(lat) == {0}


class TestFanFixture:
    def test_realizes_three_maximal_subsets(self, fixtures_dir):
        from mixattack.linear import mixture_from_dict

        with open(fixtures_dir / "lattice_fan4.json") as fh:
            mix = mixture_from_dict(json.load(fh))
        lat = build_lattice(mix, ORIGIN, TM)
        got = {indices_of(s) for s in maximal_elements(lat)}
        assert got == {(0, 3), (2, 3), (0, 1, 2)}
        assert not lat.any_degenerate


class TestBruteForce:
    def test_pair_infeasible_gives_half(self):
        _, err = optimal_attack_bruteforce(fan(120), ORIGIN, TM)
        assert err == 0.5

    def test_pair_feasible_gives_one(self):
        x_star, err = optimal_attack_bruteforce(fan(60), ORIGIN, TM)
        assert err == 1.0
        assert zero_one_mixture(fan(60), x_star, -1, tol=1e-9) == 1.0

    def test_robust_mixture_gives_zero(self):
        mix = fan(60, distance=2.0)
        x_star, err = optimal_attack_bruteforce(mix, ORIGIN, TM)
        assert err == 0.0
        np.testing.assert_array_equal(x_star, ORIGIN.x)

    def test_matches_max_node_mass(self):
        for trial in range(25):
            rng = trial_rng(99, trial)
            m = int(rng.integers(2, 5))
            mix = sample_random_mixture(2, m, 0.3, 0.25, rng=rng)
            pt = LabeledPoint(np.zeros(2), -1)
            lat = build_lattice(mix, pt, TM)
            best_mass = max(
                sum(mix.weights[i] for i in indices_of(node)) for node in lat.nodes
            )
            _, err = optimal_attack_bruteforce(mix, pt, TM)
            assert err == pytest.approx(best_mass, abs=1e-12)

    def test_resource_limit(self):
        mix = sample_random_mixture(3, 21, 0.3, 0.2, rng=trial_rng(2))
        with pytest.raises(ResourceLimitError):
            optimal_attack_bruteforce(mix, LabeledPoint(np.zeros(3), -1), TM)


def test_lattice_export_schema():
    lat = build_lattice(fan(60), ORIGIN, TM)
    data = lattice_to_dict(lat, fan(60))
    assert set(data) == {"nodes", "maximal"}
    assert {"subset", "witness", "mass"} <= set(data["nodes"][0])
    assert data["maximal"] == [[0, 1]]
    masses = {tuple(n["subset"]): n["mass"] for n in data["nodes"]}
    assert masses[(0, 1)] == pytest.approx(1.0)
