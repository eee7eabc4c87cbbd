"""
Correspondence between source and target complexity levels.

Levels are 1-based and kappa-ordered (1 = simplest). With at most four levels
per scan there are at most 24 injective maps, so the assignment is solved by
exhaustive enumeration, which is exact.
"""

import itertools
import logging
from dataclasses import dataclass
from typing import Dict, List, Tuple

import numpy as np

from .errors import InvalidParameterError
from .vmf import ComplexityProfile

TIE_TOLERANCE = 1e-12


@dataclass(frozen=True)
class GroupAssignment:
    sigma: Dict[int, int]
    cost: float
    unmatched_source: Tuple[int, ...] = ()
    unmatched_target: Tuple[int, ...] = ()

    def matched_levels(self) -> List[Tuple[int, int]]:
        """(source level, target level) pairs in source-level (kappa-descending) order"""
        return sorted(self.sigma.items())


def _inversions(pairs: Tuple[Tuple[int, int], ...]) -> int:
    ordered = sorted(pairs)
    targets = [t for _, t in ordered]
    return sum(1 for i in range(len(targets)) for j in range(i + 1, len(targets))
               if targets[i] > targets[j])


def _candidate_maps(k_source: int, k_target: int):
    """Every injective map between min(K_s, K_t) source and target levels"""
    if k_source <= k_target:
        for targets in itertools.permutations(range(1, k_target + 1), k_source):
            yield tuple(zip(range(1, k_source + 1), targets))
    else:
        for sources in itertools.permutations(range(1, k_source + 1), k_target):
            yield tuple(sorted(zip(sources, range(1, k_target + 1))))


def pair_costs(sc_source: np.ndarray, sc_target: np.ndarray) -> np.ndarray:
    """|SC_s(k) - SC_t(k')| for every level pair"""
    return np.abs(np.asarray(sc_source, dtype=np.float64)[:, None]
                  - np.asarray(sc_target, dtype=np.float64)[None, :])


def match_groups(sc_source: ComplexityProfile, sc_target: ComplexityProfile) -> GroupAssignment:
    """
    Minimum summed |SC| distance over injective level maps. Ties (within
    1e-12) prefer the map with fewest kappa-rank inversions, then the
    lexicographically smallest.
    """
    k_source, k_target = sc_source.k, sc_target.k
    if k_source < 1 or k_target < 1:
        raise InvalidParameterError("both profiles need at least one level")
    costs = pair_costs(sc_source.sc, sc_target.sc)

    best_key = None
    best_pairs = None
    best_cost = np.inf
    for pairs in _candidate_maps(k_source, k_target):
        cost = float(sum(costs[s - 1, t - 1] for s, t in pairs))
        if best_pairs is None or cost < best_cost - TIE_TOLERANCE:
            best_cost, best_pairs, best_key = cost, pairs, (_inversions(pairs), pairs)
        elif abs(cost - best_cost) <= TIE_TOLERANCE:
            key = (_inversions(pairs), pairs)
            if key < best_key:
                best_cost, best_pairs, best_key = min(cost, best_cost), pairs, key

    sigma = dict(best_pairs)
    unmatched_source = tuple(s for s in range(1, k_source + 1) if s not in sigma)
    unmatched_target = tuple(t for t in range(1, k_target + 1) if t not in sigma.values())
    logging.info(f"match_groups: sigma={sigma}, cost={best_cost:.6f}, "
                 f"unmatched source={list(unmatched_source)} target={list(unmatched_target)}")
    return GroupAssignment(sigma, best_cost, unmatched_source, unmatched_target)
