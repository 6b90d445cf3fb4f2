"""
One-sided Mann-Whitney U test for comparing repeated runs.

Small groups use the exact null distribution obtained by enumerating every
way to split the pooled (mid)ranks; larger ones fall back to the
tie-corrected normal approximation.
"""

import itertools
import logging
import math
from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np
from scipy import stats

from engine.errors import ParameterError

logger = logging.getLogger(__name__)

EXACT_LIMIT = 10
ALPHA = 0.05
_TOLERANCE = 1e-9


@dataclass(frozen=True)
class MannWhitneyResult:
    """U statistic of group_a and P(U >= u) under the null"""
    u: float
    p_value: float
    method: str
    n_a: int
    n_b: int

    def significant(self, alpha: float = ALPHA) -> bool:
        return self.p_value < alpha or math.isclose(self.p_value, alpha, rel_tol=0.0, abs_tol=_TOLERANCE)


def _exact_p(ranks: np.ndarray, n_a: int, u_observed: float) -> float:
    total = len(ranks)
    offset = n_a * (n_a + 1) / 2.0
    splits = np.array(list(itertools.combinations(range(total), n_a)), dtype=np.int64)
    u_values = ranks[splits].sum(axis=1) - offset
    return float(np.count_nonzero(u_values >= u_observed - _TOLERANCE)) / len(u_values)


def _normal_p(ranks: np.ndarray, n_a: int, n_b: int, u_observed: float) -> float:
    total = n_a + n_b
    _, counts = np.unique(ranks, return_counts=True)
    tie_term = float(((counts ** 3) - counts).sum()) / (total * (total - 1))
    variance = n_a * n_b / 12.0 * ((total + 1) - tie_term)
    if variance <= 0:
        return 1.0
    z = (u_observed - n_a * n_b / 2.0 - 0.5) / math.sqrt(variance)
    return float(stats.norm.sf(z))


def mann_whitney_one_sided(group_a: Sequence[float], group_b: Sequence[float],
                           exact_limit: int = EXACT_LIMIT) -> MannWhitneyResult:
    """Test whether group_a is stochastically greater than group_b"""
    a = np.asarray(list(group_a), dtype=np.float64)
    b = np.asarray(list(group_b), dtype=np.float64)
    if a.size < 1 or b.size < 1:
        raise ParameterError("Both groups need at least one value")
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise ParameterError("Group values must be finite")

    ranks = stats.rankdata(np.concatenate([a, b]), method='average')
    u_observed = float(ranks[:a.size].sum() - a.size * (a.size + 1) / 2.0)

    if a.size <= exact_limit and b.size <= exact_limit:
        p_value, method = _exact_p(ranks, a.size, u_observed), "exact"
    else:
        p_value, method = _normal_p(ranks, a.size, b.size, u_observed), "normal"
    p_value = min(1.0, max(0.0, p_value))
    logger.debug(f"Mann-Whitney U={u_observed} p={p_value:.5f} ({method}, n={a.size}/{b.size})")
    return MannWhitneyResult(u_observed, p_value, method, int(a.size), int(b.size))


def mean_std(values: Sequence[float]) -> Tuple[float, float]:
    """Mean and sample standard deviation (0 for a single value)"""
    array = np.asarray(list(values), dtype=np.float64)
    if array.size == 0:
        raise ParameterError("mean_std needs at least one value")
    std = float(array.std(ddof=1)) if array.size > 1 else 0.0
    return float(array.mean()), std
