"""Error-exponent evaluators for joint source-channel coding.

Every exponent is a constrained minimization over probability distributions.
Each evaluator comes in two interchangeable flavors selected by `SolverSpec`:

* ``DISCRETE_EXHAUSTIVE`` enumerates all joint types of a grid denominator L
  with the marginal constraints quantized to the nearest denominator-L type.
  It is an exhaustive oracle: slow, simple, and trustworthy at desk scale.
* ``CONTINUOUS`` runs multi-restart projected first-order descent on the
  simplex of joint distributions, with inequality constraints handled by an
  exact penalty.

Infeasible problems report ``math.inf`` explicitly; +inf is never encoded as
a large float.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from typing import TYPE_CHECKING, Callable, Optional

import numpy as np

from . import types_core as tc
from ._simplex import PinnedProjector, penalized_descent

if TYPE_CHECKING:  # pragma: no cover
    from .rgv_codebook import CodeConfig

__all__ = [
    "Channel",
    "SourceSpec",
    "MetricKind",
    "MetricSpec",
    "DistanceKind",
    "DistanceSpec",
    "SolverKind",
    "SolverSpec",
    "ExponentResult",
    "SolverError",
    "pos_part",
    "bhattacharyya_distance",
    "bhattacharyya_matrix",
    "source_reliability",
    "random_coding_exponent",
    "expurgated_exponent",
    "rgv_exponent_pair",
    "jscc_random_coding_bound",
    "jscc_expurgated_bound",
    "rgv_overall_exponent",
    "JsccBoundEntry",
    "JsccBoundTable",
    "RgvExponentTable",
]

INF = math.inf
CMP_TOL = 1e-12  # float slack for the non-strict comparisons on exact types
_LOG_FLOOR = 1e-300
_TRIPLE_ENUM_CAP = 60_000_000


class SolverError(RuntimeError):
    """Raised when a solver cannot handle the requested problem shape."""


@dataclass(frozen=True, eq=False)
class Channel:
    """Row-stochastic conditional probability matrix W(y|x) of a DMC."""

    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=np.float64)
        if m.ndim != 2:
            raise ValueError("channel matrix must be two-dimensional")
        if not np.all(np.isfinite(m)) or np.any(m < -tc.PMF_ATOL):
            raise ValueError("channel entries must be finite and nonnegative")
        if np.any(np.abs(m.sum(axis=1) - 1.0) > tc.PMF_ATOL):
            raise ValueError("channel rows must each sum to 1")
        object.__setattr__(self, "matrix", np.clip(m, 0.0, None))

    @property
    def input_size(self) -> int:
        return self.matrix.shape[0]

    @property
    def output_size(self) -> int:
        return self.matrix.shape[1]

    @cached_property
    def log_matrix(self) -> np.ndarray:
        """ln W with -inf at zero entries."""
        with np.errstate(divide="ignore"):
            return np.log(self.matrix)

    def has_zeros(self) -> bool:
        return bool(np.any(self.matrix == 0.0))


def bsc(p: float) -> Channel:
    """Binary symmetric channel with crossover probability p."""
    return Channel(np.array([[1.0 - p, p], [p, 1.0 - p]]))


@dataclass(frozen=True, eq=False)
class SourceSpec:
    """Memoryless source law over a finite alphabet."""

    p_v: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "p_v", tc.as_pmf(self.p_v))

    @property
    def alphabet_size(self) -> int:
        return len(self.p_v)

    def entropy(self) -> float:
        return tc.entropy(self.p_v)


class MetricKind(str, Enum):
    MMI = "MMI"
    CSISZAR = "CSISZAR"
    CUSTOM = "CUSTOM"


@dataclass(frozen=True)
class MetricSpec:
    """Type-dependent decoding metric q(i, P_xy).

    MMI scores a candidate by the induced mutual information minus the class
    rate; CSISZAR scores by the expected channel log-likelihood minus twice
    the class rate.  CUSTOM supplies any function of (class index, joint pmf).
    """

    kind: MetricKind = MetricKind.MMI
    custom: Optional[Callable[[int, np.ndarray], float]] = None

    @staticmethod
    def mmi() -> "MetricSpec":
        return MetricSpec(MetricKind.MMI)

    @staticmethod
    def csiszar() -> "MetricSpec":
        return MetricSpec(MetricKind.CSISZAR)

    def score(self, i: int, joint_xy: np.ndarray, *, rate: float, channel: Channel) -> float:
        if self.kind == MetricKind.MMI:
            return tc.mutual_information(joint_xy) - rate
        if self.kind == MetricKind.CSISZAR:
            logw = channel.log_matrix
            mask = joint_xy > 0.0
            if np.any(np.isneginf(logw[mask])):
                return -INF
            return float(np.dot(joint_xy[mask], logw[mask])) - 2.0 * rate
        return float(self.custom(i, joint_xy))

    def score_counts(self, i: int, counts: np.ndarray, denominator: int,
                     *, rate: float, channel: Channel) -> float:
        return self.score(i, np.asarray(counts, dtype=np.float64) / denominator,
                          rate=rate, channel=channel)


class DistanceKind(str, Enum):
    NEG_MI = "NEG_MI"
    CUSTOM = "CUSTOM"


@dataclass(frozen=True)
class DistanceSpec:
    """Symmetric, type-dependent distance between channel-input sequences."""

    kind: DistanceKind = DistanceKind.NEG_MI
    custom: Optional[Callable[[np.ndarray], float]] = None

    @staticmethod
    def neg_mi() -> "DistanceSpec":
        return DistanceSpec(DistanceKind.NEG_MI)

    def value(self, joint_xx: np.ndarray) -> float:
        if self.kind == DistanceKind.NEG_MI:
            return -tc.mutual_information(joint_xx)
        return float(self.custom(np.asarray(joint_xx, dtype=np.float64)))

    def value_counts(self, counts: np.ndarray, denominator: int) -> float:
        return self.value(np.asarray(counts, dtype=np.float64) / denominator)


class SolverKind(str, Enum):
    DISCRETE_EXHAUSTIVE = "DISCRETE_EXHAUSTIVE"
    CONTINUOUS = "CONTINUOUS"


@dataclass(frozen=True)
class SolverSpec:
    """Which solver to run and its knobs.

    `grid_denominator` of None picks 64 for binary and 24 for larger
    alphabets.  `seed` drives the continuous solver's random restarts so that
    repeated runs are bit-reproducible.
    """

    kind: SolverKind = SolverKind.DISCRETE_EXHAUSTIVE
    grid_denominator: Optional[int] = None
    restarts: int = 6
    max_iterations: int = 2500
    tolerance: float = 1e-9
    seed: int = 0

    def __post_init__(self):
        if self.grid_denominator is not None and self.grid_denominator < 1:
            raise ValueError("grid_denominator must be >= 1")
        if self.tolerance <= 0:
            raise ValueError("tolerance must be positive")

    @staticmethod
    def discrete(grid: Optional[int] = None) -> "SolverSpec":
        return SolverSpec(SolverKind.DISCRETE_EXHAUSTIVE, grid_denominator=grid)

    @staticmethod
    def continuous(restarts: int = 6, max_iterations: int = 2500,
                   tolerance: float = 1e-9, seed: int = 0) -> "SolverSpec":
        return SolverSpec(SolverKind.CONTINUOUS, restarts=restarts,
                          max_iterations=max_iterations, tolerance=tolerance,
                          seed=seed)

    def grid_for(self, alphabet_size: int) -> int:
        if self.grid_denominator is not None:
            return self.grid_denominator
        return 64 if alphabet_size <= 2 else 24


@dataclass(eq=False)
class ExponentResult:
    """Value of a constrained minimization plus the minimizer and solver info."""

    value: float
    argmin: Optional[np.ndarray] = None
    meta: dict = field(default_factory=dict)

    def is_infinite(self) -> bool:
        return math.isinf(self.value)


def pos_part(x: float) -> float:
    """max(x, 0)."""
    return x if x > 0.0 else 0.0


def bhattacharyya_distance(channel: Channel, x: int, x_bar: int) -> float:
    """-ln sum_y sqrt(W(y|x) W(y|x_bar)); +inf for rows with disjoint support."""
    w = channel.matrix
    s = float(np.sqrt(w[x] * w[x_bar]).sum())
    if s <= 0.0:
        return INF
    return -math.log(s)


def bhattacharyya_matrix(channel: Channel) -> np.ndarray:
    """All pairwise Bhattacharyya distances between channel input symbols."""
    w = channel.matrix
    s = np.einsum("xy,zy->xz", np.sqrt(w), np.sqrt(w))
    with np.errstate(divide="ignore"):
        return -np.log(s)


# ---------------------------------------------------------------------------
# grid (discrete exhaustive) machinery
# ---------------------------------------------------------------------------


def _quantize(pmf: np.ndarray, grid: int):
    t = tc.quantize_to_type(pmf, grid)
    err = 0.5 * float(np.abs(t.pmf() - np.asarray(pmf, dtype=np.float64)).sum())
    return t, err


def _entropy_rows(counts: np.ndarray, denom: float) -> np.ndarray:
    flat = counts.reshape(counts.shape[0], -1).astype(np.float64) / denom
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(flat > 0.0, flat * np.log(flat), 0.0)
    return -terms.sum(axis=1)


def _expectation_rows(counts: np.ndarray, denom: float, table: np.ndarray) -> np.ndarray:
    """sum p * table per row with 0 * (-inf) treated as 0; may return -inf."""
    flat = counts.reshape(counts.shape[0], -1).astype(np.float64) / denom
    tab = np.broadcast_to(table, counts.shape[1:]).reshape(-1)
    with np.errstate(invalid="ignore"):
        terms = np.where(flat > 0.0, flat * tab, 0.0)
    return terms.sum(axis=1)


def _scalar_ref(q_pinned: np.ndarray, q_orig: np.ndarray) -> float:
    """sum_x q_pinned(x) ln q_orig(x); -inf when pinned mass hits a zero."""
    mask = q_pinned > 0.0
    if np.any(q_orig[mask] <= 0.0):
        return -INF
    return float(np.dot(q_pinned[mask], np.log(q_orig[mask])))


def _discrete_source_reliability(R: float, p_v: np.ndarray, grid: int) -> ExponentResult:
    s = len(p_v)
    comps = tc.composition_table(grid, s)
    H = _entropy_rows(comps, grid)
    meta = {"solver": "discrete", "grid": grid}
    feasible = H >= R - CMP_TOL
    if not feasible.any():
        if R <= math.log(s) + CMP_TOL:
            feasible = H >= H.max() - CMP_TOL
            meta["feasibility_repair"] = True
        else:
            return ExponentResult(INF, None, meta)
    with np.errstate(divide="ignore", invalid="ignore"):
        pv = np.asarray(p_v, dtype=np.float64)
        frac = comps.astype(np.float64) / grid
        terms = np.where(frac > 0.0, frac * (np.log(np.maximum(frac, _LOG_FLOOR)) -
                                             np.log(np.maximum(pv, _LOG_FLOOR))[None, :]), 0.0)
        D = terms.sum(axis=1)
        D[np.any((frac > 0.0) & (pv[None, :] == 0.0), axis=1)] = INF
    vals = np.where(feasible, D, INF)
    best = int(np.argmin(vals))
    if not math.isfinite(vals[best]):
        return ExponentResult(INF, None, meta)
    return ExponentResult(float(vals[best]), comps[best].astype(np.float64) / grid, meta)


def _discrete_random_coding(Q: np.ndarray, channel: Channel, R: float, grid: int) -> ExponentResult:
    qt, qerr = _quantize(Q, grid)
    tables = tc.tables_with_row_sums(qt.counts, channel.output_size)
    hq = qt.entropy()
    h_xy = _entropy_rows(tables, grid)
    h_y = _entropy_rows(tables.sum(axis=1), grid)
    e_lnw = _expectation_rows(tables, grid, channel.log_matrix)
    s_ref = _scalar_ref(qt.pmf(), np.asarray(Q, dtype=np.float64))
    d_rows = -h_xy - e_lnw - s_ref
    i_rows = hq + h_y - h_xy
    obj = d_rows + np.maximum(i_rows - R, 0.0)
    best = int(np.argmin(obj))
    meta = {"solver": "discrete", "grid": grid, "quantization_tv": qerr}
    if not math.isfinite(obj[best]):
        return ExponentResult(INF, None, meta)
    return ExponentResult(float(obj[best]), tables[best].astype(np.float64) / grid, meta)


def _discrete_expurgated(Q: np.ndarray, palette: list, channel: Channel,
                         R: float, grid: int) -> ExponentResult:
    if R < -CMP_TOL:
        return ExponentResult(INF, None, {"solver": "discrete", "grid": grid,
                                          "reason": "negative rate"})
    dw = bhattacharyya_matrix(channel)
    qt, qerr = _quantize(Q, grid)
    hq = qt.entropy()
    best_val, best_arg, best_meta = INF, None, {}
    repaired = False
    for c, q_bar in enumerate(palette):
        qb, qberr = _quantize(np.asarray(q_bar, dtype=np.float64), grid)
        tables = tc.tables_with_margins(qt.counts, qb.counts)
        if tables.shape[0] == 0:
            continue
        i_rows = hq + qb.entropy() - _entropy_rows(tables, grid)
        feasible = i_rows <= R + CMP_TOL
        if not feasible.any():
            # the continuum set {I <= R} contains the product coupling for
            # R >= 0; the best grid rendering of it is the min-MI table
            feasible = i_rows <= i_rows.min() + 1e-9
            repaired = True
        e_rows = _expectation_rows(tables, grid, dw)
        obj = np.where(feasible, e_rows + i_rows - R, INF)
        idx = int(np.argmin(obj))
        if obj[idx] < best_val:
            best_val = float(obj[idx])
            best_arg = tables[idx].astype(np.float64) / grid
            best_meta = {"palette_index": c, "quantization_tv": max(qerr, qberr)}
    meta = {"solver": "discrete", "grid": grid, "feasibility_repair": repaired}
    meta.update(best_meta)
    if not math.isfinite(best_val):
        return ExponentResult(INF, None, meta)
    return ExponentResult(best_val, best_arg, meta)


def _triple_enum_estimate(xc, xbc, y_size: int) -> int:
    pair_tables = tc.tables_with_margins(xc, xbc)
    total = 0
    for t in pair_tables.reshape(pair_tables.shape[0], -1):
        prod = 1
        for m in t:
            prod *= math.comb(int(m) + y_size - 1, y_size - 1)
        total += prod
    return total


def _iter_triple_chunks(xc, xbc, y_size: int):
    """Yield (N, sx, sxb, sy) count arrays covering all joint types with the
    (x, x_bar) margins pinned; one chunk per (x, x_bar) pair table."""
    pair_tables = tc.tables_with_margins(xc, xbc)
    sx, sxb = len(xc), len(xbc)
    for t in pair_tables:
        flat = t.reshape(-1)
        parts = [tc.composition_table(int(m), y_size) for m in flat]
        chunk = tc.cartesian_stack(parts)
        yield chunk.reshape(-1, sx, sxb, y_size)


class _RgvPairSpec:
    """Per-(i, j) constants needed by the streaming discrete evaluator."""

    def __init__(self, i, j, rate_i, rate_j, thr_max):
        self.i = i
        self.j = j
        self.rate_i = rate_i
        self.rate_j = rate_j
        self.thr_max = thr_max
        self.best = INF
        self.best_counts = None
        self.any_distance_feasible = False


def _discrete_rgv_minterms(cfg: "CodeConfig", channel: Channel, grid: int, pairs):
    """Minimization terms of the pairwise construction exponent, computed by
    exhaustive grid enumeration.  `pairs` is a list of (i, j) source-type
    index pairs; pairs sharing the same palette assignment share one
    enumeration pass."""
    rates = cfg.rates
    thresholds = cfg.resolved_thresholds
    metric = cfg.metric
    distance = cfg.distance
    sy = channel.output_size
    logw = channel.log_matrix

    groups: dict = {}
    for (i, j) in pairs:
        groups.setdefault((cfg.mu[i], cfg.mu[j]), []).append(
            _RgvPairSpec(i, j, rates[i], rates[j],
                         max(thresholds[i], thresholds[j]))
        )

    results = {}
    for (a, b), specs in groups.items():
        q_orig_a = cfg.palette[a].pmf()
        q_orig_b = cfg.palette[b].pmf()
        qa, erra = _quantize(q_orig_a, grid)
        qb, errb = _quantize(q_orig_b, grid)
        est = _triple_enum_estimate(qa.counts, qb.counts, sy)
        if est > _TRIPLE_ENUM_CAP:
            raise SolverError(
                f"triple joint-type enumeration would need {est} tables at "
                f"grid {grid}; reduce the grid denominator or use the "
                f"continuous solver"
            )
        h_qa, h_qb = qa.entropy(), qb.entropy()
        s_ref = _scalar_ref(qa.pmf(), q_orig_a)
        use_mmi = metric.kind == MetricKind.MMI
        use_csi = metric.kind == MetricKind.CSISZAR
        use_negmi = distance.kind == DistanceKind.NEG_MI
        min_i_xxb = INF

        def stream(pass_specs, repair_thresholds):
            nonlocal min_i_xxb
            for chunk in _iter_triple_chunks(qa.counts, qb.counts, sy):
                xy = chunk.sum(axis=2)
                xby = chunk.sum(axis=1)
                xxb = chunk.sum(axis=3)
                h_full = _entropy_rows(chunk, grid)
                h_xy = _entropy_rows(xy, grid)
                h_xby = _entropy_rows(xby, grid)
                h_xxb = _entropy_rows(xxb, grid)
                i_xxb = h_qa + h_qb - h_xxb
                min_i_xxb = min(min_i_xxb, float(i_xxb.min()))
                i_xb_xy = h_qb + h_xy - h_full
                e_lnw_xy = _expectation_rows(xy, grid, logw)
                d_rows = -h_xy - e_lnw_xy - s_ref
                if use_mmi:
                    h_y = _entropy_rows(xy.sum(axis=1), grid)
                    i_xy = h_qa + h_y - h_xy
                    i_xby = h_qb + h_y - h_xby
                elif use_csi:
                    e_lnw_xby = _expectation_rows(xby, grid, logw)
                if use_negmi:
                    dist_vals = -i_xxb
                else:
                    dist_vals = np.array([
                        distance.value_counts(row, grid) for row in xxb
                    ])
                for spec in pass_specs:
                    thr = repair_thresholds.get((spec.i, spec.j), spec.thr_max)
                    feas = dist_vals >= thr - CMP_TOL
                    if feas.any():
                        spec.any_distance_feasible = True
                    if use_mmi:
                        feas &= (i_xy - spec.rate_i) <= (i_xby - spec.rate_j) + CMP_TOL
                    elif use_csi:
                        with np.errstate(invalid="ignore"):
                            feas &= (e_lnw_xy - 2.0 * spec.rate_i) <= \
                                    (e_lnw_xby - 2.0 * spec.rate_j) + CMP_TOL
                    else:
                        scores_i = np.array([
                            metric.score(spec.i, row / grid, rate=spec.rate_i,
                                         channel=channel) for row in xy
                        ])
                        scores_j = np.array([
                            metric.score(spec.j, row / grid, rate=spec.rate_j,
                                         channel=channel) for row in xby
                        ])
                        feas &= scores_i <= scores_j + CMP_TOL
                    if not feas.any():
                        continue
                    obj = np.where(feas, d_rows + np.maximum(i_xb_xy - spec.rate_j, 0.0), INF)
                    idx = int(np.argmin(obj))
                    if obj[idx] < spec.best:
                        spec.best = float(obj[idx])
                        spec.best_counts = chunk[idx].copy()

        stream(specs, {})
        # distance-infeasible pairs whose continuum set is nonempty get the
        # closest grid rendering: tables of minimal pair mutual information
        retry = {}
        for spec in specs:
            if (not spec.any_distance_feasible and use_negmi
                    and spec.thr_max <= CMP_TOL and math.isfinite(min_i_xxb)):
                retry[(spec.i, spec.j)] = -min_i_xxb - 1e-9
        if retry:
            retry_specs = [s for s in specs if (s.i, s.j) in retry]
            stream(retry_specs, retry)
        for spec in specs:
            meta = {
                "solver": "discrete",
                "grid": grid,
                "quantization_tv": max(erra, errb),
                "feasibility_repair": (spec.i, spec.j) in retry,
            }
            arg = None if spec.best_counts is None else spec.best_counts.astype(np.float64) / grid
            results[(spec.i, spec.j)] = ExponentResult(
                spec.best if spec.best_counts is not None else INF, arg, meta
            )
    return results


# ---------------------------------------------------------------------------
# continuous solver machinery
# ---------------------------------------------------------------------------


def _safe_log(x: np.ndarray) -> np.ndarray:
    return np.log(np.maximum(x, _LOG_FLOOR))


def _solve_continuous(shape, pinned, forbidden, objective, inequalities,
                      spec: SolverSpec, inits, anchor=None):
    """Multi-restart penalized projected descent.

    `objective` and each inequality map P -> (value, grad); constraints are
    g(P) <= 0.  `anchor`, when given, must be strictly feasible and is used
    to polish mildly infeasible solutions by mixing toward it.  Returns an
    ExponentResult with value inf when no restart lands in the feasible set.
    """
    projector = PinnedProjector(shape, pinned, forbidden)
    rng = np.random.default_rng(spec.seed)
    starts = [np.asarray(p, dtype=np.float64) for p in inits]
    while len(starts) < max(spec.restarts, len(inits)):
        raw = rng.gamma(1.0, size=shape)
        if forbidden is not None:
            raw[forbidden] = 0.0
        starts.append(raw / raw.sum())

    def violation(P):
        return max((g(P)[0] for g in inequalities), default=0.0)

    best_val, best_arg = INF, None
    feasible_found = 0
    for start in starts:
        P = projector.project(start)
        for rho in (25.0, 400.0, 6000.0, 1e5):
            P = penalized_descent(objective, inequalities, projector, P,
                                  rho=rho, max_iterations=spec.max_iterations,
                                  tolerance=spec.tolerance)
            if violation(P) <= 1e-10:
                break
        v = violation(P)
        if v > 1e-9 and anchor is not None:
            # mix toward a strictly feasible anchor until the constraints hold
            lo, hi = 0.0, 1.0
            for _ in range(60):
                mid = 0.5 * (lo + hi)
                if violation((1.0 - mid) * P + mid * anchor) <= 0.0:
                    hi = mid
                else:
                    lo = mid
            cand = (1.0 - hi) * P + hi * anchor
            if violation(cand) <= 1e-9:
                P, v = cand, violation(cand)
        if v <= 1e-9:
            feasible_found += 1
            val = objective(P)[0]
            if val < best_val:
                best_val, best_arg = val, P.copy()
    meta = {"solver": "continuous", "restarts_feasible": feasible_found,
            "restarts_total": len(starts)}
    if best_arg is None:
        return ExponentResult(INF, None, meta)
    return ExponentResult(float(best_val), best_arg, meta)


def _pos_part_min(shape, pinned, forbidden, base, ipart, R, extra_ineqs,
                  spec, inits, anchor=None):
    """min base(P) + |ipart(P) - R|^+ subject to extra inequalities.

    Split into the term-active branch (minimize base + ipart - R with
    ipart >= R) and the clamped branch (minimize base with ipart <= R); the
    original minimum is the smaller of the two.
    """

    def obj_active(P):
        bv, bg = base(P)
        iv, ig = ipart(P)
        return bv + iv - R, bg + ig

    def g_active(P):
        iv, ig = ipart(P)
        return R - iv, -ig

    def g_clamped(P):
        iv, ig = ipart(P)
        return iv - R, ig

    res_a = _solve_continuous(shape, pinned, forbidden, obj_active,
                              [g_active] + list(extra_ineqs), spec, inits, anchor)
    res_b = _solve_continuous(shape, pinned, forbidden, base,
                              [g_clamped] + list(extra_ineqs), spec, inits, anchor)
    if res_a.value <= res_b.value:
        res_a.meta["branch"] = "active"
        res_a.meta["other_branch_value"] = res_b.value
        return res_a
    res_b.meta["branch"] = "clamped"
    res_b.meta["other_branch_value"] = res_a.value
    return res_b


def _continuous_source_reliability(R: float, p_v: np.ndarray, spec: SolverSpec) -> ExponentResult:
    s = len(p_v)
    if R > math.log(s) + CMP_TOL:
        return ExponentResult(INF, None, {"solver": "continuous",
                                          "reason": "rate above log alphabet size"})
    forbidden = p_v == 0.0

    def objective(Q):
        grad = _safe_log(Q) - _safe_log(p_v) + 1.0
        mask = Q > 0.0
        val = float(np.dot(Q[mask], np.log(Q[mask]) - np.log(p_v[mask])))
        grad[forbidden] = 0.0
        return val, grad

    def g_entropy(Q):
        # H(Q) >= R  <=>  R - H(Q) <= 0
        val = R - tc.entropy(Q)
        grad = _safe_log(Q) + 1.0
        grad[forbidden] = 0.0
        return val, grad

    uniform = np.where(~forbidden, 1.0, 0.0)
    uniform = uniform / uniform.sum()
    inits = [p_v.copy(), uniform, 0.5 * (p_v + uniform)]
    res = _solve_continuous((s,), {}, forbidden, objective, [g_entropy],
                            spec, inits, anchor=uniform if R < math.log(s) else None)
    return res


def _continuous_random_coding(Q: np.ndarray, channel: Channel, R: float,
                              spec: SolverSpec) -> ExponentResult:
    w = channel.matrix
    sx, sy = w.shape
    Q = np.asarray(Q, dtype=np.float64)
    ref = Q[:, None] * w
    forbidden = ref == 0.0

    def base(P):
        mask = P > 0.0
        val = float(np.sum(P[mask] * (np.log(P[mask]) - np.log(ref[mask]))))
        grad = _safe_log(P) - _safe_log(ref) + 1.0
        grad[forbidden] = 0.0
        return val, grad

    def ipart(P):
        px = P.sum(axis=1)
        py = P.sum(axis=0)
        val = tc.entropy(px) + tc.entropy(py) - tc.entropy(P)
        grad = _safe_log(P) - _safe_log(px)[:, None] - _safe_log(py)[None, :] - 1.0
        grad[forbidden] = 0.0
        return val, grad

    p0 = ref.copy()
    unif = Q[:, None] * np.full((1, sy), 1.0 / sy)
    unif[forbidden] = 0.0
    return _pos_part_min((sx, sy), {0: Q}, forbidden, base, ipart, R, [],
                         spec, [p0, unif], anchor=None)


def _continuous_expurgated(Q: np.ndarray, palette, channel: Channel, R: float,
                           spec: SolverSpec) -> ExponentResult:
    if R < -CMP_TOL:
        return ExponentResult(INF, None, {"solver": "continuous",
                                          "reason": "negative rate"})
    dw = bhattacharyya_matrix(channel)
    forbidden_dw = np.isinf(dw)
    Q = np.asarray(Q, dtype=np.float64)
    best = ExponentResult(INF, None, {"solver": "continuous"})
    for c, q_bar in enumerate(palette):
        qb = np.asarray(q_bar, dtype=np.float64)
        forbidden = forbidden_dw | (Q[:, None] == 0.0) | (qb[None, :] == 0.0)

        def base(L):
            ev = float(np.sum(np.where(L > 0.0, L * np.where(np.isfinite(dw), dw, 0.0), 0.0)))
            lx = L.sum(axis=1)
            ly = L.sum(axis=0)
            ival = tc.entropy(lx) + tc.entropy(ly) - tc.entropy(L)
            grad = np.where(np.isfinite(dw), dw, 0.0) + \
                _safe_log(L) - _safe_log(lx)[:, None] - _safe_log(ly)[None, :] - 1.0
            grad[forbidden] = 0.0
            return ev + ival - R, grad

        def g_mi(L):
            lx = L.sum(axis=1)
            ly = L.sum(axis=0)
            val = tc.entropy(lx) + tc.entropy(ly) - tc.entropy(L) - R
            grad = _safe_log(L) - _safe_log(lx)[:, None] - _safe_log(ly)[None, :] - 1.0
            grad[forbidden] = 0.0
            return val, grad

        product = Q[:, None] * qb[None, :]
        if forbidden.any():
            product = np.where(forbidden, 0.0, product)
        anchor = product if (not forbidden_dw.any()) and R > 0 else None
        res = _solve_continuous((len(Q), len(qb)), {0: Q, 1: qb}, forbidden,
                                base, [g_mi], spec, [product], anchor=anchor)
        if res.value < best.value:
            res.meta["palette_index"] = c
            best = res
    return best


def _continuous_rgv_minterm(cfg: "CodeConfig", channel: Channel, i: int, j: int,
                            spec: SolverSpec) -> ExponentResult:
    if cfg.distance.kind == DistanceKind.CUSTOM:
        raise SolverError("continuous solver supports only the NEG_MI distance")
    if cfg.metric.kind == MetricKind.CUSTOM:
        raise SolverError("continuous solver supports only MMI/CSISZAR metrics")
    if cfg.metric.kind == MetricKind.CSISZAR and channel.has_zeros():
        raise SolverError("continuous solver needs a full-support channel for "
                          "the CSISZAR metric; use the discrete solver")
    w = channel.matrix
    logw = channel.log_matrix
    sx, sy = w.shape
    qi = cfg.palette[cfg.mu[i]].pmf()
    qj = cfg.palette[cfg.mu[j]].pmf()
    r_i, r_j = cfg.rates[i], cfg.rates[j]
    thr_max = max(cfg.resolved_thresholds[i], cfg.resolved_thresholds[j])
    ref = qi[:, None] * w  # reference product measure over (x, y)
    forbidden = (ref == 0.0)[:, None, :] | (qj == 0.0)[None, :, None]

    def base(P):
        m = P.sum(axis=1)
        mask = m > 0.0
        val = float(np.sum(m[mask] * (np.log(m[mask]) - _safe_log(ref)[mask])))
        grad = np.broadcast_to((_safe_log(m) - _safe_log(ref) + 1.0)[:, None, :], P.shape).copy()
        grad[forbidden] = 0.0
        return val, grad

    def ipart(P):
        # I(Xbar ; X, Y)
        m = P.sum(axis=1)
        pxb = P.sum(axis=(0, 2))
        val = tc.entropy(pxb) + tc.entropy(m) - tc.entropy(P)
        grad = _safe_log(P) - _safe_log(pxb)[None, :, None] - _safe_log(m)[:, None, :] - 1.0
        grad[forbidden] = 0.0
        return val, grad

    extra = []
    if math.isfinite(thr_max):
        mi_cap = -thr_max  # d(P) >= thr with d = -I  <=>  I <= -thr

        def g_distance(P):
            s = P.sum(axis=2)
            a = s.sum(axis=1)
            b = s.sum(axis=0)
            val = tc.entropy(a) + tc.entropy(b) - tc.entropy(s) - mi_cap
            grad = np.broadcast_to(
                (_safe_log(s) - _safe_log(a)[:, None] - _safe_log(b)[None, :] - 1.0)[:, :, None],
                P.shape).copy()
            grad[forbidden] = 0.0
            return val, grad

        extra.append(g_distance)
    elif thr_max == INF:
        return ExponentResult(INF, None, {"solver": "continuous",
                                          "reason": "infinite distance threshold"})

    if cfg.metric.kind == MetricKind.MMI:

        def g_metric(P):
            m = P.sum(axis=1)
            b = P.sum(axis=0)
            px = m.sum(axis=1)
            pxb = b.sum(axis=1)
            py = m.sum(axis=0)
            i_xy = tc.entropy(px) + tc.entropy(py) - tc.entropy(m)
            i_xby = tc.entropy(pxb) + tc.entropy(py) - tc.entropy(b)
            val = (i_xy - r_i) - (i_xby - r_j)
            gm = (_safe_log(m) - _safe_log(px)[:, None] - _safe_log(py)[None, :])[:, None, :]
            gb = (_safe_log(b) - _safe_log(pxb)[:, None] - _safe_log(py)[None, :])[None, :, :]
            grad = np.broadcast_to(gm, P.shape) - np.broadcast_to(gb, P.shape)
            grad = grad.copy()
            grad[forbidden] = 0.0
            return val, grad

    else:  # CSISZAR

        def g_metric(P):
            m = P.sum(axis=1)
            b = P.sum(axis=0)
            val = float(np.sum(m * logw)) - 2.0 * r_i - float(np.sum(b * logw)) + 2.0 * r_j
            grad = np.broadcast_to(logw[:, None, :], P.shape) - \
                np.broadcast_to(logw[None, :, :], P.shape)
            grad = grad.copy()
            grad[forbidden] = 0.0
            return val, grad

    extra.append(g_metric)

    p_from_x = qi[:, None, None] * qj[None, :, None] * w[:, None, :]
    p_from_xb = qi[:, None, None] * qj[None, :, None] * w[None, :, :]
    p_unif = qi[:, None, None] * qj[None, :, None] * np.full((1, 1, sy), 1.0 / sy)
    inits = [p_from_x, p_from_xb, p_unif, 0.5 * (p_from_x + p_from_xb)]
    return _pos_part_min((sx, sx, sy), {0: qi, 1: qj}, forbidden, base, ipart,
                         r_j, extra, spec, inits, anchor=None)


# ---------------------------------------------------------------------------
# public operations
# ---------------------------------------------------------------------------


def _as_source(src) -> np.ndarray:
    if isinstance(src, SourceSpec):
        return src.p_v
    return tc.as_pmf(src)


def source_reliability(R: float, src, solver: SolverSpec) -> ExponentResult:
    """min D(Q || P_V) over pmfs Q with H(Q) >= R.

    Zero whenever R <= H(P_V); +inf when R exceeds ln(alphabet size).
    """
    if R < 0:
        raise ValueError("rate must be nonnegative")
    p_v = _as_source(src)
    if solver.kind == SolverKind.DISCRETE_EXHAUSTIVE:
        return _discrete_source_reliability(R, p_v, solver.grid_for(len(p_v)))
    return _continuous_source_reliability(R, p_v, solver)


def random_coding_exponent(Q, channel: Channel, R: float, solver: SolverSpec) -> ExponentResult:
    """Constant-composition random-coding exponent at input composition Q.

    min over joints P with X-marginal Q of D(P || Q x W) + |I_P(X;Y) - R|^+.
    """
    if R < 0:
        raise ValueError("rate must be nonnegative")
    Qp = tc.as_pmf(Q)
    if solver.kind == SolverKind.DISCRETE_EXHAUSTIVE:
        return _discrete_random_coding(Qp, channel, R, solver.grid_for(len(Qp)))
    return _continuous_random_coding(Qp, channel, R, solver)


def expurgated_exponent(Q, palette, channel: Channel, R: float,
                        solver: SolverSpec) -> ExponentResult:
    """Expurgated exponent with codeword compositions drawn from a palette.

    min over couplings L with L_X = Q, L_Xbar in the palette and
    I(L) <= R of E_L[d_W(X, Xbar)] + I(L) - R.
    """
    Qp = tc.as_pmf(Q)
    pal = [p.pmf() if isinstance(p, tc.TypeVector) else tc.as_pmf(p) for p in palette]
    if not pal:
        raise ValueError("palette must be nonempty")
    if solver.kind == SolverKind.DISCRETE_EXHAUSTIVE:
        return _discrete_expurgated(Qp, pal, channel, R, solver.grid_for(len(Qp)))
    return _continuous_expurgated(Qp, pal, channel, R, solver)


def _source_terms(cfg: "CodeConfig", solver: SolverSpec):
    """t * e(H(P_i), P_V) for each source type, plus the raw results."""
    res = [source_reliability(tv.entropy(), cfg.src, solver)
           for tv in cfg.source_types]
    return np.array([cfg.t * r.value for r in res]), res


def rgv_exponent_pair(i: int, j: int, cfg: "CodeConfig", channel: Channel,
                      solver: SolverSpec) -> ExponentResult:
    """Pairwise exponent of the minimum-distance construction.

    t*e(R_i/t, P_V) plus the minimum over triple joints (X, Xbar, Y) with
    X-marginal Q_mu(i), Xbar-marginal Q_mu(j), distance floor
    d(P_XXbar) >= max(thr_i, thr_j) and metric comparison
    q(i, P_XY) <= q(j, P_XbarY) of D(P_XY || Q_mu(i) x W) +
    |I_P(Xbar; X,Y) - R_j|^+.  An empty constraint set makes the
    minimization term +inf.
    """
    src_val = source_reliability(cfg.source_types[i].entropy(), cfg.src, solver)
    if solver.kind == SolverKind.DISCRETE_EXHAUSTIVE:
        grid = solver.grid_for(channel.input_size)
        minterm = _discrete_rgv_minterms(cfg, channel, grid, [(i, j)])[(i, j)]
    else:
        minterm = _continuous_rgv_minterm(cfg, channel, i, j, solver)
    total = cfg.t * src_val.value + minterm.value
    meta = dict(minterm.meta)
    meta["source_term"] = cfg.t * src_val.value
    meta["min_term"] = minterm.value
    return ExponentResult(total, minterm.argmin, meta)


@dataclass
class JsccBoundEntry:
    type_index: int
    source_type: tc.TypeVector
    rate: float
    source_term: float
    channel_term: float
    total: float


@dataclass
class JsccBoundTable:
    kind: str
    entries: list
    overall: float

    def totals(self) -> np.ndarray:
        return np.array([e.total for e in self.entries])


def _jscc_bound(cfg: "CodeConfig", channel: Channel, solver: SolverSpec,
                kind: str) -> JsccBoundTable:
    src_terms, _ = _source_terms(cfg, solver)
    entries = []
    for idx, tv in enumerate(cfg.source_types):
        Q = cfg.palette[cfg.mu[idx]].pmf()
        R = cfg.rates[idx]
        if kind == "random_coding":
            ch = random_coding_exponent(Q, channel, R, solver)
        else:
            ch = expurgated_exponent(Q, [p.pmf() for p in cfg.palette], channel, R, solver)
        entries.append(JsccBoundEntry(idx, tv, R, float(src_terms[idx]),
                                      ch.value, src_terms[idx] + ch.value))
    overall = min(e.total for e in entries)
    return JsccBoundTable(kind, entries, overall)


def jscc_random_coding_bound(cfg: "CodeConfig", channel: Channel,
                             solver: SolverSpec) -> JsccBoundTable:
    """Per-source-type random-coding exponents and their minimum."""
    return _jscc_bound(cfg, channel, solver, "random_coding")


def jscc_expurgated_bound(cfg: "CodeConfig", channel: Channel,
                          solver: SolverSpec) -> JsccBoundTable:
    """Per-source-type expurgated exponents and their minimum."""
    return _jscc_bound(cfg, channel, solver, "expurgated")


@dataclass
class RgvExponentTable:
    values: np.ndarray  # (N, N) pair exponents
    min_terms: np.ndarray
    source_terms: np.ndarray
    overall: float
    results: dict


def rgv_overall_exponent(cfg: "CodeConfig", channel: Channel,
                         solver: SolverSpec) -> RgvExponentTable:
    """All pairwise construction exponents and their minimum."""
    n = len(cfg.source_types)
    pairs = [(i, j) for i in range(n) for j in range(n)]
    src_terms, _ = _source_terms(cfg, solver)
    if solver.kind == SolverKind.DISCRETE_EXHAUSTIVE:
        grid = solver.grid_for(channel.input_size)
        minterms = _discrete_rgv_minterms(cfg, channel, grid, pairs)
    else:
        minterms = {p: _continuous_rgv_minterm(cfg, channel, p[0], p[1], solver)
                    for p in pairs}
    values = np.empty((n, n))
    mins = np.empty((n, n))
    for (i, j), res in minterms.items():
        mins[i, j] = res.value
        values[i, j] = src_terms[i] + res.value
    overall = float(values.min())
    return RgvExponentTable(values, mins, src_terms, overall, minterms)
