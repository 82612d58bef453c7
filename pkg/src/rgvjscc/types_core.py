"""Exact method-of-types primitives.

Types (empirical distributions) are kept as exact integer count vectors with
an explicit denominator; probabilities only appear when a type is converted
to a pmf.  All information measures use natural logarithms (nats) with the
conventions 0*ln(0) = 0 and x*ln(x/0) = +inf.  Enumerations are produced in
lexicographic order so that every run of the toolkit is reproducible.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

__all__ = [
    "Alphabet",
    "TypeVector",
    "JointTypeVector",
    "as_pmf",
    "entropy",
    "kl_divergence",
    "mutual_information",
    "grouped_mutual_information",
    "conditional_entropy",
    "enumerate_types",
    "enumerate_joint_types",
    "enumerate_type_class",
    "num_types",
    "type_class_size",
    "log_type_class_size",
    "multinomial_coefficient",
    "sample_uniform_from_type_class",
    "joint_type_of",
    "quantize_to_type",
    "composition_table",
    "tables_with_row_sums",
    "tables_with_margins",
    "cartesian_stack",
]

PMF_ATOL = 1e-12


@dataclass(frozen=True)
class Alphabet:
    """Finite alphabet; symbols are 0 .. size-1."""

    size: int

    def __post_init__(self):
        if self.size < 1:
            raise ValueError(f"alphabet size must be >= 1, got {self.size}")

    def symbols(self) -> range:
        return range(self.size)


def as_pmf(p) -> np.ndarray:
    """Validate and return a probability vector as a float array."""
    arr = np.asarray(p, dtype=np.float64)
    if arr.ndim != 1:
        raise ValueError("pmf must be one-dimensional")
    if np.any(arr < -PMF_ATOL):
        raise ValueError("pmf entries must be nonnegative")
    if abs(float(arr.sum()) - 1.0) > PMF_ATOL:
        raise ValueError(f"pmf must sum to 1, got {arr.sum()!r}")
    return np.clip(arr, 0.0, None)


def entropy(p) -> float:
    """Shannon entropy -sum p*ln(p) in nats, with 0*ln(0) = 0."""
    arr = np.asarray(p, dtype=np.float64).ravel()
    mask = arr > 0.0
    vals = arr[mask]
    return float(-np.dot(vals, np.log(vals)))


def kl_divergence(p, q) -> float:
    """D(p||q) in nats; +inf when p puts mass where q has none."""
    parr = np.asarray(p, dtype=np.float64).ravel()
    qarr = np.asarray(q, dtype=np.float64).ravel()
    if parr.shape != qarr.shape:
        raise ValueError("kl_divergence: dimension mismatch")
    mask = parr > 0.0
    if np.any(qarr[mask] <= 0.0):
        return math.inf
    return float(np.dot(parr[mask], np.log(parr[mask] / qarr[mask])))


def _joint_as_array(joint) -> np.ndarray:
    if isinstance(joint, JointTypeVector):
        return joint.pmf()
    return np.asarray(joint, dtype=np.float64)


def mutual_information(joint) -> float:
    """I(X;Y) of a two-axis joint pmf or joint type, in nats."""
    arr = _joint_as_array(joint)
    if arr.ndim != 2:
        raise ValueError("mutual_information expects a two-axis joint")
    return entropy(arr.sum(axis=1)) + entropy(arr.sum(axis=0)) - entropy(arr)


def grouped_mutual_information(joint, left_axes) -> float:
    """Mutual information I(left ; rest) for a multi-axis joint pmf."""
    arr = _joint_as_array(joint)
    left = tuple(left_axes)
    right = tuple(a for a in range(arr.ndim) if a not in left)
    if not left or not right:
        raise ValueError("axis groups must both be nonempty")
    h_left = entropy(arr.sum(axis=right))
    h_right = entropy(arr.sum(axis=left))
    return h_left + h_right - entropy(arr)


def conditional_entropy(joint, condition_on: int) -> float:
    """H(other | condition axis) = H(joint) - H(conditioning marginal)."""
    arr = _joint_as_array(joint)
    if arr.ndim != 2:
        raise ValueError("conditional_entropy expects a two-axis joint")
    other = 1 - condition_on
    marg = arr.sum(axis=other)
    return entropy(arr) - entropy(marg)


def _nested_tuple(arr: np.ndarray):
    if arr.ndim == 1:
        return tuple(int(v) for v in arr)
    return tuple(_nested_tuple(sub) for sub in arr)


@dataclass(frozen=True)
class TypeVector:
    """Empirical distribution as exact counts over 0..s-1 with a fixed denominator."""

    counts: tuple
    denominator: int

    def __post_init__(self):
        counts = tuple(int(c) for c in self.counts)
        object.__setattr__(self, "counts", counts)
        if self.denominator < 1:
            raise ValueError("denominator must be positive")
        if any(c < 0 for c in counts):
            raise ValueError("counts must be nonnegative")
        if sum(counts) != self.denominator:
            raise ValueError(
                f"counts sum to {sum(counts)}, expected {self.denominator}"
            )

    @property
    def alphabet_size(self) -> int:
        return len(self.counts)

    def pmf(self) -> np.ndarray:
        return np.asarray(self.counts, dtype=np.float64) / self.denominator

    def entropy(self) -> float:
        return entropy(self.pmf())

    def __str__(self):
        return f"({','.join(map(str, self.counts))})/{self.denominator}"


@dataclass(frozen=True)
class JointTypeVector:
    """Joint empirical distribution over a product alphabet, exact counts."""

    counts: tuple  # nested tuples, arbitrary number of axes
    denominator: int

    def __post_init__(self):
        arr = np.asarray(self.counts, dtype=np.int64)
        object.__setattr__(self, "counts", _nested_tuple(arr))
        if self.denominator < 1:
            raise ValueError("denominator must be positive")
        if np.any(arr < 0):
            raise ValueError("counts must be nonnegative")
        if int(arr.sum()) != self.denominator:
            raise ValueError(
                f"counts sum to {int(arr.sum())}, expected {self.denominator}"
            )

    @property
    def shape(self) -> tuple:
        return self.array().shape

    def array(self) -> np.ndarray:
        return np.asarray(self.counts, dtype=np.int64)

    def pmf(self) -> np.ndarray:
        return self.array().astype(np.float64) / self.denominator

    def marginal(self, axis: int) -> TypeVector:
        arr = self.array()
        other = tuple(a for a in range(arr.ndim) if a != axis)
        return TypeVector(tuple(int(v) for v in arr.sum(axis=other)), self.denominator)

    def pair_marginal(self, axes) -> "JointTypeVector":
        arr = self.array()
        keep = tuple(axes)
        drop = tuple(a for a in range(arr.ndim) if a not in keep)
        marg = arr.sum(axis=drop)
        # reorder to the requested axis order
        order = np.argsort(np.argsort(keep))
        marg = np.transpose(marg, axes=tuple(order))
        return JointTypeVector(_nested_tuple(marg), self.denominator)

    def mutual_information(self) -> float:
        return mutual_information(self.pmf())


@lru_cache(maxsize=None)
def composition_table(total: int, parts: int) -> np.ndarray:
    """All compositions of `total` into `parts` nonnegative parts, lex order.

    Returns a read-only (C(total+parts-1, parts-1), parts) int64 array.
    """
    if parts < 1:
        raise ValueError("parts must be >= 1")
    if parts == 1:
        out = np.array([[total]], dtype=np.int64)
    else:
        blocks = []
        for first in range(total + 1):
            rest = composition_table(total - first, parts - 1)
            blk = np.empty((rest.shape[0], parts), dtype=np.int64)
            blk[:, 0] = first
            blk[:, 1:] = rest
            blocks.append(blk)
        out = np.vstack(blocks)
    out.setflags(write=False)
    return out


def num_types(alphabet_size: int, denominator: int) -> int:
    """Number of types of the given denominator: C(n+s-1, s-1)."""
    return math.comb(denominator + alphabet_size - 1, alphabet_size - 1)


def enumerate_types(alphabet_size: int, denominator: int) -> list:
    """All TypeVectors over the alphabet with the given denominator, lex order."""
    if denominator < 1:
        raise ValueError("denominator must be >= 1")
    table = composition_table(denominator, alphabet_size)
    return [TypeVector(tuple(int(v) for v in row), denominator) for row in table]


def enumerate_joint_types(sizes, denominator: int, fixed_marginals=None):
    """Yield all JointTypeVectors over prod(sizes) cells with given denominator.

    `fixed_marginals` maps an axis index to a TypeVector that the joint's
    marginal on that axis must equal exactly.  Infeasible constraints yield
    an empty sequence.  Cells are filled in lexicographic multi-index order,
    so the output order is lexicographic in the flattened count vector.
    """
    sizes = tuple(int(s) for s in sizes)
    pinned = {}
    if fixed_marginals:
        for axis, tv in fixed_marginals.items():
            if tv.denominator != denominator:
                raise ValueError("fixed marginal denominator mismatch")
            if tv.alphabet_size != sizes[axis]:
                raise ValueError("fixed marginal size mismatch")
            pinned[axis] = list(tv.counts)

    cells = list(itertools.product(*map(range, sizes)))
    ncells = len(cells)
    # remaining capacity per pinned axis symbol: how many later cells touch it
    later = {a: np.zeros((ncells + 1, sizes[a]), dtype=np.int64) for a in pinned}
    for a in pinned:
        for idx in range(ncells - 1, -1, -1):
            later[a][idx] = later[a][idx + 1]
            later[a][idx][cells[idx][a]] += 1

    budgets = {a: list(v) for a, v in pinned.items()}
    current = [0] * ncells

    def rec(idx, remaining):
        if idx == ncells:
            if remaining == 0 and all(all(b == 0 for b in budgets[a]) for a in budgets):
                arr = np.asarray(current, dtype=np.int64).reshape(sizes)
                yield JointTypeVector(_nested_tuple(arr), denominator)
            return
        hi = remaining
        for a in budgets:
            hi = min(hi, budgets[a][cells[idx][a]])
        for val in range(hi + 1):
            current[idx] = val
            for a in budgets:
                budgets[a][cells[idx][a]] -= val
            # prune: every leftover pinned budget must still have cells ahead
            feasible = True
            for a in budgets:
                for sym in range(sizes[a]):
                    if budgets[a][sym] > 0 and later[a][idx + 1][sym] == 0:
                        feasible = False
                        break
                if not feasible:
                    break
            if feasible:
                yield from rec(idx + 1, remaining - val)
            for a in budgets:
                budgets[a][cells[idx][a]] += val
        current[idx] = 0

    yield from rec(0, denominator)


def multinomial_coefficient(counts) -> int:
    """Exact multinomial coefficient n! / prod(c_i!) for n = sum(counts)."""
    total = 0
    result = 1
    for c in counts:
        c = int(c)
        if c < 0:
            raise ValueError("counts must be nonnegative")
        total += c
        result *= math.comb(total, c)
    return result


def type_class_size(t: TypeVector) -> int:
    """Exact number of sequences with the given type (big-int arithmetic)."""
    return multinomial_coefficient(t.counts)


def log_type_class_size(t: TypeVector) -> float:
    """Natural log of the exact type-class size."""
    return float(math.log(type_class_size(t)))


def sample_uniform_from_type_class(t: TypeVector, rng: np.random.Generator) -> np.ndarray:
    """Draw a sequence uniformly from the type class of `t`.

    A uniformly random permutation of the fixed composition hits every
    arrangement of the multiset with equal probability.
    """
    base = np.repeat(np.arange(t.alphabet_size, dtype=np.int8), t.counts)
    return rng.permutation(base)


def enumerate_type_class(t: TypeVector) -> np.ndarray:
    """All sequences of the given type in lexicographic order, one per row."""
    n = t.denominator
    total = type_class_size(t)
    out = np.empty((total, n), dtype=np.int8)
    counts = list(t.counts)
    row = np.empty(n, dtype=np.int8)
    cursor = [0]

    def rec(depth):
        if depth == n:
            out[cursor[0]] = row
            cursor[0] += 1
            return
        for sym in range(t.alphabet_size):
            if counts[sym]:
                counts[sym] -= 1
                row[depth] = sym
                rec(depth + 1)
                counts[sym] += 1

    rec(0)
    return out


def joint_type_of(*sequences) -> JointTypeVector:
    """Exact joint type of two or more equal-length symbol sequences."""
    arrays = [np.asarray(s, dtype=np.int64) for s in sequences]
    n = arrays[0].shape[0]
    if any(a.ndim != 1 or a.shape[0] != n for a in arrays):
        raise ValueError("sequences must be one-dimensional and of equal length")
    sizes = tuple(int(a.max(initial=0)) + 1 for a in arrays)
    flat = np.ravel_multi_index(tuple(arrays), sizes)
    counts = np.bincount(flat, minlength=int(np.prod(sizes))).reshape(sizes)
    return JointTypeVector(_nested_tuple(counts), n)


def quantize_to_type(pmf, denominator: int) -> TypeVector:
    """Nearest type of the given denominator (largest-remainder rounding).

    Ties between equal remainders are broken toward the lower symbol index,
    which keeps the rounding deterministic.
    """
    p = as_pmf(pmf)
    scaled = p * denominator
    base = np.floor(scaled).astype(np.int64)
    short = denominator - int(base.sum())
    if short:
        remainders = scaled - base
        order = np.lexsort((np.arange(len(p)), -remainders))
        base[order[:short]] += 1
    return TypeVector(tuple(int(v) for v in base), denominator)


def cartesian_stack(parts: list) -> np.ndarray:
    """All row combinations of the given blocks, first block varying slowest.

    `parts[i]` has shape (n_i, w_i); the result has shape
    (prod n_i, sum w_i) and enumerates tuples in lexicographic order of the
    block row indices.
    """
    total = 1
    for p in parts:
        total *= p.shape[0]
    width = sum(p.shape[1] for p in parts)
    out = np.empty((total, width), dtype=np.int64)
    reps_after = total
    reps_before = 1
    col = 0
    for p in parts:
        n, w = p.shape
        reps_after //= n
        block = np.repeat(p, reps_after, axis=0)
        out[:, col : col + w] = np.tile(block, (reps_before, 1))
        reps_before *= n
        col += w
    return out


def tables_with_row_sums(row_sums, cols: int) -> np.ndarray:
    """All nonnegative integer tables with the given row sums; columns free.

    Returns an (N, rows, cols) int64 array in lexicographic order of the
    flattened table.
    """
    row_sums = [int(r) for r in row_sums]
    parts = [composition_table(r, cols) for r in row_sums]
    flat = cartesian_stack(parts)
    return flat.reshape(-1, len(row_sums), cols)


def tables_with_margins(row_sums, col_sums) -> np.ndarray:
    """All nonnegative integer tables with both margins pinned (lex order)."""
    row_sums = [int(r) for r in row_sums]
    col_sums = np.asarray([int(c) for c in col_sums], dtype=np.int64)
    rows, cols = len(row_sums), len(col_sums)
    if sum(row_sums) != int(col_sums.sum()):
        return np.empty((0, rows, cols), dtype=np.int64)

    results = []

    def rec(r, prefix, budget):
        if r == rows:
            results.append(np.concatenate(prefix))
            return
        cand = composition_table(row_sums[r], cols)
        ok = np.all(cand <= budget, axis=1)
        remaining_rows = sum(row_sums[r + 1 :])
        for row in cand[ok]:
            new_budget = budget - row
            if new_budget.sum() != remaining_rows:
                continue
            prefix.append(row)
            rec(r + 1, prefix, new_budget)
            prefix.pop()

    rec(0, [], col_sums.copy())
    if not results:
        return np.empty((0, rows, cols), dtype=np.int64)
    return np.asarray(results, dtype=np.int64).reshape(-1, rows, cols)
