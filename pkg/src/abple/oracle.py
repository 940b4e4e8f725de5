"""Brute-force local entropy on small perceptron instances.

A vertex of the cube ``{-1/sqrt(n), 1/sqrt(n)}^n`` is stored as an n-bit
mask: bit ``i`` set means coordinate ``i`` is positive.  A vertex ``x`` is a
solution when every constraint ``(G x)_j >= kappa`` holds.

The local entropy of an instance at overlap ``delta_bar`` is

    (1/n) log max_{ref} #{x solution : hamming(ref, x) = n (1 - delta_bar) / 2}

with the maximum over all cube vertices (the reference need not solve the
instance).  These are finite-n numbers; they check semantics and trends of
the analytic pipeline, not its asymptotic values.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations

import numpy as np
from scipy.special import comb

MAX_SAMPLE_N = 30
MAX_ENUM_N = 26
MAX_EXHAUSTIVE_N = 20
DEFAULT_REFERENCES = 2 ** 16

_CHUNK = 1 << 14


@dataclass(frozen=True, eq=False)
class McInstance:
    n: int
    m: int
    kappa: float
    g: np.ndarray
    seed: int

    def fields(self, masks: np.ndarray) -> np.ndarray:
        """``G x`` for each vertex mask, shape (len(masks), m); direct O(n m) evaluation."""
        masks = np.asarray(masks, dtype=np.int64)
        bits = (masks[:, None] >> np.arange(self.n)) & 1
        signs = 2.0 * bits - 1.0
        return signs @ self.g.T / math.sqrt(self.n)


@dataclass(frozen=True, eq=False)
class SolutionSet:
    n: int
    members: np.ndarray  # sorted int64 masks

    def __len__(self) -> int:
        return len(self.members)


@dataclass(frozen=True)
class LocalEntropyEstimate:
    """Result of :func:`empirical_local_entropy`.

    ``value`` is ``-inf`` when the instance has no solutions (``empty``).
    ``lower_bound`` is set when only a sample of references was scanned.
    """

    value: float
    count: int
    reference: int
    lower_bound: bool
    empty: bool

    def __float__(self) -> float:
        return self.value


def sample_instance(n: int, alpha: float, kappa: float, seed: int) -> McInstance:
    if not 1 <= n <= MAX_SAMPLE_N:
        raise ValueError(f"n must lie in [1, {MAX_SAMPLE_N}], got {n!r}")
    if not alpha >= 0:
        raise ValueError(f"alpha must be >= 0, got {alpha!r}")
    m = int(math.floor(alpha * n + 0.5))
    rng = np.random.default_rng(seed)
    g = rng.standard_normal((m, n))
    g.setflags(write=False)
    return McInstance(n=n, m=m, kappa=float(kappa), g=g, seed=int(seed))


def _gray(i: np.ndarray) -> np.ndarray:
    return i ^ (i >> 1)


def enumerate_solutions(inst: McInstance) -> SolutionSet:
    """All feasible vertices, walking the cube in Gray-code order.

    Each chunk of the walk starts from a directly computed ``G x`` and then
    applies the single-column update of every Gray step (O(m) per vertex).
    """
    n = inst.n
    if n > MAX_ENUM_N:
        raise ValueError(f"full enumeration is limited to n <= {MAX_ENUM_N}, got n={n}")
    total = 1 << n
    if inst.m == 0:
        return SolutionSet(n=n, members=np.arange(total, dtype=np.int64))
    cols = 2.0 * inst.g.T / math.sqrt(n)  # (n, m): field change of flipping bit j up
    found = []
    for start in range(0, total, _CHUNK):
        idx = np.arange(start, min(start + _CHUNK, total), dtype=np.int64)
        codes = _gray(idx)
        f0 = inst.fields(codes[:1])[0]
        if len(idx) > 1:
            step_idx = idx[1:]
            low = step_idx & -step_idx
            bit = np.log2(low).astype(np.int64)
            up = (codes[1:] >> bit) & 1
            deltas = cols[bit] * (2.0 * up - 1.0)[:, None]
            fields = np.vstack([f0, f0 + np.cumsum(deltas, axis=0)])
        else:
            fields = f0[None, :]
        ok = np.all(fields >= inst.kappa, axis=1)
        found.append(codes[ok])
    members = np.sort(np.concatenate(found))
    return SolutionSet(n=n, members=members)


def hamming_distance(n: int, delta_bar: float) -> int:
    """Exact distance ``n (1 - delta_bar) / 2``; raises if it is not an integer."""
    d = n * (1.0 - delta_bar) / 2.0
    k = int(round(d))
    if abs(d - k) > 1e-9 or not 0 <= k <= n:
        k = min(max(k, 0), n)
        raise ValueError(
            f"delta_bar={delta_bar!r} gives non-integer distance {d:g} for n={n}; "
            f"nearest admissible delta_bar is {1.0 - 2.0 * k / n!r}")
    return k


def _fwht(a: np.ndarray) -> np.ndarray:
    size = len(a)
    h = 1
    while h < size:
        a = a.reshape(-1, 2, h)
        a = np.stack([a[:, 0] + a[:, 1], a[:, 0] - a[:, 1]], axis=1)
        h *= 2
    return a.reshape(size)


def _weight_masks(n: int, d: int) -> np.ndarray:
    out = np.zeros(int(comb(n, d, exact=True)), dtype=np.int64)
    for i, bits in enumerate(combinations(range(n), d)):
        out[i] = sum(1 << b for b in bits)
    return out


def reference_counts(sols: SolutionSet, d: int) -> np.ndarray:
    """Number of solutions at distance ``d`` from every one of the 2^n references.

    Computed exactly as the XOR-convolution of the solution and weight-d
    indicators via the Walsh-Hadamard transform (int64, exact to n = 20).
    """
    n = sols.n
    if n > MAX_EXHAUSTIVE_N:
        raise ValueError(f"exhaustive reference scan is limited to n <= {MAX_EXHAUSTIVE_N}")
    size = 1 << n
    ind = np.zeros(size, dtype=np.int64)
    ind[sols.members] = 1
    ring = np.zeros(size, dtype=np.int64)
    ring[_weight_masks(n, d)] = 1
    return _fwht(_fwht(ind) * _fwht(ring)) >> n


def _sampled_references(sols: SolutionSet, d: int, count: int, rng) -> np.ndarray:
    n = sols.n
    n_uniform = count // 2
    refs = [rng.integers(0, 1 << n, size=n_uniform, dtype=np.int64)]
    n_pert = count - n_uniform
    base = sols.members[rng.integers(0, len(sols), size=n_pert)]
    flips = rng.random((n_pert, n)) < max(d, 1) / (2.0 * n)
    flip_masks = (flips.astype(np.int64) << np.arange(n)).sum(axis=1)
    refs.append(base ^ flip_masks)
    return np.concatenate(refs)


def _count_at_distance(sols: SolutionSet, refs: np.ndarray, d: int) -> np.ndarray:
    n = sols.n
    members = sols.members
    n_ring = int(comb(n, d, exact=True))
    out = np.empty(len(refs), dtype=np.int64)
    if len(members) <= n_ring:
        block = max(1, (1 << 22) // max(len(members), 1))
        for s in range(0, len(refs), block):
            r = refs[s:s + block, None]
            out[s:s + block] = np.sum(np.bitwise_count(members[None, :] ^ r) == d, axis=1)
    else:
        is_sol = np.zeros(1 << n, dtype=bool)
        is_sol[members] = True
        ring = _weight_masks(n, d)
        block = max(1, (1 << 22) // n_ring)
        for s in range(0, len(refs), block):
            r = refs[s:s + block, None]
            out[s:s + block] = np.sum(is_sol[r ^ ring[None, :]], axis=1)
    return out


def empirical_local_entropy(inst: McInstance, delta_bar: float, mode: str = "auto",
                            references: int = DEFAULT_REFERENCES,
                            solutions: SolutionSet | None = None,
                            seed: int | None = None) -> LocalEntropyEstimate:
    """Worst-case local entropy of one instance at exact overlap ``delta_bar``.

    ``mode`` is ``"exhaustive"`` (every reference, n <= 20), ``"sampled"``
    (``references`` references: half uniform vertices, half randomly
    perturbed solutions; the result is a lower bound) or ``"auto"``.
    """
    n = inst.n
    d = hamming_distance(n, delta_bar)
    if mode == "auto":
        mode = "exhaustive" if n <= MAX_EXHAUSTIVE_N else "sampled"
    if mode not in ("exhaustive", "sampled"):
        raise ValueError(f"unknown mode {mode!r}")
    sols = solutions if solutions is not None else enumerate_solutions(inst)
    lower = mode == "sampled"
    if len(sols) == 0:
        return LocalEntropyEstimate(value=-math.inf, count=0, reference=-1,
                                    lower_bound=lower, empty=True)
    if mode == "exhaustive":
        counts = reference_counts(sols, d)
        refs = None
    else:
        if references < 1:
            raise ValueError("references must be >= 1")
        rng = np.random.default_rng(inst.seed if seed is None else seed)
        refs = _sampled_references(sols, d, references, rng)
        counts = _count_at_distance(sols, refs, d)
    best = int(np.argmax(counts))
    top = int(counts[best])
    ref = best if refs is None else int(refs[best])
    value = math.log(top) / n if top > 0 else -math.inf
    return LocalEntropyEstimate(value=value, count=top, reference=ref,
                                lower_bound=lower, empty=False)


def empirical_curve(n: int, alpha: float, kappa: float, deltas, instances: int,
                    base_seed: int, mode: str = "auto",
                    references: int = DEFAULT_REFERENCES) -> list[tuple[float, float, float]]:
    """Mean and standard error of the local entropy over seeded instances.

    Instance ``i`` uses seed ``base_seed + i``; each instance is enumerated
    once and reused for every overlap.
    """
    if instances < 1:
        raise ValueError("instances must be >= 1")
    deltas = list(deltas)
    for dl in deltas:
        hamming_distance(n, dl)
    values = np.empty((instances, len(deltas)))
    for i in range(instances):
        inst = sample_instance(n, alpha, kappa, base_seed + i)
        sols = enumerate_solutions(inst)
        for j, dl in enumerate(deltas):
            values[i, j] = empirical_local_entropy(inst, dl, mode, references, sols).value
    out = []
    for j, dl in enumerate(deltas):
        col = values[:, j]
        mean = float(np.mean(col))
        if instances == 1 or not np.all(np.isfinite(col)):
            se = 0.0
        else:
            se = float(np.std(col, ddof=1) / math.sqrt(instances))
        out.append((float(dl), mean, se))
    return out


def admissible_deltas(n: int) -> list[float]:
    """Overlaps with integer distance d = 1 .. n // 2."""
    return [1.0 - 2.0 * d / n for d in range(1, n // 2 + 1)]
