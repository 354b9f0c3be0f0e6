"""Periodic training-sequence design under a per-frame resource budget.

Selects how many covariance eigenmodes to sound (n_d), the per-mode
sounding interval vector g (each entry dividing the frame length G, with
sum of 1/g_i equal to the pilot count M_p), and materializes the choice as
a G x M_p index matrix C whose row ell names the eigenvectors transmitted
during block ell's training period.
"""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np

from .steady_state import max_ss_mse, min_ss_mse


@dataclass(frozen=True)
class FrameParams:
    """Frame-level training parameters.

    g_len: frame length in blocks (must be a prime power so the row-wise
    allocation of Proposition-style constructions always completes).
    m_p: training symbols per block.  m: total symbols per block.
    n_d_max: cap on distinct sounding directions (RF-chain budget).
    rho: per-symbol training power.
    """

    g_len: int
    m_p: int
    m: int
    n_d_max: int
    rho: float

    def __post_init__(self):
        if self.g_len < 1 or not _is_prime_power(self.g_len):
            raise ValueError(f"frame length {self.g_len} is not a prime power")
        if self.m_p < 1:
            raise ValueError("m_p must be >= 1")
        if self.m <= self.m_p:
            raise ValueError("block length m must exceed m_p")
        if self.n_d_max < 1:
            raise ValueError("n_d_max must be >= 1")
        if self.rho < 0:
            raise ValueError("rho must be nonnegative")


def _is_prime_power(n: int) -> bool:
    if n == 1:
        return True
    for p in range(2, n + 1):
        if p * p > n:
            return True  # n itself is prime
        if n % p == 0:
            while n % p == 0:
                n //= p
            return n == 1
    return False


def divisor_set(g_len: int) -> list[int]:
    """Ascending divisors of the frame length."""
    if g_len < 1:
        raise ValueError("frame length must be >= 1")
    return [d for d in range(1, g_len + 1) if g_len % d == 0]


@dataclass(frozen=True)
class IntervalAssignment:
    """A feasible point of the design problem: nondecreasing intervals for
    the n_d strongest eigenmodes plus the achieved upper-envelope objective."""

    g: tuple
    n_d: int
    objective: float

    def g_padded(self, rank: int) -> np.ndarray:
        """Per-mode interval vector over all rank modes (0 = untrained)."""
        out = np.zeros(rank, dtype=int)
        out[: self.n_d] = self.g
        return out


def validate_assignment(asn: IntervalAssignment, frame: FrameParams, rank: int | None = None):
    """Structural checks; returns a list of violation strings (empty = ok)."""
    problems = []
    divisors = set(divisor_set(frame.g_len))
    if asn.n_d != len(asn.g):
        problems.append(f"n_d = {asn.n_d} but g has {len(asn.g)} entries")
    for gi in asn.g:
        if gi not in divisors:
            problems.append(f"interval {gi} does not divide G = {frame.g_len}")
    if list(asn.g) != sorted(asn.g):
        problems.append("g is not nondecreasing")
    # exact resource accounting: sum(1/g_i) = M_p via integer block counts
    if all(gi in divisors for gi in asn.g):
        used = sum(frame.g_len // gi for gi in asn.g)
        if used != frame.g_len * frame.m_p:
            problems.append(
                f"block budget mismatch: sum G/g_i = {used}, "
                f"need G*M_p = {frame.g_len * frame.m_p}"
            )
    n_d_cap = min(frame.g_len * frame.m_p, frame.n_d_max)
    if rank is not None:
        n_d_cap = min(n_d_cap, rank)
    if not (frame.m_p <= asn.n_d <= n_d_cap):
        problems.append(f"n_d = {asn.n_d} outside [{frame.m_p}, {n_d_cap}]")
    return problems


def _objective(lam: np.ndarray, a: float, rho: float, g: np.ndarray) -> float:
    """l1 norm of the upper steady-state envelope, untrained modes padded."""
    n_d = len(g)
    lower = min_ss_mse(lam[:n_d], a, rho, g)
    upper = max_ss_mse(lower, lam[:n_d], a, g)
    return float(np.sum(upper) + np.sum(lam[n_d:]))


def _feasible_n_d_range(lam, frame: FrameParams) -> tuple[int, int]:
    lam = np.asarray(lam)
    if lam.size and np.any(np.diff(lam) > 1e-9 * max(float(lam[0]), 1e-300)):
        raise ValueError("eigenvalue spectrum must be sorted descending")
    rank = len(lam)
    hi = min(frame.g_len * frame.m_p, frame.n_d_max, rank)
    lo = frame.m_p
    if lo > hi:
        raise ValueError(
            f"infeasible design: need M_p <= n_d <= min(G*M_p, N_d, r) "
            f"but M_p = {lo} and the cap is {hi}"
        )
    return lo, hi


def exhaustive_search(lam, a: float, rho: float, frame: FrameParams) -> IntervalAssignment:
    """Global minimizer of the upper-envelope objective over ordered designs.

    Enumerates every nondecreasing interval vector g in I_G**n_d with the
    exact budget sum(G/g_i) = G*M_p, for every admissible n_d.  Since both
    lam and g are sorted, positional pairing already assigns the smallest
    intervals to the strongest modes.  Ties break toward fewer sounded
    modes, then lexicographically smallest g.
    """
    lam = np.asarray(lam, dtype=float)
    lo, hi = _feasible_n_d_range(lam, frame)
    divisors = divisor_set(frame.g_len)
    budget = frame.g_len * frame.m_p
    cost = [frame.g_len // d for d in divisors]  # blocks consumed per use

    best = None
    # counts[i] = how many modes use divisors[i]; enumerate compositions of
    # the block budget with bounded total multiplicity
    def recurse(idx: int, counts: list[int], remaining: int, total: int):
        nonlocal best
        if total > hi:
            return
        if idx == len(divisors) - 1:
            # the largest divisor always costs G/G = 1 block per use when
            # divisors end at G; in general require exact divisibility
            c, rem = divmod(remaining, cost[idx])
            if rem != 0 or total + c > hi or total + c < lo:
                return
            counts = counts + [c]
            g = np.repeat(divisors, counts)
            if len(g) < lo:
                return
            obj = _objective(lam, a, rho, g)
            key = (obj, len(g), tuple(g))
            if best is None or key < best[0]:
                best = (key, g)
            return
        max_c = remaining // cost[idx]
        for c in range(max_c + 1):
            recurse(idx + 1, counts + [c], remaining - c * cost[idx], total + c)

    recurse(0, [], budget, 0)
    if best is None:
        raise ValueError("no feasible interval vector under the given frame")
    (obj, n_d, g_tuple), _ = best
    return IntervalAssignment(g=g_tuple, n_d=n_d, objective=obj)


def min_max_design(lam, a: float, rho: float, frame: FrameParams) -> IntervalAssignment:
    """Greedy design that repeatedly shortens the interval of the mode with
    the worst steady-state ceiling.

    State per mode: current interval (G+1 marks "not yet sounded"), its
    upper envelope, and an allocation flag.  Each round picks the candidate
    with the largest ceiling and the largest divisor strictly below its
    interval; the move is taken when the freed plus remaining block budget
    covers it, otherwise the mode is frozen out.  Runs in O(G * M_p) rounds.
    """
    lam = np.asarray(lam, dtype=float)
    lo, hi = _feasible_n_d_range(lam, frame)
    divisors = divisor_set(frame.g_len)
    n_cand = hi  # candidate modes: the hi strongest (never exceeds rank)

    g = np.full(n_cand, frame.g_len + 1, dtype=int)
    allocated = np.zeros(n_cand, dtype=bool)
    ceiling = lam[:n_cand].astype(float).copy()
    active = list(range(n_cand))
    n_blk = frame.g_len * frame.m_p

    while n_blk > 0:
        if not active:
            raise RuntimeError(
                "min-max design exhausted its candidates with blocks left; "
                "this cannot happen when N_d >= M_p"
            )
        i = max(active, key=lambda j: (ceiling[j], -j))
        smaller = [d for d in divisors if d < g[i]]
        if not smaller:
            active.remove(i)  # already at g = 1; nothing tighter exists
            continue
        d_star = smaller[-1]
        freed = frame.g_len // g[i] if allocated[i] else 0
        need = frame.g_len // d_star
        if n_blk + freed >= need:
            n_blk = n_blk + freed - need
            g[i] = d_star
            allocated[i] = True
            floor_i = min_ss_mse(lam[i], a, rho, d_star)
            ceiling[i] = max_ss_mse(floor_i, lam[i], a, d_star)
        else:
            active.remove(i)

    chosen = np.flatnonzero(allocated)
    g_out = g[chosen]
    order = np.argsort(g_out, kind="stable")
    g_sorted = g_out[order]
    if not np.array_equal(chosen, np.arange(len(chosen))):
        # allocation always proceeds from the strongest ceiling downward,
        # so the allocated set is a prefix of the candidate list
        raise RuntimeError("min-max design allocated a non-prefix mode set")
    asn = IntervalAssignment(
        g=tuple(int(x) for x in g_sorted),
        n_d=len(chosen),
        objective=_objective(lam, a, rho, g_sorted),
    )
    problems = validate_assignment(asn, frame, rank=len(lam))
    if problems:
        raise RuntimeError("min-max design produced an invalid assignment: " + "; ".join(problems))
    return asn


@dataclass(frozen=True)
class SequenceMatrix:
    """G x M_p matrix of 1-based eigenmode indices; row ell lists the modes
    sounded during block ell's training period."""

    c: np.ndarray
    g: tuple  # the interval vector the matrix realizes
    n_d: int

    @property
    def frame_len(self) -> int:
        return self.c.shape[0]

    @property
    def m_p(self) -> int:
        return self.c.shape[1]

    def row(self, block: int) -> np.ndarray:
        """Training-mode indices for an absolute block index (periodic)."""
        return self.c[block % self.frame_len]


def sequence_invariant_violations(c: np.ndarray, g, frame: FrameParams):
    """Check the structural invariants of an index matrix against g.

    Returns a list of violation strings: rows must hold M_p distinct
    entries; index i must appear exactly G/g_i times inside one fixed
    column, at rows forming an arithmetic progression of step g_i; and the
    entries must cover exactly 1..n_d.
    """
    problems = []
    g_len, m_p = c.shape
    if g_len != frame.g_len or m_p != frame.m_p:
        problems.append(f"shape {c.shape} != ({frame.g_len}, {frame.m_p})")
        return problems
    n_d = len(g)
    values = set(int(v) for v in c.ravel())
    if values != set(range(1, n_d + 1)):
        problems.append(f"entries cover {sorted(values)} instead of 1..{n_d}")
        return problems
    for row in c:
        if len(set(int(v) for v in row)) != m_p:
            problems.append(f"row {row} repeats an index")
    for i in range(1, n_d + 1):
        rows, cols = np.nonzero(c == i)
        expected = frame.g_len // g[i - 1]
        if len(rows) != expected:
            problems.append(f"index {i} appears {len(rows)} times, expected {expected}")
            continue
        if len(set(cols.tolist())) != 1:
            problems.append(f"index {i} appears in multiple columns {sorted(set(cols.tolist()))}")
        if len(rows) > 1:
            steps = np.diff(np.sort(rows))
            if not np.all(steps == g[i - 1]):
                problems.append(f"index {i} rows {sorted(rows.tolist())} not {g[i-1]}-periodic")
    return problems


def construct_sequence_matrix(asn: IntervalAssignment, frame: FrameParams) -> SequenceMatrix:
    """Row-wise iterative allocation of mode indices into the index matrix.

    Walks the rows keeping a fresh-index counter; at each row the first
    still-empty column and its right neighbours receive consecutive new
    indices, each replicated down its column at the stride given by its
    interval.  Completion for every feasible ordered assignment is
    guaranteed by the prime-power frame length.
    """
    problems = validate_assignment(asn, frame)
    if problems:
        raise ValueError("invalid assignment: " + "; ".join(problems))
    g_len, m_p = frame.g_len, frame.m_p
    c = np.zeros((g_len, m_p), dtype=int)
    next_index = 1
    for q in range(g_len):
        empty = np.flatnonzero(c[q] == 0)
        if empty.size == 0:
            continue
        j_first = int(empty[0])
        if not np.all(c[q, j_first:] == 0):
            raise RuntimeError(
                "construction met a determined entry right of the first empty "
                "column; assignment should not have passed validation"
            )
        for j in range(j_first, m_p):
            idx = next_index + (j - j_first)
            if idx > asn.n_d:
                raise RuntimeError("construction ran out of mode indices")
            stride = asn.g[idx - 1]
            rows = np.arange(q, g_len, stride)
            if len(rows) != g_len // stride or np.any(c[rows, j] != 0):
                raise RuntimeError(
                    f"column {j} cannot host index {idx} at stride {stride}"
                )
            c[rows, j] = idx
        next_index += m_p - j_first
    if np.any(c == 0) or next_index != asn.n_d + 1:
        raise RuntimeError("construction terminated with undetermined entries")
    seq = SequenceMatrix(c=c, g=asn.g, n_d=asn.n_d)
    problems = sequence_invariant_violations(c, asn.g, frame)
    if problems:
        raise RuntimeError("constructed matrix violates invariants: " + "; ".join(problems))
    return seq


def expand_training_signals(seq: SequenceMatrix, basis: np.ndarray, rho: float):
    """Per-block training matrices S_0..S_{G-1} with columns sqrt(rho) times
    the basis columns named by the index matrix (1-based)."""
    if seq.n_d > basis.shape[1]:
        raise ValueError(
            f"index matrix references {seq.n_d} basis columns, only "
            f"{basis.shape[1]} available"
        )
    scale = np.sqrt(rho)
    return [scale * basis[:, seq.c[ell] - 1] for ell in range(seq.frame_len)]


def save_sequence_csv(path, seq: SequenceMatrix, frame: FrameParams) -> None:
    """Plain-text serialization: one header line, then G rows of M_p
    1-based integer indices."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(sequence_csv_text(seq, frame))


def sequence_csv_text(seq: SequenceMatrix, frame: FrameParams) -> str:
    buf = io.StringIO()
    g_list = ",".join(str(x) for x in seq.g)
    buf.write(f"# G={frame.g_len} Mp={frame.m_p} nd={seq.n_d} g={g_list}\n")
    for row in seq.c:
        buf.write(",".join(str(int(v)) for v in row) + "\n")
    return buf.getvalue()


def load_sequence_csv(path) -> SequenceMatrix:
    """Inverse of save_sequence_csv."""
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip()
        if not header.startswith("# "):
            raise ValueError("missing header line")
        fields = dict(kv.split("=", 1) for kv in header[2:].split())
        g = tuple(int(x) for x in fields["g"].split(","))
        rows = [
            [int(v) for v in line.strip().split(",")]
            for line in fh
            if line.strip()
        ]
    c = np.asarray(rows, dtype=int)
    return SequenceMatrix(c=c, g=g, n_d=int(fields["nd"]))
