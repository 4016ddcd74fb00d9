"""Per-column statistics and cleaned value samples.

Feeds semantics inference and join inference. Everything is a pure function
of (table contents, seed), so profiles are bit-reproducible.
"""

from __future__ import annotations

import hashlib
import math
import statistics
from dataclasses import dataclass, field
from typing import Any, Iterable, Optional

from .connect import BOOLEAN, DATE, NUMERIC, STRING, Connection, TableRef


VALUE_SET_CAP = 1000


@dataclass
class ColumnProfile:
    table: TableRef
    column: str
    data_type: str
    count: int = 0
    distinct_estimate: float = 0.0
    distinct_is_exact: bool = True
    nulls: int = 0
    min: Optional[Any] = None
    max: Optional[Any] = None
    mean: Optional[float] = None
    stddev: Optional[float] = None
    cleaned_sample: list = field(default_factory=list)
    raw_sample_size: int = 0
    # full distinct value set of low-cardinality string columns (the length
    # fence on cleaned_sample can drop legitimate short/long category values)
    distinct_values: list = field(default_factory=list)

    @property
    def distinct_ratio(self) -> float:
        non_null = self.count - self.nulls
        return self.distinct_estimate / non_null if non_null > 0 else 0.0


def _quartiles(values: list[float]) -> tuple[float, float]:
    """Type-7 quartiles: linear interpolation between order statistics."""
    data = sorted(values)
    n = len(data)
    if n == 1:
        return float(data[0]), float(data[0])

    def at(q: float) -> float:
        pos = (n - 1) * q
        lo = math.floor(pos)
        hi = math.ceil(pos)
        return data[lo] + (pos - lo) * (data[hi] - data[lo])

    return at(0.25), at(0.75)


def _fence_pass(values: list, measure) -> list:
    q1, q3 = _quartiles([measure(v) for v in values])
    iqr = q3 - q1
    lo, hi = q1 - 1.5 * iqr, q3 + 1.5 * iqr
    return [v for v in values if lo <= measure(v) <= hi]


def clean_values(values: list, data_type: str) -> list:
    """Outlier removal via Tukey fences (1.5·IQR).

    Numeric values are fenced directly, strings by their length; dates and
    booleans pass through minus nulls. The fence is iterated to a fixpoint so
    the operation is idempotent; if it would empty the list, the original
    non-null list is returned instead.
    """
    non_null = [v for v in values if v is not None]
    if not non_null:
        return []
    if data_type == NUMERIC:
        measure = float
    elif data_type == STRING:
        measure = lambda v: float(len(str(v)))  # noqa: E731
    else:
        return non_null
    kept = non_null
    while True:
        nxt = _fence_pass(kept, measure)
        if not nxt:
            return non_null
        if len(nxt) == len(kept):
            return nxt
        kept = nxt


class DistinctSketch:
    """HyperLogLog cardinality sketch with 64-bit hashing.

    precision p in [4,16] gives m=2^p registers; relative error ~1.04/sqrt(m)
    (0.8% at the default p=14). Merge is register-wise max, so sketches are
    merge-associative and estimate set unions.
    """

    def __init__(self, precision: int = 14):
        if not 4 <= precision <= 16:
            raise ValueError("precision must be in [4, 16]")
        self.precision = precision
        self.m = 1 << precision
        self.registers = bytearray(self.m)

    def add(self, value: Any) -> None:
        h = int.from_bytes(
            hashlib.blake2b(repr(value).encode(), digest_size=8).digest(), "big"
        )
        idx = h >> (64 - self.precision)
        tail_bits = 64 - self.precision
        tail = h & ((1 << tail_bits) - 1)
        rank = tail_bits - tail.bit_length() + 1
        if rank > self.registers[idx]:
            self.registers[idx] = rank

    def update(self, values: Iterable[Any]) -> "DistinctSketch":
        for v in values:
            self.add(v)
        return self

    def merge(self, other: "DistinctSketch") -> "DistinctSketch":
        if other.precision != self.precision:
            raise ValueError("cannot merge sketches of different precision")
        out = DistinctSketch(self.precision)
        out.registers = bytearray(
            max(a, b) for a, b in zip(self.registers, other.registers)
        )
        return out

    def estimate(self) -> float:
        m = self.m
        if m >= 128:
            alpha = 0.7213 / (1 + 1.079 / m)
        else:
            alpha = {16: 0.673, 32: 0.697, 64: 0.709}[m]
        harmonic = sum(2.0 ** -r for r in self.registers)
        raw = alpha * m * m / harmonic
        zeros = self.registers.count(0)
        if raw <= 2.5 * m and zeros:
            return m * math.log(m / zeros)
        return raw


def approx_distinct(values: Iterable[Any], precision: int = 14) -> float:
    """Probabilistic distinct count of a value stream (empty stream -> 0)."""
    sketch = DistinctSketch(precision)
    saw = False
    for v in values:
        saw = True
        sketch.add(v)
    return sketch.estimate() if saw else 0.0


def _column_seed(seed: int, table: str, column: str) -> int:
    digest = hashlib.blake2b(
        f"{seed}|{table}|{column}".encode(), digest_size=8
    ).digest()
    return int.from_bytes(digest, "big")


def profile_table(
    conn: Connection,
    table: TableRef | str,
    sample_size: int = 100_000,
    seed: int = 0,
) -> list[ColumnProfile]:
    """One profile per visible column; exact counts pushed down to the store,
    distribution statistics computed on the seeded sample."""
    name = table.name if isinstance(table, TableRef) else table
    ref = table if isinstance(table, TableRef) else TableRef(conn.spec.id, table)
    sample_size = min(max(sample_size, 1), 1_000_000)
    count = conn.count_rows(name)
    profiles = []
    for column, data_type in conn.visible_columns(name):
        q = conn.execute_sql(
            f'SELECT COUNT("{column}"), MIN("{column}"), MAX("{column}") FROM "{name}"',
            row_limit=1,
        )
        non_null, vmin, vmax = q.rows[0] if q.rows else (0, None, None)
        profile = ColumnProfile(
            table=ref,
            column=column,
            data_type=data_type,
            count=count,
            nulls=count - non_null,
            min=vmin,
            max=vmax,
        )
        if count:
            batch = conn.fetch_sample(
                name, column, max_rows=sample_size, seed=_column_seed(seed, name, column)
            )
            values = [r[0] for r in batch.rows]
            profile.raw_sample_size = len(values)
            sample_non_null = [v for v in values if v is not None]
            if count <= sample_size:
                exact = conn.execute_sql(
                    f'SELECT COUNT(DISTINCT "{column}") FROM "{name}"', row_limit=1
                ).rows[0][0]
                profile.distinct_estimate = float(exact)
                profile.distinct_is_exact = True
            else:
                est = approx_distinct(sample_non_null)
                profile.distinct_estimate = min(float(count), est)
                profile.distinct_is_exact = False
            if data_type == NUMERIC and sample_non_null:
                profile.mean = statistics.fmean(sample_non_null)
                profile.stddev = statistics.pstdev(sample_non_null)
            profile.cleaned_sample = clean_values(sample_non_null, data_type)
            if data_type == STRING and profile.distinct_estimate <= VALUE_SET_CAP:
                profile.distinct_values = sorted({str(v) for v in sample_non_null})
        if profile.count == profile.nulls:
            profile.min = profile.max = None
        profiles.append(profile)
    return profiles
