"""Trace files and synthetic traces with controllable intensity and locality."""
from __future__ import annotations

import gzip
import io
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .dram_core import Geometry
from .errors import RangeError, TraceParseError
from .memsim import Trace, decode_columns
from .policies import WorkloadClass, classify
from .seeding import as_rng

__all__ = ["SynthParams", "load_trace", "save_trace", "synthesize_trace", "trace_row_hit_rate", "classify",
           "WorkloadClass"]


def _open_text(path: Path):
    with open(path, "rb") as fh:
        magic = fh.read(2)
    if magic == b"\x1f\x8b":
        return io.TextIOWrapper(gzip.open(path, "rb"), encoding="utf-8")
    return open(path, encoding="utf-8")


def load_trace(path) -> Trace:
    """Parse ``<insn_gap> <R|W> <hex address>`` lines; blank lines and ``#`` comments are skipped."""
    path = Path(path)
    gaps, wr, addrs = [], [], []
    with _open_text(path) as fh:
        for lineno, line in enumerate(fh, 1):
            s = line.strip()
            if not s or s.startswith("#"):
                continue
            parts = s.split()
            if len(parts) != 3:
                raise TraceParseError(path, lineno, f"expected 3 fields, got {len(parts)}")
            g, k, a = parts
            try:
                gap = int(g)
            except ValueError:
                raise TraceParseError(path, lineno, f"bad instruction gap {g!r}") from None
            if gap < 0:
                raise TraceParseError(path, lineno, "instruction gap must be >= 0")
            if k not in ("R", "W"):
                raise TraceParseError(path, lineno, f"request kind must be R or W, got {k!r}")
            try:
                addr = int(a, 16)
            except ValueError:
                raise TraceParseError(path, lineno, f"bad hex address {a!r}") from None
            if addr < 0:
                raise TraceParseError(path, lineno, "address must be >= 0")
            gaps.append(gap)
            wr.append(k == "W")
            addrs.append(addr)
    return Trace(np.array(gaps, dtype=np.int64), np.array(wr, dtype=bool), np.array(addrs, dtype=np.int64),
                 name=path.name)


def save_trace(trace: Trace, path) -> None:
    path = Path(path)
    lines = [f"{g} {'W' if w else 'R'} {a:#x}\n"
             for g, w, a in zip(trace.gaps.tolist(), trace.is_write.tolist(), trace.addrs.tolist())]
    data = "".join(lines).encode("utf-8")
    if path.suffix == ".gz":
        # fixed mtime keeps the archive byte-reproducible
        with open(path, "wb") as raw, gzip.GzipFile(fileobj=raw, mode="wb", mtime=0) as fh:
            fh.write(data)
    else:
        path.write_bytes(data)


@dataclass(frozen=True)
class SynthParams:
    target_mpki: float = 20.0
    row_buffer_hit_rate: float = 0.5
    bank_spread: int = 8
    read_fraction: float = 0.7
    instruction_count: int = 1_000_000
    seed: int = 0

    def __post_init__(self):
        if self.target_mpki < 0:
            raise RangeError("target_mpki must be >= 0")
        for name in ("row_buffer_hit_rate", "read_fraction"):
            if not 0 <= getattr(self, name) <= 1:
                raise RangeError(f"{name} must be in [0, 1]")
        if self.bank_spread < 1 or self.instruction_count < 1:
            raise RangeError("bank_spread and instruction_count must be >= 1")

    def to_dict(self) -> dict:
        return asdict(self)


def synthesize_trace(p: SynthParams, geo: Geometry | None = None, name: str = "") -> Trace:
    """Random post-LLC request stream.

    Request instants are uniform over the instruction window, the last one
    falling on its final instruction so the trace covers exactly
    ``instruction_count`` instructions. Each request goes to one of
    ``bank_spread`` banks; with probability ``row_buffer_hit_rate`` it reuses
    that bank's previous row, otherwise it picks a uniform random row.
    """
    geo = geo or Geometry()
    if p.bank_spread > geo.num_banks:
        raise RangeError(f"bank_spread {p.bank_spread} exceeds {geo.num_banks} banks")
    rng = as_rng(p.seed)
    n = int(round(p.instruction_count * p.target_mpki / 1000.0))
    if n == 0:
        return Trace.empty(name)
    n = min(n, p.instruction_count)
    pos = np.sort(rng.choice(p.instruction_count - 1, size=n - 1, replace=False) + 1) if n > 1 else np.zeros(0, np.int64)
    pos = np.append(pos, p.instruction_count)
    gaps = np.diff(pos, prepend=0)
    banks = rng.choice(geo.num_banks, size=p.bank_spread, replace=False)
    which = banks[rng.integers(p.bank_spread, size=n)]
    reuse = rng.random(n) < p.row_buffer_hit_rate
    fresh = rng.integers(geo.rows_per_bank, size=n)
    rows = np.empty(n, dtype=np.int64)
    last = np.full(geo.num_banks, -1, dtype=np.int64)
    for i, (b, r, f) in enumerate(zip(which.tolist(), reuse.tolist(), fresh.tolist())):
        row = last[b] if r and last[b] >= 0 else f
        rows[i] = row
        last[b] = row
    cols = rng.integers(geo.columns_per_row, size=n)
    is_write = rng.random(n) >= p.read_fraction
    rank = which // geo.banks_per_rank
    bank = which % geo.banks_per_rank
    line = ((rows * geo.ranks_per_channel + rank) * geo.banks_per_rank + bank) * geo.columns_per_row + cols
    return Trace(gaps, is_write, line * geo.cache_line_bytes, name)


def trace_row_hit_rate(trace: Trace, geo: Geometry | None = None) -> float:
    """Fraction of requests addressing the row their bank touched last (infinite-queue view)."""
    geo = geo or Geometry()
    if len(trace) == 0:
        return 0.0
    bank, row, _ = decode_columns(trace.addrs, geo)
    last = {}
    hits = 0
    for b, r in zip(bank.tolist(), row.tolist()):
        if last.get(b) == r:
            hits += 1
        last[b] = r
    return hits / len(trace)
