"""Binary stream files of observations with an optional terminal flag per record.

Layout (little-endian)::

    magic      8 bytes  b"CCNSTRM\\0"
    version    u16
    flags      u16      bit 0: records carry a terminal byte, bit 1: cumulant clipped
    width      u32      observation width
    count      u64      number of records
    cum_index  i32      index of the cumulant inside the observation, -1 = last
    meta_len   u32
    meta       meta_len bytes of UTF-8
    records    count * (8 * width [+ 1]) bytes

Every record is ``width`` float64 values followed, when flagged, by one byte
that is 1 on the last record of an episode.
"""

from __future__ import annotations

import csv
import os
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

MAGIC = b"CCNSTRM\0"
VERSION = 1
FLAG_TERMINAL = 1
FLAG_CLIPPED = 2
_FIXED = struct.Struct("<8sHHIQiI")


class StreamFormatError(ValueError):
    pass


class BadMagic(StreamFormatError):
    pass


class TruncatedStream(StreamFormatError):
    pass


class WidthMismatch(StreamFormatError):
    pass


@dataclass
class StepRecord:
    observation: np.ndarray
    cumulant: float
    terminal: bool = False


@dataclass
class StreamHeader:
    width: int
    count: int = 0
    has_terminal: bool = False
    clipped: bool = False
    cumulant_index: int = -1
    meta: str = ""
    version: int = VERSION

    def __post_init__(self):
        if self.width < 1:
            raise StreamFormatError("width must be >= 1")
        if self.count < 0:
            raise StreamFormatError("count must be >= 0")
        if not -self.width <= self.cumulant_index < self.width:
            raise StreamFormatError("cumulant index outside the observation")

    @property
    def cumulant_column(self):
        return self.cumulant_index % self.width

    @property
    def record_size(self):
        return 8 * self.width + (1 if self.has_terminal else 0)

    @property
    def flags(self):
        return (FLAG_TERMINAL if self.has_terminal else 0) | (FLAG_CLIPPED if self.clipped else 0)

    def pack(self):
        meta = self.meta.encode("utf-8")
        return _FIXED.pack(MAGIC, self.version, self.flags, self.width, self.count,
                           self.cumulant_index, len(meta)) + meta

    @property
    def size(self):
        return _FIXED.size + len(self.meta.encode("utf-8"))


def _record_dtype(header):
    fields = [("obs", "<f8", (header.width,))]
    if header.has_terminal:
        fields.append(("term", "u1"))
    return np.dtype(fields)


def read_header(fh) -> StreamHeader:
    raw = fh.read(_FIXED.size)
    if len(raw) < 8 or raw[:8] != MAGIC:
        raise BadMagic("not a stream file (bad magic)")
    if len(raw) < _FIXED.size:
        raise TruncatedStream("header is truncated")
    magic, version, flags, width, count, cum_index, meta_len = _FIXED.unpack(raw)
    if version != VERSION:
        raise StreamFormatError(f"unsupported stream version {version}")
    meta = fh.read(meta_len)
    if len(meta) < meta_len:
        raise TruncatedStream("metadata is truncated")
    return StreamHeader(width=width, count=count, has_terminal=bool(flags & FLAG_TERMINAL),
                        clipped=bool(flags & FLAG_CLIPPED), cumulant_index=cum_index,
                        meta=meta.decode("utf-8"), version=version)


def write_arrays(path, obs, terminal=None, *, cumulant_index=-1, meta="", clip=False):
    """Write an observation matrix (T, width) and optional terminal flags.

    With ``clip`` the cumulant column is clipped to [-1, 1] and the header says so.
    """
    obs = np.array(obs, dtype=np.float64, ndmin=2)
    if obs.ndim != 2:
        raise StreamFormatError("observations must be a 2-D array")
    header = StreamHeader(width=obs.shape[1], count=obs.shape[0],
                          has_terminal=terminal is not None, clipped=bool(clip),
                          cumulant_index=cumulant_index, meta=meta)
    if clip:
        col = header.cumulant_column
        obs[:, col] = np.clip(obs[:, col], -1.0, 1.0)
    rec = np.zeros(obs.shape[0], dtype=_record_dtype(header))
    rec["obs"] = obs
    if terminal is not None:
        rec["term"] = np.asarray(terminal, dtype=bool).reshape(obs.shape[0])
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(header.pack())
        fh.write(rec.tobytes())
        fh.flush()
        os.fsync(fh.fileno())
    return header


def write_stream(path, header: StreamHeader, records):
    """Write ``records`` (StepRecord items); ``header.count`` is set from the data."""
    records = list(records)
    obs = np.array([np.asarray(r.observation, dtype=np.float64) for r in records])
    obs = obs.reshape(len(records), header.width)
    term = [bool(r.terminal) for r in records] if header.has_terminal else None
    if not header.has_terminal and any(r.terminal for r in records):
        raise StreamFormatError("records carry terminal flags but the header has none")
    return write_arrays(path, obs, term, cumulant_index=header.cumulant_index,
                        meta=header.meta, clip=header.clipped)


class StreamReader:
    """Random-access view of a stream file backed by a memory map."""

    def __init__(self, path, width=None):
        self.path = Path(path)
        with open(self.path, "rb") as fh:
            self.header = read_header(fh)
        h = self.header
        if width is not None and width != h.width:
            raise WidthMismatch(f"stream width {h.width}, expected {width}")
        need = h.size + h.count * h.record_size
        have = self.path.stat().st_size
        if have < need:
            raise TruncatedStream(f"stream declares {h.count} records but holds "
                                  f"{(have - h.size) // h.record_size}")
        if h.count:
            self._rec = np.memmap(self.path, dtype=_record_dtype(h), mode="r",
                                  offset=h.size, shape=(h.count,))
        else:
            self._rec = np.zeros(0, dtype=_record_dtype(h))

    def __len__(self):
        return self.header.count

    def block(self, start=0, stop=None):
        """(observations, cumulants, terminals) for records ``start:stop``."""
        rec = self._rec[start:stop]
        obs = np.array(rec["obs"], dtype=np.float64).reshape(len(rec), self.header.width)
        cum = obs[:, self.header.cumulant_column].copy()
        if self.header.has_terminal:
            term = np.array(rec["term"], dtype=bool)
        else:
            term = np.zeros(len(rec), dtype=bool)
        return obs, cum, term

    def __getitem__(self, t):
        if not -len(self) <= t < len(self):
            raise IndexError(t)
        obs, cum, term = self.block(t % len(self), t % len(self) + 1)
        return StepRecord(obs[0], float(cum[0]), bool(term[0]))

    def __iter__(self):
        for start in range(0, len(self), 65536):
            obs, cum, term = self.block(start, start + 65536)
            for i in range(len(obs)):
                yield StepRecord(obs[i], float(cum[i]), bool(term[i]))

    def close(self):
        self._rec = None


def read_stream(path, width=None):
    """Iterate over the records of a stream file."""
    return iter(StreamReader(path, width))


def import_csv(csv_path, out_path, *, cumulant_index=-1, terminal_column=None, clip=False,
               meta=""):
    """Convert a CSV of numbers (optional header row) to a stream file.

    ``terminal_column`` names a column (index) holding 0/1 episode-end flags; it
    is removed from the observation.
    """
    rows = []
    with open(csv_path, newline="") as fh:
        for row in csv.reader(fh):
            if not row or row[0].startswith("#"):
                continue
            try:
                rows.append([float(v) for v in row])
            except ValueError:
                if rows:
                    raise StreamFormatError(f"non-numeric row {row!r}")
    if not rows:
        raise StreamFormatError("CSV holds no numeric rows")
    widths = {len(r) for r in rows}
    if len(widths) != 1:
        raise WidthMismatch(f"CSV rows have differing widths {sorted(widths)}")
    data = np.array(rows, dtype=np.float64)
    term = None
    if terminal_column is not None:
        term = data[:, terminal_column] != 0
        data = np.delete(data, terminal_column, axis=1)
    return write_arrays(out_path, data, term, cumulant_index=cumulant_index, meta=meta,
                        clip=clip)
