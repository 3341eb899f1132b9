"""Curve file format: diff-able CSV with bit-exact float round trips.

Layout:

    #feqt-curves v1; grid=t1,t2,...
    group,channel,breath,v1,...,vT

Floats are serialized with ``repr``, the shortest decimal that round-trips
to the same double, so ``read(write(x)) == x`` exactly.
"""

from __future__ import annotations

import numpy as np

from .fdata import (
    FunctionalSample,
    Grid,
    GroupedPairedSample,
    PairedFunctionalSample,
    ValidationError,
)

_HEADER_PREFIX = "#feqt-curves v1; grid="


class CurveFileError(ValueError):
    """Malformed curve file; message names the offending line."""


def _fmt(values) -> str:
    return ",".join(repr(float(v)) for v in values)


def write_curves_text(sample) -> str:
    """Serialize a sample to the curve file text format."""
    lines = [_HEADER_PREFIX + _fmt(sample.grid.points)]

    def emit(group, channel, breath, row):
        lines.append(f"{group},{channel},{breath}," + _fmt(row))

    if isinstance(sample, GroupedPairedSample):
        for gi, g in enumerate(sample.groups, start=1):
            for bi in range(g.n):
                emit(gi, 1, bi + 1, g.curves_1[bi])
                emit(gi, 2, bi + 1, g.curves_2[bi])
    elif isinstance(sample, PairedFunctionalSample):
        for bi in range(sample.n):
            emit(1, 1, bi + 1, sample.curves_1[bi])
            emit(1, 2, bi + 1, sample.curves_2[bi])
    elif isinstance(sample, FunctionalSample):
        for bi in range(sample.curves.shape[0]):
            emit(1, 1, bi + 1, sample.curves[bi])
    else:
        raise TypeError(f"cannot serialize {type(sample).__name__}")
    return "\n".join(lines) + "\n"


def write_curves(sample, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(write_curves_text(sample))


def _parse_floats(text, lineno, expect=None):
    try:
        vals = np.array([float(x) for x in text.split(",")], dtype=float)
    except ValueError as exc:
        raise CurveFileError(f"line {lineno}: bad float ({exc})") from None
    if expect is not None and vals.size != expect:
        raise CurveFileError(f"line {lineno}: expected {expect} values, got {vals.size}")
    return vals


def read_curves_text(text: str, kind: str = None):
    """Parse curve file text; see :func:`read_curves`."""
    lines = text.splitlines()
    if not lines or not lines[0].startswith(_HEADER_PREFIX):
        raise CurveFileError(f"line 1: missing header {_HEADER_PREFIX!r}...")
    grid = Grid(_parse_floats(lines[0][len(_HEADER_PREFIX):], 1))
    T = len(grid)

    rows = {}  # (group, breath, channel) -> values
    order = []  # first-appearance order of (group, breath)
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split(",", 3)
        if len(parts) != 4:
            raise CurveFileError(f"line {lineno}: expected group,channel,breath,values")
        try:
            group, channel, breath = (int(p) for p in parts[:3])
        except ValueError:
            raise CurveFileError(f"line {lineno}: group/channel/breath must be integers") from None
        if channel not in (1, 2):
            raise CurveFileError(f"line {lineno}: channel must be 1 or 2, got {channel}")
        key = (group, breath, channel)
        if key in rows:
            raise CurveFileError(f"line {lineno}: duplicate row for group {group}, "
                                 f"channel {channel}, breath {breath}")
        rows[key] = (_parse_floats(parts[3], lineno, T), lineno)
        if (group, breath) not in order:
            order.append((group, breath))
    if not rows:
        raise CurveFileError("file contains no curve rows")

    channels = {c for (_, _, c) in rows}
    paired = 2 in channels
    if paired:
        for group, breath in order:
            for c in (1, 2):
                if (group, breath, c) not in rows:
                    other = rows[(group, breath, 3 - c)][1]
                    raise CurveFileError(
                        f"line {other}: group {group} breath {breath} has channel "
                        f"{3 - c} but no channel {c} row"
                    )

    group_ids = sorted({g for (g, _) in order})
    if kind is None:
        kind = "grouped" if len(group_ids) > 1 else ("paired" if paired else "single")
    if kind not in ("grouped", "paired", "single"):
        raise ValueError(f"unknown kind {kind!r}")

    def channel_matrix(group, channel):
        breaths = [b for (g, b) in order if g == group]
        return np.array([rows[(group, b, channel)][0] for b in breaths])

    try:
        if kind == "grouped":
            if not paired:
                raise CurveFileError("grouped samples need both channels")
            groups = tuple(
                PairedFunctionalSample(grid, channel_matrix(g, 1), channel_matrix(g, 2))
                for g in group_ids
            )
            return GroupedPairedSample(grid, groups)
        if kind == "paired":
            if not paired:
                raise CurveFileError("paired sample needs both channels")
            if len(group_ids) > 1:
                raise CurveFileError("paired sample cannot span multiple groups")
            g = group_ids[0]
            return PairedFunctionalSample(grid, channel_matrix(g, 1), channel_matrix(g, 2))
        if paired or len(group_ids) > 1:
            raise CurveFileError("single sample must have one group and channel 1 only")
        return FunctionalSample(grid, channel_matrix(group_ids[0], 1))
    except ValidationError as exc:
        raise CurveFileError(str(exc)) from exc


def read_curves(path, kind: str = None):
    """Read a curve file; the sample shape is inferred from the rows.

    Multiple groups give a :class:`GroupedPairedSample`, one group with both
    channels a :class:`PairedFunctionalSample`, channel 1 only a
    :class:`FunctionalSample`. Pass ``kind`` ("grouped", "paired", "single")
    to demand a shape instead; a 1-group file read as "grouped" fails the
    A >= 2 validation with a clear message.
    """
    with open(path, "r", encoding="utf-8") as fh:
        return read_curves_text(fh.read(), kind=kind)
