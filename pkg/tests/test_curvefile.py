import numpy as np
import pytest

from feqt.curvefile import (
    CurveFileError,
    read_curves,
    read_curves_text,
    write_curves,
    write_curves_text,
)
from feqt.fdata import (
    FunctionalSample,
    GroupedPairedSample,
    PairedFunctionalSample,
    equispaced_grid,
)

from conftest import make_grouped


def header_and_rows(text):
    lines = text.splitlines()
    return lines[0], lines[1:]


class TestRoundTrip:
    def test_grouped_bit_exact(self, rng):
        data = make_grouped(rng, n_groups=3, group_size=4, n_points=7)
        text = write_curves_text(data)
        back = read_curves_text(text)
        assert isinstance(back, GroupedPairedSample)
        np.testing.assert_array_equal(back.grid.points, data.grid.points)
        for g0, g1 in zip(data.groups, back.groups):
            np.testing.assert_array_equal(g0.curves_1, g1.curves_1)
            np.testing.assert_array_equal(g0.curves_2, g1.curves_2)
        # and the text itself is stable under a second round trip
        assert write_curves_text(back) == text

    def test_paired_bit_exact(self, rng):
        grid = equispaced_grid(5)
        data = PairedFunctionalSample(
            grid, rng.normal(size=(6, 5)), rng.normal(size=(6, 5))
        )
        back = read_curves_text(write_curves_text(data))
        assert isinstance(back, PairedFunctionalSample)
        np.testing.assert_array_equal(back.curves_1, data.curves_1)
        np.testing.assert_array_equal(back.curves_2, data.curves_2)

    def test_single_bit_exact(self, rng):
        grid = equispaced_grid(4)
        data = FunctionalSample(grid, rng.normal(size=(3, 4)))
        back = read_curves_text(write_curves_text(data))
        assert isinstance(back, FunctionalSample)
        np.testing.assert_array_equal(back.curves, data.curves)

    def test_file_round_trip(self, rng, tmp_path):
        data = make_grouped(rng, n_groups=2, group_size=3, n_points=4)
        path = tmp_path / "curves.csv"
        write_curves(data, path)
        back = read_curves(path)
        np.testing.assert_array_equal(back.stacked(), data.stacked())

    def test_awkward_floats_survive(self):
        grid = equispaced_grid(3)
        vals = np.array([[0.1, 1e-300, -1.2345678901234567]])
        data = FunctionalSample(grid, vals)
        back = read_curves_text(write_curves_text(data))
        np.testing.assert_array_equal(back.curves, vals)

    def test_header_contains_grid(self, rng):
        data = make_grouped(rng, n_groups=2, group_size=2, n_points=3)
        header, rows = header_and_rows(write_curves_text(data))
        assert header.startswith("#feqt-curves v1; grid=")
        assert len(rows) == 2 * 2 * 2  # groups x breaths x channels


def small_text():
    grid = equispaced_grid(3)
    rng = np.random.default_rng(0)
    data = make_grouped(rng, n_groups=2, group_size=2, n_points=3)
    return write_curves_text(data)


class TestErrors:
    def test_missing_header(self):
        with pytest.raises(CurveFileError, match="line 1: missing header"):
            read_curves_text("1,1,1,0.0,0.0\n")

    def test_bad_channel_line_number(self):
        text = small_text()
        lines = text.splitlines()
        parts = lines[2].split(",")
        parts[1] = "3"
        lines[2] = ",".join(parts)
        with pytest.raises(CurveFileError, match="line 3: channel must be 1 or 2"):
            read_curves_text("\n".join(lines) + "\n")

    def test_orphan_channel_row(self):
        text = small_text()
        lines = [l for l in text.splitlines() if not l.startswith("1,2,1,")]
        with pytest.raises(CurveFileError, match="channel 1 but no channel 2"):
            read_curves_text("\n".join(lines) + "\n")

    def test_duplicate_row(self):
        lines = small_text().splitlines()
        lines.append(lines[1])
        lineno = len(lines)
        with pytest.raises(CurveFileError, match=f"line {lineno}: duplicate row"):
            read_curves_text("\n".join(lines) + "\n")

    def test_bad_float(self):
        lines = small_text().splitlines()
        lines[2] = lines[2].rsplit(",", 1)[0] + ",oops"
        with pytest.raises(CurveFileError, match="line 3: bad float"):
            read_curves_text("\n".join(lines) + "\n")

    def test_wrong_value_count(self):
        lines = small_text().splitlines()
        lines[1] = lines[1] + ",9.0"
        with pytest.raises(CurveFileError, match="line 2: expected 3 values, got 4"):
            read_curves_text("\n".join(lines) + "\n")

    def test_non_integer_ids(self):
        lines = small_text().splitlines()
        lines[1] = "a" + lines[1][1:]
        with pytest.raises(CurveFileError, match="must be integers"):
            read_curves_text("\n".join(lines) + "\n")

    def test_empty_body(self):
        header = small_text().splitlines()[0]
        with pytest.raises(CurveFileError, match="no curve rows"):
            read_curves_text(header + "\n")

    def test_one_group_as_grouped_fails_clearly(self, rng):
        grid = equispaced_grid(3)
        data = PairedFunctionalSample(
            grid, rng.normal(size=(2, 3)), rng.normal(size=(2, 3))
        )
        with pytest.raises(CurveFileError, match="at least 2 groups"):
            read_curves_text(write_curves_text(data), kind="grouped")

    def test_unknown_kind(self):
        with pytest.raises(ValueError, match="unknown kind"):
            read_curves_text(small_text(), kind="banana")

    def test_single_rejects_paired_rows(self):
        with pytest.raises(CurveFileError, match="channel 1 only"):
            read_curves_text(small_text(), kind="single")


class TestKindInference:
    def test_blank_lines_ignored(self):
        lines = small_text().splitlines()
        lines.insert(2, "")
        back = read_curves_text("\n".join(lines) + "\n")
        assert isinstance(back, GroupedPairedSample)

    def test_explicit_paired_on_one_group(self, rng):
        grid = equispaced_grid(3)
        data = PairedFunctionalSample(
            grid, rng.normal(size=(2, 3)), rng.normal(size=(2, 3))
        )
        back = read_curves_text(write_curves_text(data), kind="paired")
        assert isinstance(back, PairedFunctionalSample)
