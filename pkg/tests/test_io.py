import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from fcsolve import build_univariate_diff, grid_graph
from fcsolve.exceptions import ConfigError, ParseError
from fcsolve.io import (
    build_image_problem,
    load_points,
    load_signal,
    read_edge_list,
    read_pgm,
    write_dense_csv,
    write_pgm,
    write_solution,
)


def write(tmp_path, name, content):
    path = tmp_path / name
    if isinstance(content, bytes):
        path.write_bytes(content)
    else:
        path.write_text(content)
    return path


class TestCsv:
    def test_plain(self, tmp_path):
        y, dims = load_signal(write(tmp_path, "a.csv", "1\n2\n3"))
        np.testing.assert_array_equal(y, [1, 2, 3])
        assert dims is None

    def test_header(self, tmp_path):
        body = "value\n" + "\n".join(str(i * 0.5) for i in range(100)) + "\n"
        y, _ = load_signal(write(tmp_path, "b.csv", body))
        assert y.shape == (100,)
        assert y[3] == 1.5

    def test_blank_lines_skipped(self, tmp_path):
        y, _ = load_signal(write(tmp_path, "c.csv", "1\n\n2\n"))
        np.testing.assert_array_equal(y, [1, 2])

    def test_bad_line_reports_line_number(self, tmp_path):
        path = write(tmp_path, "d.csv", "1\n2\noops\n4\n")
        with pytest.raises(ParseError) as exc:
            load_signal(path)
        assert exc.value.line == 3
        assert "line 3" in str(exc.value)

    def test_empty(self, tmp_path):
        with pytest.raises(ParseError):
            load_signal(write(tmp_path, "e.csv", "value\n"))

    def test_non_finite(self, tmp_path):
        with pytest.raises(ParseError) as exc:
            load_signal(write(tmp_path, "f.csv", "1\nnan\n"))
        assert exc.value.line == 2

    def test_unknown_format(self, tmp_path):
        with pytest.raises(ConfigError):
            load_signal(write(tmp_path, "g.csv", "1\n"), fmt="tiff")


class TestPgm:
    def test_p2_example(self, tmp_path):
        y, dims = load_signal(write(tmp_path, "a.pgm", "P2\n2 2\n255\n0 255\n255 0\n"))
        np.testing.assert_array_equal(y, [0, 1, 1, 0])
        assert dims == (2, 2)

    def test_p2_comments_and_row_major(self, tmp_path):
        body = "P2\n# made by hand\n3 2 # width height\n10\n0 1 2\n3 4 5\n"
        y, dims = load_signal(write(tmp_path, "b.pgm", body))
        assert dims == (2, 3)
        np.testing.assert_allclose(y, np.arange(6) / 10)

    def test_p5_8bit(self, tmp_path):
        raw = b"P5\n3 1\n255\n" + bytes([0, 51, 255])
        y, dims = read_pgm(write(tmp_path, "c.pgm", raw))
        np.testing.assert_allclose(y, [0, 0.2, 1])
        assert dims == (1, 3)

    def test_p5_16bit_big_endian(self, tmp_path):
        raw = b"P5\n2 1\n65535\n" + np.array([0, 65535], dtype=">u2").tobytes()
        y, _ = read_pgm(write(tmp_path, "d.pgm", raw))
        np.testing.assert_array_equal(y, [0, 1])

    def test_format_flag_overrides_extension(self, tmp_path):
        y, dims = load_signal(write(tmp_path, "img.txt", "P2\n1 1\n4\n2\n"), fmt="pgm")
        np.testing.assert_array_equal(y, [0.5])
        assert dims == (1, 1)

    def test_truncated_raster_offset(self, tmp_path):
        raw = b"P5\n2 2\n255\n" + bytes([1, 2, 3])
        with pytest.raises(ParseError) as exc:
            read_pgm(write(tmp_path, "e.pgm", raw))
        assert exc.value.offset == len(raw)
        assert f"byte {len(raw)}" in str(exc.value)

    def test_bad_magic(self, tmp_path):
        with pytest.raises(ParseError) as exc:
            read_pgm(write(tmp_path, "f.pgm", b"P6\n1 1\n255\n\x00"))
        assert exc.value.offset == 0

    def test_bad_token_offset(self, tmp_path):
        body = b"P2\n2 x\n255\n"
        with pytest.raises(ParseError) as exc:
            read_pgm(write(tmp_path, "g.pgm", body))
        assert exc.value.offset == body.index(b"x")

    @pytest.mark.parametrize("body", [b"P2\n1 1\n0\n0\n", b"P2\n1 1\n70000\n1\n", b"P2\n1 1\n10\n11\n"])
    def test_bad_maxval_or_pixel(self, tmp_path, body):
        with pytest.raises(ParseError):
            read_pgm(write(tmp_path, "h.pgm", body))

    def test_missing_pixels(self, tmp_path):
        with pytest.raises(ParseError):
            read_pgm(write(tmp_path, "i.pgm", b"P2\n2 2\n255\n1 2 3\n"))

    def test_write_read_clamps(self, tmp_path):
        path = tmp_path / "out.pgm"
        write_pgm(path, [-0.5, 0.0, 0.5, 2.0], (2, 2))
        y, dims = read_pgm(path)
        assert dims == (2, 2)
        np.testing.assert_allclose(y, [0, 0, 128 / 255, 1])


class TestEdges:
    def test_basic_and_swap(self, tmp_path):
        path = write(tmp_path, "g.edges", "# triangle\n1 2\n3 1\n2 3  # last\n")
        g = read_edge_list(path)
        assert g.n_vertices == 3
        assert g.edges == ((1, 2), (1, 3), (2, 3))
        assert g.weights is None

    def test_weights(self, tmp_path):
        g = read_edge_list(write(tmp_path, "w.edges", "1 2 0.5\n2 3\n"))
        assert g.weights == (0.5, 1.0)

    def test_vertex_count_override(self, tmp_path):
        g = read_edge_list(write(tmp_path, "v.edges", "1 2\n"), n_vertices=5)
        assert g.n_vertices == 5

    @pytest.mark.parametrize(
        "body,line", [("1 2\n2 2\n", 2), ("1\n", 1), ("1 2\na b\n", 2), ("0 1\n", 1), ("1 2 3 4\n", 1)]
    )
    def test_errors_carry_line(self, tmp_path, body, line):
        with pytest.raises(ParseError) as exc:
            read_edge_list(write(tmp_path, "bad.edges", body))
        assert exc.value.line == line

    def test_empty(self, tmp_path):
        with pytest.raises(ParseError):
            read_edge_list(write(tmp_path, "none.edges", "# nothing\n"))


class TestPoints:
    def test_with_header(self, tmp_path):
        pts = load_points(write(tmp_path, "p.csv", "x,y\n0,1\n2,3\n4,5\n"))
        np.testing.assert_array_equal(pts, [[0, 1], [2, 3], [4, 5]])

    def test_ragged(self, tmp_path):
        with pytest.raises(ParseError):
            load_points(write(tmp_path, "r.csv", "0,1\n2\n"))


class TestImageProblem:
    def test_two_by_two(self):
        p = build_image_problem(np.zeros(4), (2, 2), 0, 0.1)
        assert p.op.shape == (4, 4)

    def test_single_row_is_univariate(self):
        y = np.arange(6.0)
        p = build_image_problem(y, (1, 6), 0, 0.1)
        np.testing.assert_array_equal(p.op.to_dense(), build_univariate_diff(6, 0).to_dense())

    def test_three_by_three_laplacian(self):
        p = build_image_problem(np.zeros(9), (3, 3), 1, 0.1)
        d1 = build_image_problem(np.zeros(9), (3, 3), 0, 0.1).op.to_dense()
        np.testing.assert_array_equal(p.op.to_dense(), d1.T @ d1)
        lap = p.op.to_dense()
        assert lap.shape == (9, 9)
        np.testing.assert_array_equal(np.diag(lap), [2, 3, 2, 3, 4, 3, 2, 3, 2])

    def test_dimension_mismatch(self):
        with pytest.raises(ConfigError):
            build_image_problem(np.zeros(5), (2, 2), 0, 0.1)

    def test_grid_matches_image_graph(self):
        assert grid_graph(3, 4).n_edges == 17


class TestSolutionFiles:
    def test_round_trip_exact(self, tmp_path):
        beta = np.random.default_rng(0).normal(size=50) * 1e3
        beta[0] = 1 / 3
        beta[1] = -0.0
        beta[2] = 5e-324
        path = tmp_path / "sol.csv"
        write_solution(path, beta)
        back, _ = load_signal(path)
        np.testing.assert_array_equal(back, beta)

    def test_dense_dump(self, tmp_path):
        path = tmp_path / "d.csv"
        write_dense_csv(path, build_univariate_diff(3, 0))
        assert path.read_text() == "-1,1,0\n0,-1,1\n"


@settings(max_examples=50, deadline=None)
@given(beta=arrays(np.float64, st.integers(1, 30), elements=st.floats(allow_nan=False, allow_infinity=False)))
def test_solution_round_trip_property(tmp_path_factory, beta):
    path = tmp_path_factory.mktemp("rt") / "sol.csv"
    write_solution(path, beta)
    back, _ = load_signal(path)
    np.testing.assert_array_equal(back, beta)
