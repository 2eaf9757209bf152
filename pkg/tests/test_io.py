import numpy as np
import pytest

from coreg.errors import ParseError
from coreg.io import (
    load_panel,
    payload_header,
    read_correlation_objects,
    read_quantile_objects,
    save_panel,
    write_objects,
)
from coreg.spaces import CorrMatrixObject, QuantileObject, WassersteinSpace

from conftest import random_corr, random_panel


@pytest.mark.parametrize("space,p", [("euclidean", 1), ("wasserstein", 1), ("correlation", 2)])
def test_round_trip(tmp_path, rng, space, p):
    panel = random_panel(rng, n=12, space=space, p=p, m=7)
    path = tmp_path / "panel.csv"
    save_panel(panel, path, {"note": "x"})
    back = load_panel(path, space)
    assert back.subject_ids == panel.subject_ids
    assert np.array_equal(back.subject, panel.subject)
    assert np.allclose(back.t, panel.t, rtol=1e-12, atol=0)
    assert np.allclose(back.x, panel.x, rtol=1e-12, atol=0)
    assert np.allclose(back.flat_y(), panel.flat_y(), rtol=1e-12, atol=1e-15)
    assert type(back.space) is type(panel.space)


def test_one_row_euclidean(tmp_path):
    path = tmp_path / "one.csv"
    path.write_text("subject_id,t,x,y\nA,0.5,1.0,2.0\n")
    panel = load_panel(path)
    assert panel.n == 1 and panel.N == 1 and panel.counts.tolist() == [1]


def test_decreasing_quantiles_name_row(tmp_path):
    path = tmp_path / "q.csv"
    path.write_text("subject_id,t,x,q_1,q_2,q_3\nA,0.1,0.2,0,1,2\nA,0.3,0.2,0,2,1\n")
    with pytest.raises(ParseError) as info:
        load_panel(path)
    assert info.value.row == 3 and info.value.column == "q_3"
    assert "row 3" in str(info.value)


@pytest.mark.parametrize(
    "body,column",
    [
        ("A,0.1,0.2,1,0.5,0.4,1\n", "c_1_2"),  # asymmetric
        ("A,0.1,0.2,0.9,0.5,0.5,1\n", "c_1_1"),  # diagonal
        ("A,0.1,0.2,1,1.5,1.5,1\n", "c_1_2"),  # range
    ],
)
def test_invalid_correlation_rows(tmp_path, body, column):
    path = tmp_path / "c.csv"
    path.write_text("subject_id,t,x,c_1_1,c_1_2,c_2_1,c_2_2\n" + body)
    with pytest.raises(ParseError) as info:
        load_panel(path)
    assert info.value.row == 2 and info.value.column == column


def test_correlation_within_tolerance_is_cleaned(tmp_path):
    path = tmp_path / "c.csv"
    path.write_text("subject_id,t,x,c_1_1,c_1_2,c_2_1,c_2_2\nA,0.1,0.2,1.0000001,0.5,0.5000002,1\n")
    panel = load_panel(path)
    c = panel.y[0]
    assert np.array_equal(c, c.T) and c[0, 0] == 1.0


@pytest.mark.parametrize(
    "text,row,column",
    [
        ("subject_id,t,x,y\nA,0.1,zero,1\n", 2, "x"),
        ("subject_id,t,x,y\nA,0.1,0.2\n", 2, None),
        ("subject_id,t,x,y\nA,nan,0.2,1\n", 2, "t"),
        ("subject_id,t,x,z\nA,0.1,0.2,1\n", 1, "z"),
        ("t,subject_id,x,y\nA,0.1,0.2,1\n", 1, None),
    ],
)
def test_malformed_rows(tmp_path, text, row, column):
    path = tmp_path / "bad.csv"
    path.write_text(text)
    with pytest.raises(ParseError) as info:
        load_panel(path)
    assert info.value.row == row and info.value.column == column


def test_comment_lines_and_space_mismatch(tmp_path):
    path = tmp_path / "p.csv"
    path.write_text("# seed=1\nsubject_id,t,x,y\nA,0.1,0.2,1\nB,0.4,0.3,2\n")
    assert load_panel(path).n == 2
    with pytest.raises(ParseError):
        load_panel(path, "wasserstein")


def test_missing_file(tmp_path):
    with pytest.raises(ParseError):
        load_panel(tmp_path / "nope.csv")


def test_payload_header_padding():
    assert payload_header(WassersteinSpace(3)) == ["q_001", "q_002", "q_003"]
    assert payload_header(WassersteinSpace(1000))[-1] == "q_1000"


def test_object_files_round_trip(tmp_path, rng):
    qs = [QuantileObject(np.sort(rng.standard_normal(6))) for _ in range(3)]
    write_objects(qs, tmp_path / "q.csv")
    back = read_quantile_objects(tmp_path / "q.csv")
    assert all(np.array_equal(a.values, b.values) for a, b in zip(qs, back))

    cs = [CorrMatrixObject(random_corr(rng, 3)) for _ in range(3)]
    for flatten in (False, True):
        write_objects(cs, tmp_path / "c.csv", flatten=flatten)
        back = read_correlation_objects(tmp_path / "c.csv", flatten=flatten)
        assert len(back) == 3
        assert all(np.array_equal(a.entries, b.entries) for a, b in zip(cs, back))
