import pytest

from sustain import utils


def test_merge_settings_doesnt_mutate():
    default = {"cv": {"folds": 7, "seed": 0}, "knn": {"k": 3}}
    user = {"cv": {"seed": 5}}
    assert utils.merge_settings(default, user) == {"cv": {"folds": 7, "seed": 5}, "knn": {"k": 3}}
    assert default == {"cv": {"folds": 7, "seed": 0}, "knn": {"k": 3}}
    # a non-dict replaces a whole section
    assert utils.merge_settings(default, {"knn": None})["knn"] is None


@pytest.mark.parametrize(
    "value, text",
    [(0.1, "0.1"), (2.0, "2"), (1e-20, "1e-20"), (123456789.123, "123456789.123"), (-0.5, "-0.5")],
)
def test_format_number(value, text):
    assert utils.format_number(value) == text
    assert float(text) == value


def test_format_number_nan():
    assert utils.format_number(float("nan")) == ""


def test_write_csv(tmp_path):
    utils.write_csv(tmp_path / "a.csv", ["name", "value"], [["a,b", 1 / 3], ["c", None], ["d", 5]])
    assert (tmp_path / "a.csv").read_bytes() == b'name,value\n"a,b",0.333333333333\nc,\nd,5\n'


def test_format_mean_sd():
    assert utils.format_mean_sd(100, 0) == "100.0±0.0"
    assert utils.format_mean_sd(50.04, None) == "50.0"


def test_analysis_errors_have_a_stage():
    class MyError(utils.AnalysisError):
        stage = "mine"

    assert utils.AnalysisError("x").stage == "analysis"
    assert MyError("x").stage == "mine"
    assert not issubclass(utils.AnalysisError, ValueError)
