"""Tests for output-directory path helpers."""

from pathlib import Path

from utils.platform_utils import display_path, get_platform_info, resolve_output_dir


def test_resolve_output_dir_is_absolute(tmp_path):
    resolved = resolve_output_dir(tmp_path / "a" / ".." / "results")
    assert resolved.is_absolute()
    assert resolved == (tmp_path / "results").resolve()
    assert not resolved.exists()


def test_resolve_output_dir_expands_home():
    assert resolve_output_dir("~/results") == (Path.home() / "results").resolve()


def test_display_path_relative_to_base(tmp_path):
    assert display_path(tmp_path / "results" / "ex1", base=tmp_path) == str(Path("results") / "ex1")
    assert display_path(tmp_path, base=tmp_path) == "."


def test_display_path_outside_base(tmp_path):
    other = tmp_path / "other"
    assert display_path(other, base=tmp_path / "base") == str(other)


def test_platform_info_fields():
    info = get_platform_info()
    assert set(info) == {'system', 'machine', 'python_version',
                         'numpy_version', 'scipy_version', 'byteorder'}
    assert info['byteorder'] in ('little', 'big')
