"""Tests for CSV/JSON artifacts and the run manifest."""

import csv
import json

import numpy as np

from utils.artifacts import MANIFEST_NAME, ArtifactWriter, format_value
from utils.hashing import hash_file


def test_format_value():
    assert format_value(None) == ''
    assert format_value(True) == 'true'
    assert format_value(np.int64(7)) == '7'
    assert format_value(0.1) == '0.10000000000000001'
    assert float(format_value(1.0 / 3.0)) == 1.0 / 3.0
    assert format_value(float('nan')) == 'nan'
    assert format_value('ex1') == 'ex1'


def test_write_csv(temp_dir):
    writer = ArtifactWriter(temp_dir / "out")
    path = writer.write_csv("table.csv", ['a', 'b'], [[1, 0.5], [2, None]])
    with open(path, newline='', encoding='utf-8') as f:
        rows = list(csv.reader(f))
    assert rows == [['a', 'b'], ['1', '0.5'], ['2', '']]
    assert writer.files == [path]


def test_write_dict_rows(temp_dir):
    writer = ArtifactWriter(temp_dir)
    path = writer.write_dict_rows("rows.csv", ['x', 'y'], [{'y': 2, 'x': 1}, {'x': 3}])
    assert path.read_text(encoding='utf-8') == "x,y\n1,2\n3,\n"


def test_write_json(temp_dir):
    writer = ArtifactWriter(temp_dir)
    path = writer.write_json("summary.json", {'b': np.array([1.0, 2.0]), 'a': float('inf')})
    document = json.loads(path.read_text(encoding='utf-8'))
    assert document['b'] == [1.0, 2.0]
    assert document['a'] is None
    assert 'schema_version' in document
    assert list(document) == sorted(document)


def test_manifest_lists_artifacts(temp_dir):
    writer = ArtifactWriter(temp_dir)
    csv_path = writer.write_csv("t.csv", ['a'], [[1]])
    manifest_path = writer.write_manifest('rule', {'n_points': 3}, {'exit_code': 0})
    manifest = json.loads(manifest_path.read_text(encoding='utf-8'))
    assert manifest_path.name == MANIFEST_NAME
    assert manifest['command'] == 'rule'
    assert manifest['exit_code'] == 0
    assert manifest['artifacts'] == [{'file': 't.csv', 'sha256': hash_file(csv_path)}]
    assert 'numpy_version' in manifest['platform']


def test_manifest_reproducible(temp_dir):
    first = ArtifactWriter(temp_dir / "one")
    first.write_csv("t.csv", ['a'], [[0.25]])
    second = ArtifactWriter(temp_dir / "two")
    second.write_csv("t.csv", ['a'], [[0.25]])
    a = first.write_manifest('rule', {'n_points': 3}).read_bytes()
    b = second.write_manifest('rule', {'n_points': 3}).read_bytes()
    assert a == b
