import json
import pathlib

import pytest

FIXTURES = pathlib.Path(__file__).parent / "fixtures"


@pytest.fixture
def fixtures_dir():
    return FIXTURES


@pytest.fixture
def transcript(tmp_path):
    """Write a scripted-provider transcript and return its path."""
    counter = {"n": 0}

    def write(entries):
        counter["n"] += 1
        path = tmp_path / f"transcript_{counter['n']}.json"
        path.write_text(json.dumps(entries), "utf-8")
        return str(path)

    return write
