import json

import pytest


@pytest.fixture
def tmp_mesh_file(tmp_path):
    """Write a mesh dict to a file and return the path."""

    def write(data, name="mesh.json"):
        path = tmp_path / name
        path.write_text(json.dumps(data))
        return path

    return write
