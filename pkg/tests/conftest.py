import pytest


@pytest.fixture(scope="session")
def data_root(tmp_path_factory):
    """Shared dataset root so the generated files are materialized once."""
    return str(tmp_path_factory.mktemp("data"))
