import pytest

from tabflow.sandbox import SandboxExecutor

FIXTURES = __import__("pathlib").Path(__file__).parent / "fixtures"


@pytest.fixture(scope="session")
def executor():
    return SandboxExecutor()


@pytest.fixture
def fixtures_dir():
    return FIXTURES
