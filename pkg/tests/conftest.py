import json
from pathlib import Path

import numpy as np
import pytest

SCHEMA_DIR = Path(__file__).resolve().parents[1] / "src" / "xpinn_lab" / "schemas"


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def validate():
    """Validate a JSON document (or file) against one of the shipped schemas."""
    jsonschema = pytest.importorskip("jsonschema")

    def check(doc, name):
        if isinstance(doc, (str, Path)):
            doc = json.loads(Path(doc).read_text())
        schema = json.loads((SCHEMA_DIR / f"{name}.schema.json").read_text())
        jsonschema.validate(doc, schema)
        return doc

    return check


# PASS/FAIL lines recorded by the acceptance suite, echoed after the run
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
