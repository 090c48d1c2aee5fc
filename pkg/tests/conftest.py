import random
import sys

import pytest

from negokit.model import Bundle, NegotiationConfig, Product, ProductKind


@pytest.fixture
def tablet_bundle():
    return Bundle.of(
        "fig1",
        [
            Product("tablet", "Lenovo Tab P11 Pro", "11.5-inch OLED tablet",
                    ("an 11.5-inch OLED display", "a Snapdragon 730G processor"),
                    91100, ProductKind.MAIN),
            Product("stylus", "Adonit Note+", "pressure-sensitive stylus pen",
                    ("2048 levels of pressure",), 1700),
            Product("card", "Lexar 633x SDXC", "high-capacity memory card",
                    ("up to 1TB capacity",), 2500),
        ],
    )


@pytest.fixture
def config():
    return NegotiationConfig()


@pytest.fixture
def rng():
    return random.Random(42)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """Echo the per-criterion acceptance lines after capture ends."""
    module = (sys.modules.get("tests.test_acceptance")
              or sys.modules.get("test_acceptance"))
    lines = getattr(module, "RESULT_LINES", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
