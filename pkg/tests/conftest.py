import numpy as np
import pytest

# -- acceptance summary -------------------------------------------------------

_ACCEPTANCE = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(number, title): acceptance criterion")


def pytest_runtest_logreport(report):
    marker = getattr(report, "acceptance", None)
    if marker is None:
        return
    key = marker
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        prev = _ACCEPTANCE.get(key, "PASS")
        _ACCEPTANCE[key] = "PASS" if (prev == "PASS" and report.outcome == "passed") else "FAIL"


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    m = item.get_closest_marker("acceptance")
    if m is not None:
        rep.acceptance = (m.args[0], m.args[1])


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for (num, title), status in sorted(_ACCEPTANCE.items()):
        terminalreporter.write_line(f"[{status}] AC{num:>2}: {title}")


# -- shared fixtures ------------------------------------------------------------

def card(text):
    """Pad one header card to 80 columns."""
    assert len(text) <= 80
    return text.ljust(80).encode("ascii")


def hand_built_fits(pixels, bitpix=8, width=2, height=2, extra_cards=()):
    """A FITS file assembled card by card, independent of the library writer."""
    cards = [
        card("SIMPLE  =                    T"),
        card(f"BITPIX  = {bitpix:>20d}"),
        card("NAXIS   =                    2"),
        card(f"NAXIS1  = {width:>20d}"),
        card(f"NAXIS2  = {height:>20d}"),
        *[card(c) for c in extra_cards],
        card("END"),
    ]
    header = b"".join(cards)
    header += b" " * (-len(header) % 2880)
    dtype = {8: ">u1", 16: ">i2", 32: ">i4", -32: ">f4", -64: ">f8"}[bitpix]
    data = np.asarray(pixels).astype(dtype).tobytes()
    data += b"\0" * (-len(data) % 2880)
    return header + data


@pytest.fixture
def fixture_2x2():
    return hand_built_fits([0, 85, 170, 255])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
