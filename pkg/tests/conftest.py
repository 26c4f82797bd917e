import pytest

from nestdeblur.model import NestedConfig
from nestdeblur.sim import PhantomSpec, PSFSpec, gen_dataset


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion covered by a test")
    config._criteria = {}


def pytest_runtest_makereport(item, call):
    marker = item.get_closest_marker("criterion")
    if marker is None or call.when not in ("setup", "call"):
        return
    number, title = marker.args
    results = item.config._criteria.setdefault(number, {"title": title, "ok": True, "tests": 0, "details": []})
    if call.excinfo is not None:
        results["ok"] = False
    if call.when == "call":
        results["tests"] += 1
        results["details"] += [v for k, v in item.user_properties if k == "detail"]


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    criteria = getattr(config, "_criteria", {})
    if not criteria:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(criteria):
        r = criteria[number]
        status = "PASS" if r["ok"] and r["tests"] else "FAIL"
        terminalreporter.write_line(f"criterion {number}: {status}  {r['title']} ({r['tests']} tests)")
        for line in r["details"]:
            terminalreporter.write_line(f"    {line}")


@pytest.fixture(scope="session")
def tiny_manifest(tmp_path_factory):
    """12 phantoms of 32x32 at z=10 (sigma 2 px), 8 train / 4 test."""
    out = tmp_path_factory.mktemp("tiny_synth")
    gen_dataset(PhantomSpec(size=(32, 32), spot_count=(2, 4), filament_count=(1, 3)), [10.0],
                PSFSpec(sigma_per_um=0.2), 0.005, 12, out, seed=7)
    return out / "manifest.tsv"


@pytest.fixture
def tiny_config():
    return NestedConfig(levels=2, unet_depth=2, base_channels=4)
