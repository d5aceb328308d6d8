"""Suite-wide plumbing: the acceptance-criteria summary table and an optional
on-disk cache for the expensive session fixtures (V3DG_FIXTURE_CACHE=dir)."""

import hashlib
import os
from pathlib import Path

import pytest

_ACCEPTANCE = {}


def pytest_configure(config):
    config.addinivalue_line(
        "markers", "acceptance(name): acceptance criterion; reported in the summary")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker and rep.when == "call":
        _ACCEPTANCE[marker.args[0]] = rep.outcome


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name, outcome in _ACCEPTANCE.items():
        status = "PASS" if outcome == "passed" else "FAIL"
        terminalreporter.write_line(f"{status}  {name}")


def cached_bundle(asset, params, build_fn):
    """Build (or reuse) a fixture bundle; caching is opt-in via env var."""
    cache_dir = os.environ.get("V3DG_FIXTURE_CACHE")
    if not cache_dir:
        return build_fn()
    from v3dg.io import read_bundle, write_bundle

    digest = hashlib.sha256()
    for arr in (asset.positions, asset.scales, asset.rotations,
                asset.opacities, asset.colors):
        digest.update(arr.tobytes())
    digest.update(repr(params).encode())
    path = Path(cache_dir) / f"{digest.hexdigest()[:20]}.bundle"
    if path.exists():
        return read_bundle(path)
    bundle = build_fn()
    path.parent.mkdir(parents=True, exist_ok=True)
    write_bundle(bundle, path)
    return bundle
