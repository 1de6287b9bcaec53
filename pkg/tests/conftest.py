import os

import numpy as np
import pytest


@pytest.fixture(scope="session", autouse=True)
def kernel_cache(tmp_path_factory):
    """One kernel-table cache for the whole run so tables are built once."""
    path = os.environ.get("SSEM_TEST_KERNEL_CACHE") or str(tmp_path_factory.mktemp("kernels"))
    old = os.environ.get("SSEM_KERNEL_CACHE")
    os.environ["SSEM_KERNEL_CACHE"] = path
    yield path
    if old is None:
        os.environ.pop("SSEM_KERNEL_CACHE", None)
    else:
        os.environ["SSEM_KERNEL_CACHE"] = old


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
