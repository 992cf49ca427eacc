import os

# Pin BLAS to one thread before numpy loads anywhere: keeps every timing
# and bit-determinism assertion meaningful.
os.environ.setdefault("OMP_NUM_THREADS", "1")
os.environ.setdefault("OPENBLAS_NUM_THREADS", "1")
os.environ.setdefault("MKL_NUM_THREADS", "1")

import numpy as np
import pytest

from comptll import docgen, jpeg_codec


@pytest.fixture(scope="session")
def doc_corpus():
    """20 synthetic 256x256 pages with their quality-50 streams."""
    spec = docgen.DocSpec(seed=1234, side=256)
    docs = docgen.generate(spec, 20)
    streams = [jpeg_codec.encode(d.image, 50) for d in docs]
    return docs, streams


@pytest.fixture(scope="session")
def tiny_dataset(tmp_path_factory):
    """Small exported dataset for trainer/CLI tests."""
    out = tmp_path_factory.mktemp("tinydata")
    spec = docgen.DocSpec(seed=99, side=256)
    docs = docgen.generate(spec, 10)
    rows = docgen.export_dataset(docs, out, quality=50)
    return out, rows


def random_block(rng):
    return rng.integers(0, 256, size=(8, 8)).astype(np.int64)
