"""comptll: text-line localization in JPEG documents without full decompression.

The pipeline: a baseline JPEG stream is entropy-decoded only
(:mod:`comptll.jpeg_codec`), the quantized DCT coefficients are tiled into a
single-channel plane (:mod:`comptll.coeff_input`), and a compact U-Net
(:mod:`comptll.unet`, running on :mod:`comptll.autodiff`) maps the plane to a
per-pixel baseline-region probability. :mod:`comptll.seg_metrics` scores
masks, :mod:`comptll.docgen` fabricates labeled pages, :mod:`comptll.trainer`
fits the model, and :mod:`comptll.bench` measures what skipping the inverse
DCT buys.
"""

import os as _os

# Single-threaded BLAS unless the user says otherwise: results stay
# bit-reproducible, timings stay meaningful, and containers that expose the
# host's core count to a one-core cgroup don't drown in thread thrash.
# Effective as long as this package is imported before numpy is.
for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
    _os.environ.setdefault(_var, "1")

__version__ = "0.1.0"
