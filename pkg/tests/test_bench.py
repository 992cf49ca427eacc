import numpy as np
import pytest

from comptll import bench, unet


class TestBenchDecode:
    def test_partial_beats_full(self, doc_corpus):
        _, streams = doc_corpus
        r = bench.bench_decode(streams, repetitions=2)
        assert r.partial_decode_ms < r.full_decode_ms
        assert r.reduction_pct > 0
        assert r.context["n_images"] == 20

    def test_needs_twenty_streams(self, doc_corpus):
        _, streams = doc_corpus
        with pytest.raises(ValueError):
            bench.bench_decode(streams[:5])

    def test_median_stability(self, doc_corpus):
        # medians of two independent 5-rep runs agree within 10%
        _, streams = doc_corpus
        a = bench.bench_decode(streams, repetitions=5)
        b = bench.bench_decode(streams, repetitions=5)
        for x, y in ((a.full_decode_ms, b.full_decode_ms),
                     (a.partial_decode_ms, b.partial_decode_ms)):
            assert abs(x - y) / x < 0.10


class TestBenchPipeline:
    @pytest.fixture(scope="class")
    def model(self):
        return unet.build(
            unet.UNetConfig(input_side=256, width_mult=0.0625), seed=0)

    def test_dct_not_slower_and_accounting(self, doc_corpus, model):
        _, streams = doc_corpus
        r = bench.bench_pipeline(streams, model, repetitions=3)
        assert r.dct_total_ms <= r.pixel_total_ms
        for side in (r.pixel, r.dct):
            parts = side["decode_ms"] + side["prep_ms"] + side["forward_ms"]
            assert parts == pytest.approx(side["total_ms"], rel=0.05)

    def test_empty_corpus_rejected(self, model):
        with pytest.raises(ValueError):
            bench.bench_pipeline([], model)


class TestBenchStorage:
    def test_jpeg_smaller_raw_qdb_larger(self, doc_corpus):
        _, streams = doc_corpus
        r = bench.bench_storage(streams)
        assert r.jpeg_bytes < r.raw_bytes
        assert r.jpeg_reduction_pct > 0
        # the materialized coefficient container costs more than 8-bit pixels
        assert r.qdb_bytes > r.raw_bytes
        assert r.qdb_reduction_pct < 0

    def test_per_document_jpeg_always_smaller(self, doc_corpus):
        docs, streams = doc_corpus
        for d, s in zip(docs, streams):
            assert len(s) < d.image.size

    def test_qdb_container_arithmetic(self, doc_corpus):
        _, streams = doc_corpus
        r = bench.bench_storage(streams[:1])
        assert r.qdb_bytes == 143 + 32 * 32 * 128  # one 256x256 page

    def test_report_is_json_friendly(self, doc_corpus):
        import json
        _, streams = doc_corpus
        assert json.dumps(bench.bench_storage(streams).as_dict())
