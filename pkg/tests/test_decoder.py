import os

import numpy as np
import pytest

from selfprompt import (
    BinaryMask,
    CoordSpace,
    DecoderBackend,
    DecoderError,
    EmbeddingGrid,
    GeometryInfo,
    MockDecoder,
    ProbabilityGrid,
    PromptBox,
    PromptMode,
    PromptPoint,
    PromptSet,
    coarse_to_original,
    create_decoder,
    decode,
    mock_decode,
    postprocess_to_original,
)

from oracles import scalar_bilinear


def embedding():
    return EmbeddingGrid(values=np.zeros((256, 64, 64), np.float32))


def mask256(bits):
    return BinaryMask(bits=np.asarray(bits, bool), space=CoordSpace.GRID_256)


def grid256_prompts(mode, point=None, box=None):
    return PromptSet(mode=mode, space=CoordSpace.GRID_256, point=point, box=box)


class TestGeometry:
    def test_square_image(self):
        g = GeometryInfo.from_original(512, 512)
        assert g.scale == 2.0
        assert (g.resized_height, g.resized_width) == (1024, 1024)

    def test_landscape(self):
        g = GeometryInfo.from_original(300, 400)
        assert g.resized_width == 1024
        assert g.resized_height == 768
        assert max(g.resized_height, g.resized_width) == 1024

    def test_degenerate_rejected(self):
        from selfprompt import GeometryError

        with pytest.raises(GeometryError):
            GeometryInfo.from_original(0, 100)

    def test_rounding_keeps_max_at_1024(self):
        for h, w in [(333, 777), (1, 9999), (1024, 1023), (641, 480)]:
            g = GeometryInfo.from_original(h, w)
            assert max(g.resized_height, g.resized_width) == 1024

    def test_box_round_trip_within_one_pixel(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            h, w = int(rng.integers(50, 800)), int(rng.integers(50, 800))
            g = GeometryInfo.from_original(h, w)
            x0, x1 = sorted(rng.integers(0, w, size=2).tolist())
            y0, y1 = sorted(rng.integers(0, h, size=2).tolist())
            box = (x0, y0, x1, y1)
            mapped = [g.original_to_padded(v) for v in box]
            back = [g.padded_to_original(v) for v in mapped]
            assert all(abs(a - b) <= 1.0 for a, b in zip(box, back))


class TestMockDecode:
    def test_box_keeps_left_half(self):
        full = mask256(np.ones((256, 256), bool))
        prompts = grid256_prompts(
            PromptMode.BOX, box=PromptBox(x_min=0, y_min=0, x_max=127, y_max=255)
        )
        out = mock_decode(embedding(), prompts, full)
        assert out.bits[:, :128].all()
        assert not out.bits[:, 128:].any()

    def test_point_selects_component(self):
        bits = np.zeros((256, 256), bool)
        bits[10:40, 10:40] = True  # blob A
        bits[100:160, 100:160] = True  # blob B
        prompts = grid256_prompts(PromptMode.POINT, point=PromptPoint(x=120, y=120))
        out = mock_decode(embedding(), prompts, mask256(bits))
        assert out.bits[120, 120]
        assert not out.bits[20, 20]

    def test_padded_space_prompts(self):
        bits = np.zeros((256, 256), bool)
        bits[10:40, 10:40] = True
        bits[100:160, 100:160] = True
        prompts = PromptSet(
            mode=PromptMode.POINT,
            space=CoordSpace.PADDED_1024,
            point=PromptPoint(x=4 * 120 + 2, y=4 * 120 + 2),
        )
        out = mock_decode(embedding(), prompts, mask256(bits))
        assert out.bits[120, 120] and not out.bits[20, 20]

    def test_equidistant_tie_breaks_lexicographically(self):
        bits = np.zeros((256, 256), bool)
        bits[100, 90] = True  # left component, top-left pixel (100, 90)
        bits[100, 110] = True  # right component, same distance from the point
        prompts = grid256_prompts(PromptMode.POINT, point=PromptPoint(x=100, y=100))
        out = mock_decode(embedding(), prompts, mask256(bits))
        assert out.bits[100, 90] and not out.bits[100, 110]

    def test_point_outside_all_blobs_picks_nearest(self):
        bits = np.zeros((256, 256), bool)
        bits[10:20, 10:20] = True
        bits[200:220, 200:220] = True
        prompts = grid256_prompts(PromptMode.POINT, point=PromptPoint(x=30, y=30))
        out = mock_decode(embedding(), prompts, mask256(bits))
        assert out.bits[15, 15] and not out.bits[210, 210]

    def test_idempotent(self):
        rng = np.random.default_rng(1)
        bits = rng.random((256, 256)) < 0.3
        prompts = grid256_prompts(
            PromptMode.POINT_AND_BOX,
            point=PromptPoint(x=128, y=128),
            box=PromptBox(x_min=40, y_min=40, x_max=220, y_max=220),
        )
        once = mock_decode(embedding(), prompts, mask256(bits))
        twice = mock_decode(embedding(), prompts, once)
        assert np.array_equal(once.bits, twice.bits)

    def test_box_excluding_everything_gives_empty(self):
        bits = np.zeros((256, 256), bool)
        bits[200:210, 200:210] = True
        prompts = grid256_prompts(
            PromptMode.BOX, box=PromptBox(x_min=0, y_min=0, x_max=10, y_max=10)
        )
        assert mock_decode(embedding(), prompts, mask256(bits)).is_empty()


class TestDecodeEntry:
    def test_mock_backend_counts_calls(self):
        decoder = create_decoder(DecoderBackend(kind="mock"))
        assert isinstance(decoder, MockDecoder)
        g = GeometryInfo.from_original(256, 256)
        prompts = PromptSet(
            mode=PromptMode.BOX,
            space=CoordSpace.PADDED_1024,
            box=PromptBox(x_min=2, y_min=2, x_max=510, y_max=1022),
        )
        coarse = mask256(np.ones((256, 256), bool))
        out = decode(decoder, embedding(), prompts, g, coarse)
        assert decoder.call_count == 1
        assert out.space is CoordSpace.GRID_256
        assert float(out.values.min()) >= 0.0 and float(out.values.max()) <= 1.0
        # box covering left half in padded coords -> left-half mask
        assert out.values[:, :128].all() and not out.values[:, 128:].any()

    def test_mock_requires_refined_mask(self):
        decoder = create_decoder(DecoderBackend(kind="mock"))
        g = GeometryInfo.from_original(256, 256)
        prompts = PromptSet(
            mode=PromptMode.POINT, space=CoordSpace.PADDED_1024, point=PromptPoint(x=2, y=2)
        )
        with pytest.raises(DecoderError, match="refined"):
            decode(decoder, embedding(), prompts, g)

    def test_linear_only_rejected_by_decoder(self):
        decoder = create_decoder(DecoderBackend(kind="mock"))
        g = GeometryInfo.from_original(256, 256)
        prompts = PromptSet(mode=PromptMode.LINEAR_ONLY, space=CoordSpace.PADDED_1024)
        with pytest.raises(DecoderError, match="linear-only"):
            decode(decoder, embedding(), prompts, g, mask256(np.ones((256, 256), bool)))

    def test_external_backend_requires_path(self):
        with pytest.raises(DecoderError, match="model path"):
            DecoderBackend(kind="external-model")

    def test_unknown_backend_kind(self):
        with pytest.raises(DecoderError, match="unknown"):
            DecoderBackend(kind="banana")


class TestPostprocess:
    def test_square_image_pure_resize(self):
        g = GeometryInfo.from_original(256, 256)
        values = np.zeros((256, 256))
        values[:, :128] = 1.0
        probs = ProbabilityGrid(values=values, space=CoordSpace.GRID_256)
        out = postprocess_to_original(probs, g)
        assert out.space is CoordSpace.ORIGINAL
        assert np.array_equal(out.bits, values > 0.5)

    def test_uniform_one_any_geometry(self):
        g = GeometryInfo.from_original(300, 400)
        probs = ProbabilityGrid(values=np.ones((256, 256)), space=CoordSpace.GRID_256)
        out = postprocess_to_original(probs, g)
        assert out.bits.shape == (300, 400)
        assert out.bits.all()

    def test_half_plane_boundary_within_one_pixel(self):
        # vertical half-plane at grid-256 x < 128 covers padded x < 512,
        # i.e. original x < 200 for a 300x400 image (scale 2.56)
        g = GeometryInfo.from_original(300, 400)
        values = np.zeros((256, 256))
        values[:, :128] = 1.0
        probs = ProbabilityGrid(values=values, space=CoordSpace.GRID_256)
        out = postprocess_to_original(probs, g)
        cols = np.nonzero(out.bits[150])[0]
        boundary = cols.max()
        assert abs(boundary - 199) <= 1
        # spot-check against the scalar oracle on the cropped grid
        rows = round(256 * g.resized_height / 1024)
        cols_n = round(256 * g.resized_width / 1024)
        cropped = values[:rows, :cols_n]
        for x in (195, 199, 203):
            expected = scalar_bilinear(cropped, 300, 400, 150, x) > 0.5
            assert out.bits[150, x] == expected

    def test_linear_only_path_square(self):
        g = GeometryInfo.from_original(256, 256)
        values = np.zeros((64, 64))
        values[:32] = 1.0
        probs = ProbabilityGrid(values=values, space=CoordSpace.GRID_64)
        out = coarse_to_original(probs, g)
        assert out.bits.shape == (256, 256)
        assert out.bits[:126].all() and not out.bits[130:].any()


class TestOnnxBackend:
    def test_missing_runtime_or_model_raises_structured_error(self, tmp_path):
        model = tmp_path / "decoder.onnx"
        model.write_bytes(b"not a real model")
        with pytest.raises(DecoderError):
            create_decoder(DecoderBackend(kind="external-model", model_path=str(model)))

    @pytest.mark.skipif(
        "SELFPROMPT_TEST_DECODER" not in os.environ,
        reason="set SELFPROMPT_TEST_DECODER to an exported decoder model to run",
    )
    def test_real_decoder_integration(self):
        # integration probe once real assets are present: a centered box on a
        # stock embedding must return a mask overlapping the box >= 90%
        decoder = create_decoder(
            DecoderBackend(kind="external-model", model_path=os.environ["SELFPROMPT_TEST_DECODER"])
        )
        emb_path = os.environ.get("SELFPROMPT_TEST_EMBEDDING")
        assert emb_path, "SELFPROMPT_TEST_EMBEDDING must point at a SPEB file"
        from selfprompt import read_embedding

        emb = read_embedding(emb_path)
        g = GeometryInfo.from_original(1024, 1024)
        prompts = PromptSet(
            mode=PromptMode.BOX,
            space=CoordSpace.PADDED_1024,
            box=PromptBox(x_min=256, y_min=256, x_max=768, y_max=768),
        )
        probs = decode(decoder, emb, prompts, g)
        bits = probs.values > 0.5
        box_cells = np.zeros((256, 256), bool)
        box_cells[64:192, 64:192] = True
        inside = (bits & box_cells).sum()
        assert bits.sum() > 0
        assert inside / max(bits.sum(), 1) >= 0.9
