import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from selfprompt import (
    BinaryMask,
    CoordSpace,
    EmbeddingGrid,
    FormatError,
    ManifestError,
    ProbabilityGrid,
    PromptBox,
    PromptMode,
    PromptPoint,
    PromptSet,
    ShapeError,
    load_manifest,
    read_embedding,
    read_mask,
    write_embedding,
    write_mask,
)


def manifest_doc(entries):
    return json.dumps({"entries": entries})


def entry(i, **overrides):
    base = {
        "id": f"img{i}",
        "embedding_path": f"img{i}.speb",
        "mask_path": f"img{i}.png",
        "original_height": 100,
        "original_width": 120,
    }
    base.update(overrides)
    return base


class TestManifest:
    def test_two_entry_manifest(self, tmp_path):
        path = tmp_path / "m.json"
        path.write_text(manifest_doc([entry(1), entry(2)]))
        manifest = load_manifest(path)
        assert len(manifest) == 2
        assert manifest.ids() == ["img1", "img2"]
        # relative paths resolve against the manifest directory
        assert manifest.entries[0].embedding_path == tmp_path / "img1.speb"

    def test_duplicate_id_rejected(self, tmp_path):
        path = tmp_path / "m.json"
        path.write_text(manifest_doc([entry(1), entry(1)]))
        with pytest.raises(ManifestError, match="duplicate id 'img1'"):
            load_manifest(path)

    def test_empty_entries_is_valid(self, tmp_path):
        path = tmp_path / "m.json"
        path.write_text(manifest_doc([]))
        assert len(load_manifest(path)) == 0

    def test_missing_file(self, tmp_path):
        with pytest.raises(ManifestError, match="not found"):
            load_manifest(tmp_path / "nope.json")

    def test_parse_error(self, tmp_path):
        path = tmp_path / "m.json"
        path.write_text("{not json")
        with pytest.raises(ManifestError, match="not valid JSON"):
            load_manifest(path)

    def test_nonpositive_dimensions_name_the_entry(self, tmp_path):
        path = tmp_path / "m.json"
        path.write_text(manifest_doc([entry(1), entry(2, original_height=0)]))
        with pytest.raises(ManifestError, match="img2"):
            load_manifest(path)

    def test_empty_path_rejected(self, tmp_path):
        path = tmp_path / "m.json"
        path.write_text(manifest_doc([entry(1, mask_path="")]))
        with pytest.raises(ManifestError, match="img1"):
            load_manifest(path)

    def test_extra_keys_tolerated(self, tmp_path):
        path = tmp_path / "m.json"
        path.write_text(manifest_doc([entry(1, scale=8.0, resized_height=1024)]))
        assert len(load_manifest(path)) == 1


class TestEmbeddingIO:
    def test_round_trip_bit_exact(self, tmp_path):
        rng = np.random.default_rng(0)
        values = rng.standard_normal((256, 64, 64)).astype(np.float32)
        grid = EmbeddingGrid(values=values)
        path = tmp_path / "e.speb"
        write_embedding(grid, path)
        back = read_embedding(path)
        assert np.array_equal(back.values, values)
        assert back.values.dtype == np.float32

    def test_zero_grid_payload_size(self, tmp_path):
        path = tmp_path / "z.speb"
        write_embedding(EmbeddingGrid(values=np.zeros((256, 64, 64), np.float32)), path)
        assert path.stat().st_size == 20 + 4 * 256 * 64 * 64
        assert not read_embedding(path).values.any()

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "bad.speb"
        write_embedding(EmbeddingGrid(values=np.zeros((256, 64, 64), np.float32)), path)
        blob = bytearray(path.read_bytes())
        blob[:4] = b"XXXX"
        path.write_bytes(bytes(blob))
        with pytest.raises(FormatError, match="bad magic"):
            read_embedding(path)

    def test_dimension_mismatch(self, tmp_path):
        path = tmp_path / "dim.speb"
        import struct

        header = struct.pack("<4sIIII", b"SPEB", 1, 128, 64, 64)
        path.write_bytes(header + b"\x00" * (4 * 128 * 64 * 64))
        with pytest.raises(FormatError, match="dimension mismatch"):
            read_embedding(path)

    def test_truncated_payload(self, tmp_path):
        path = tmp_path / "t.speb"
        write_embedding(EmbeddingGrid(values=np.zeros((256, 64, 64), np.float32)), path)
        path.write_bytes(path.read_bytes()[:-8])
        with pytest.raises(FormatError, match="truncated"):
            read_embedding(path)

    def test_trailing_bytes_rejected(self, tmp_path):
        path = tmp_path / "x.speb"
        write_embedding(EmbeddingGrid(values=np.zeros((256, 64, 64), np.float32)), path)
        path.write_bytes(path.read_bytes() + b"!!")
        with pytest.raises(FormatError, match="trailing"):
            read_embedding(path)

    def test_non_finite_rejected(self, tmp_path):
        path = tmp_path / "nan.speb"
        values = np.zeros((256, 64, 64), np.float32)
        write_embedding(EmbeddingGrid(values=values), path)
        blob = bytearray(path.read_bytes())
        blob[20:24] = np.array([np.nan], "<f4").tobytes()
        path.write_bytes(bytes(blob))
        with pytest.raises(FormatError, match="non-finite"):
            read_embedding(path)

    @settings(max_examples=20, deadline=None)
    @given(st.integers(0, 2**31))
    def test_round_trip_property(self, tmp_path_factory, seed):
        rng = np.random.default_rng(seed)
        values = (rng.standard_normal((256, 64, 64)) * 10).astype(np.float32)
        path = tmp_path_factory.mktemp("rt") / "e.speb"
        write_embedding(EmbeddingGrid(values=values), path)
        assert np.array_equal(read_embedding(path).values, values)


class TestMaskIO:
    def test_all_255(self, tmp_path):
        from PIL import Image

        path = tmp_path / "w.png"
        Image.fromarray(np.full((10, 10), 255, np.uint8), "L").save(path)
        m = read_mask(path, CoordSpace.ORIGINAL)
        assert m.foreground_count() == 100
        assert m.space is CoordSpace.ORIGINAL

    def test_all_zero(self, tmp_path):
        from PIL import Image

        path = tmp_path / "b.png"
        Image.fromarray(np.zeros((7, 9), np.uint8), "L").save(path)
        assert read_mask(path, CoordSpace.ORIGINAL).is_empty()

    def test_checkerboard_threshold(self, tmp_path):
        from PIL import Image

        values = np.zeros((8, 8), np.uint8)
        values[::2, ::2] = 255
        values[1::2, 1::2] = 255
        path = tmp_path / "c.png"
        Image.fromarray(values, "L").save(path)
        m = read_mask(path, CoordSpace.GRID_64)
        assert np.array_equal(m.bits, values >= 128)

    def test_threshold_at_128(self, tmp_path):
        from PIL import Image

        values = np.array([[127, 128]], np.uint8)
        path = tmp_path / "t.png"
        Image.fromarray(values, "L").save(path)
        assert read_mask(path, CoordSpace.ORIGINAL).bits.tolist() == [[False, True]]

    def test_multichannel_rejected(self, tmp_path):
        from PIL import Image

        path = tmp_path / "rgb.png"
        Image.fromarray(np.zeros((4, 4, 3), np.uint8), "RGB").save(path)
        with pytest.raises(FormatError, match="single-channel"):
            read_mask(path, CoordSpace.ORIGINAL)

    def test_unreadable_file(self, tmp_path):
        path = tmp_path / "junk.png"
        path.write_bytes(b"not a png")
        with pytest.raises(FormatError):
            read_mask(path, CoordSpace.ORIGINAL)

    def test_write_read_round_trip(self, tmp_path):
        rng = np.random.default_rng(3)
        bits = rng.random((33, 21)) < 0.4
        m = BinaryMask(bits=bits, space=CoordSpace.ORIGINAL)
        path = tmp_path / "rt.png"
        write_mask(m, path)
        back = read_mask(path, CoordSpace.ORIGINAL)
        assert np.array_equal(back.bits, bits)


class TestDomainTypes:
    def test_embedding_shape_enforced(self):
        with pytest.raises(ShapeError):
            EmbeddingGrid(values=np.zeros((128, 64, 64), np.float32))

    def test_embedding_finiteness_enforced(self):
        values = np.zeros((256, 64, 64), np.float32)
        values[0, 0, 0] = np.inf
        with pytest.raises(FormatError):
            EmbeddingGrid(values=values)

    def test_probability_bounds(self):
        with pytest.raises(FormatError):
            ProbabilityGrid(values=np.array([[1.5]]), space=CoordSpace.GRID_64)
        with pytest.raises(FormatError):
            ProbabilityGrid(values=np.array([[-0.1]]), space=CoordSpace.GRID_64)

    def test_prompt_set_mode_requirements(self):
        point = PromptPoint(x=10.0, y=20.0)
        box = PromptBox(x_min=1.0, y_min=2.0, x_max=3.0, y_max=4.0)
        with pytest.raises(ShapeError):
            PromptSet(mode=PromptMode.POINT, space=CoordSpace.PADDED_1024)
        with pytest.raises(ShapeError):
            PromptSet(mode=PromptMode.POINT_AND_BOX, space=CoordSpace.PADDED_1024, point=point)
        with pytest.raises(ShapeError):
            PromptSet(
                mode=PromptMode.LINEAR_ONLY, space=CoordSpace.PADDED_1024, point=point
            )
        ok = PromptSet(
            mode=PromptMode.POINT_AND_BOX, space=CoordSpace.PADDED_1024, point=point, box=box
        )
        assert ok.point is point and ok.box is box

    def test_prompt_box_ordering(self):
        with pytest.raises(ShapeError):
            PromptSet(
                mode=PromptMode.BOX,
                space=CoordSpace.PADDED_1024,
                box=PromptBox(x_min=5.0, y_min=0.0, x_max=1.0, y_max=4.0),
            )

    def test_padded_coordinate_bounds(self):
        with pytest.raises(ShapeError):
            PromptSet(
                mode=PromptMode.POINT,
                space=CoordSpace.PADDED_1024,
                point=PromptPoint(x=1030.0, y=0.0),
            )

    def test_masks_are_immutable(self):
        m = BinaryMask(bits=np.zeros((4, 4), bool), space=CoordSpace.GRID_64)
        with pytest.raises(ValueError):
            m.bits[0, 0] = True
