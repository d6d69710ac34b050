import numpy as np
import pytest
from vseg.exceptions import DataError, MalformedHeaderError, ShapeError, TruncatedDataError, UnknownDTypeError
from vseg.volume import (Volume, LabeledVolume, volume_paths, save_volume, load_volume, read_pgm, write_pgm,
                         list_slices, stack_slices, export_slices)


class TestVolume:
    def test_rejects_non_3d(self):
        with pytest.raises(ShapeError):
            Volume(np.zeros((4, 4), dtype=np.uint8))

    def test_rejects_unsupported_dtype(self):
        with pytest.raises(UnknownDTypeError):
            Volume(np.zeros((2, 2, 2), dtype=np.int64))

    def test_labeled_dims_must_match(self):
        with pytest.raises(DataError):
            LabeledVolume(Volume(np.zeros((2, 2, 2), np.uint8)), Volume(np.zeros((2, 2, 3), np.uint8)))

    def test_labeled_mask_must_be_binary(self):
        with pytest.raises(DataError):
            LabeledVolume(Volume(np.zeros((2, 2, 2), np.uint8)), Volume(np.full((2, 2, 2), 2, np.uint8)))


class TestContainer:
    def test_paths(self, tmp_path):
        header, raw = volume_paths(tmp_path / 'scan.vhdr')
        assert (header.name, raw.name) == ('scan.vhdr', 'scan.vol')
        assert volume_paths(tmp_path / 'scan') == (header, raw)

    @pytest.mark.parametrize('dtype', [np.uint8, np.uint16, np.float32])
    def test_save_load(self, tmp_path, rng, dtype):
        data = (rng.random((3, 4, 5)) * 200).astype(dtype)
        volume = Volume(data, spacing=0.00245)
        save_volume(volume, tmp_path / 'v')
        assert load_volume(tmp_path / 'v').equals(volume)

    def test_u16_extremes(self, tmp_path):
        data = np.array([0, 1, 65534, 65535] * 2, dtype=np.uint16).reshape(2, 2, 2)
        save_volume(Volume(data), tmp_path / 'v')
        assert (tmp_path / 'v.vol').read_bytes()[:4] == b'\x00\x00\x01\x00'
        np.testing.assert_array_equal(load_volume(tmp_path / 'v').data, data)

    def test_truncated(self, tmp_path):
        save_volume(Volume(np.ones((2, 2, 2), np.uint16)), tmp_path / 'v')
        raw = tmp_path / 'v.vol'
        raw.write_bytes(raw.read_bytes()[:-1])
        with pytest.raises(TruncatedDataError):
            load_volume(tmp_path / 'v')

    def test_trailing_bytes(self, tmp_path):
        save_volume(Volume(np.ones((2, 2, 2), np.uint8)), tmp_path / 'v')
        with open(tmp_path / 'v.vol', 'ab') as f:
            f.write(b'\x00')
        with pytest.raises(MalformedHeaderError):
            load_volume(tmp_path / 'v')

    def test_unknown_dtype(self, tmp_path):
        (tmp_path / 'v.vhdr').write_text('dims = 1 1 1\ndtype = i64\n')
        (tmp_path / 'v.vol').write_bytes(b'\x00' * 8)
        with pytest.raises(UnknownDTypeError):
            load_volume(tmp_path / 'v')

    @pytest.mark.parametrize('header', ['dims 1 1 1\ndtype = u8\n', 'dtype = u8\n', 'dims = 1 1\ndtype = u8\n', 'dims = a b c\ndtype = u8\n'])
    def test_malformed_header(self, tmp_path, header):
        (tmp_path / 'v.vhdr').write_text(header)
        (tmp_path / 'v.vol').write_bytes(b'\x00')
        with pytest.raises(MalformedHeaderError):
            load_volume(tmp_path / 'v')

    def test_missing(self, tmp_path):
        with pytest.raises(DataError):
            load_volume(tmp_path / 'absent')

    def test_default_spacing_and_comments(self, tmp_path):
        (tmp_path / 'v.vhdr').write_text('# scan\ndims = 1 1 2\ndtype = u8\n')
        (tmp_path / 'v.vol').write_bytes(b'\x01\x02')
        volume = load_volume(tmp_path / 'v')
        assert volume.spacing == 1.0 and volume.data.tolist() == [[[1, 2]]]


class TestSlices:
    @pytest.mark.parametrize('dtype, top', [(np.uint8, 255), (np.uint16, 65535)])
    def test_pgm_round_trip(self, tmp_path, rng, dtype, top):
        data = rng.integers(0, top + 1, size=(5, 7)).astype(dtype)
        data[0, 0] = top
        write_pgm(data, tmp_path / 's.pgm')
        back = read_pgm(tmp_path / 's.pgm')
        assert back.dtype == dtype
        np.testing.assert_array_equal(back, data)

    def test_write_rejects_3d(self, tmp_path):
        with pytest.raises(DataError):
            write_pgm(np.zeros((2, 2, 2), np.uint8), tmp_path / 's.pgm')

    def test_read_garbage(self, tmp_path):
        (tmp_path / 's.pgm').write_bytes(b'not an image')
        with pytest.raises(DataError):
            read_pgm(tmp_path / 's.pgm')

    def test_stack_order(self, tmp_path):
        for k in range(3):
            write_pgm(np.full((2, 3), k * 10, np.uint8), tmp_path / f'slice_{k:04d}.pgm')
        volume = stack_slices(list_slices(tmp_path), spacing=0.5)
        assert volume.dims == (3, 2, 3) and volume.spacing == 0.5
        assert [int(volume.slice(k)[0, 0]) for k in range(3)] == [0, 10, 20]

    def test_stack_mismatch(self, tmp_path):
        write_pgm(np.zeros((2, 3), np.uint8), tmp_path / 'a.pgm')
        write_pgm(np.zeros((3, 3), np.uint8), tmp_path / 'b.pgm')
        with pytest.raises(DataError):
            stack_slices(list_slices(tmp_path))

    def test_stack_empty(self):
        with pytest.raises(DataError):
            stack_slices([])

    def test_export_then_stack(self, tmp_path, rng):
        volume = Volume(rng.integers(0, 256, size=(4, 3, 5)).astype(np.uint8))
        paths = export_slices(volume, tmp_path / 'out')
        assert [p.name for p in paths] == [f'slice_{k:04d}.pgm' for k in range(4)]
        assert stack_slices(paths).equals(volume)

    def test_export_probabilities(self, tmp_path):
        volume = Volume(np.array([0.0, 0.5, 1.0, 2.0], dtype=np.float32).reshape(1, 2, 2))
        paths = export_slices(volume, tmp_path)
        np.testing.assert_array_equal(read_pgm(paths[0]), [[0, 128], [255, 255]])
