import struct

import numpy as np
import pytest
import torch

from src.crowdmask.errors import InputError
from src.crowdmask.geometry import Point, PointSet
from src.crowdmask.io import (MAGIC, decode_tensor, dump_points, encode_tensor, parse_points, read_feature_map,
                              read_image, read_label_map, read_points, read_scalar_field, read_tensor,
                              write_feature_map, write_label_map, write_points, write_tensor)


def random_blob(rng):
    code = int(rng.integers(0, 2))
    dims = [int(d) for d in rng.integers(0, 5, size=int(rng.integers(0, 4)))]
    payload = rng.integers(0, 256, size=4 * int(np.prod(dims, dtype=np.int64)), dtype=np.uint8).tobytes()
    return MAGIC + struct.pack('<BB', code, len(dims)) + struct.pack(f'<{len(dims)}I', *dims) + payload


def test_decode_then_encode_is_byte_exact():
    # random payload bytes include NaN bit patterns, which must survive untouched
    rng = np.random.default_rng(0)
    for _ in range(1000):
        blob = random_blob(rng)
        assert encode_tensor(decode_tensor(blob)) == blob


def test_header_layout():
    blob = encode_tensor(np.arange(6, dtype=np.uint32).reshape(2, 3))
    assert blob[:4] == b'XTF1'
    assert blob[4] == 1 and blob[5] == 2
    assert struct.unpack_from('<2I', blob, 6) == (2, 3)
    assert struct.unpack_from('<6I', blob, 14) == (0, 1, 2, 3, 4, 5)
    assert encode_tensor(np.float32(1.5)) == b'XTF1\x00\x00' + struct.pack('<f', 1.5)


@pytest.mark.parametrize("blob", [
    b'XTF2\x00\x00',
    b'XT',
    b'XTF1\x07\x00\x00\x00\x00\x00',
    b'XTF1\x00\x02\x01\x00',
    b'XTF1\x00\x01\x02\x00\x00\x00' + b'\x00' * 4,
    b'XTF1\x00\x01\x01\x00\x00\x00' + b'\x00' * 5,
])
def test_decode_rejects_malformed_blobs(blob):
    with pytest.raises(InputError):
        decode_tensor(blob)


def test_encode_rejects_other_dtypes():
    with pytest.raises(InputError):
        encode_tensor(np.zeros(3, dtype=np.float64))
    with pytest.raises(InputError):
        encode_tensor(np.zeros(3, dtype=np.int32))


def test_typed_readers(tmp_path):
    fmap = torch.randn((2, 3, 4), dtype=torch.float64)
    write_feature_map(tmp_path / 'f.xtf', fmap)
    back = read_feature_map(tmp_path / 'f.xtf')
    assert back.dtype == torch.float64
    assert torch.equal(back, fmap.float().double())

    labels = torch.tensor([[0, 3], [7, 0]])
    write_label_map(tmp_path / 'l.xtf', labels)
    assert torch.equal(read_label_map(tmp_path / 'l.xtf'), labels)

    write_tensor(tmp_path / 's.xtf', np.ones((3, 4), dtype=np.float32))
    assert read_scalar_field(tmp_path / 's.xtf').shape == (3, 4)
    with pytest.raises(InputError):
        read_feature_map(tmp_path / 's.xtf')
    with pytest.raises(InputError):
        read_label_map(tmp_path / 's.xtf')
    with pytest.raises(InputError):
        read_scalar_field(tmp_path / 'l.xtf')

    write_tensor(tmp_path / 'i.xtf', np.full((4, 5, 3), 0.25, dtype=np.float32))
    image = read_image(tmp_path / 'i.xtf')
    assert image.dtype == np.float64 and image.shape == (4, 5, 3)
    with pytest.raises(InputError):
        read_image(tmp_path / 'f.xtf')


def test_read_errors_name_the_file(tmp_path):
    with pytest.raises(InputError, match='missing.xtf'):
        read_tensor(tmp_path / 'missing.xtf')
    (tmp_path / 'bad.xtf').write_bytes(b'nope')
    with pytest.raises(InputError, match='bad.xtf'):
        read_tensor(tmp_path / 'bad.xtf')
    with pytest.raises(InputError):
        write_label_map(tmp_path / 'neg.xtf', torch.tensor([[-1]]))


def test_parse_points():
    points = parse_points('[{"id": 2, "y": 1.5, "x": 3, "score": 0.9}, {"id": 1, "y": 0, "x": 0}]')
    assert points == PointSet((Point(2, 1.5, 3.0, 0.9), Point(1, 0.0, 0.0)))
    assert parse_points(dump_points(points)) == points


@pytest.mark.parametrize("text", [
    'not json',
    '{"id": 1}',
    '[{"id": 1, "y": 0}]',
    '[{"id": 1, "y": 0, "x": 0, "label": 3}]',
    '[{"id": "1", "y": 0, "x": 0}]',
    '[{"id": true, "y": 0, "x": 0}]',
    '[{"id": 1, "y": "0", "x": 0}]',
    '[{"id": 1, "y": 0, "x": 0, "score": 1.5}]',
    '[{"id": 1, "y": 0, "x": 0}, {"id": 1, "y": 2, "x": 2}]',
    '[3]',
])
def test_parse_points_rejects_malformed_documents(text):
    with pytest.raises(InputError):
        parse_points(text)


def test_points_file_round_trip(tmp_path):
    points = PointSet.from_coords([(1.25, 2.5), (3.0, 4.0)], scores=[0.5, 1.0])
    write_points(tmp_path / 'p.json', points)
    assert read_points(tmp_path / 'p.json') == points
    with pytest.raises(InputError):
        read_points(tmp_path / 'absent.json')
