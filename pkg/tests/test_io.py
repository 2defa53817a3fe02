import json

import numpy as np
import pytest

from nlpde.io import (
    MAGIC,
    SnapshotFormatError,
    csv_text,
    decode_snapshot,
    dump_json,
    encode_snapshot,
    read_csv,
    read_snapshot,
    write_csv,
    write_snapshot,
)
from nlpde.spectral import SpectralField, TorusGrid


def _field(rng, m=2):
    g = TorusGrid(2, 8, 3.5)
    c = rng.standard_normal((m,) + g.shape) + 1j * rng.standard_normal((m,) + g.shape)
    return SpectralField(g, c, 0.125)


class TestSnapshot:
    def test_roundtrip_bit_exact(self, rng, tmp_path):
        f = _field(rng)
        write_snapshot(tmp_path / "a.nlpf", f)
        g = read_snapshot(tmp_path / "a.nlpf")
        assert g.grid == f.grid and g.time == f.time
        assert g.coeffs.tobytes() == f.coeffs.tobytes()

    def test_layout(self, rng):
        data = encode_snapshot(_field(rng, m=1))
        assert data.startswith(MAGIC)
        header = json.loads(data[len(MAGIC):].split(b"\n", 1)[0])
        assert header["layout"] == "row-major complex interleaved little-endian float64"
        assert {"d", "n", "period", "m", "time"} <= set(header)
        payload = data.split(b"\n", 2)[2]
        assert len(payload) == 8 * 8 * 16

    def test_encoding_is_deterministic(self, rng):
        f = _field(rng)
        assert encode_snapshot(f) == encode_snapshot(f)

    @pytest.mark.parametrize("mutate", [
        lambda b: b"XXXXX\n" + b[6:],
        lambda b: b[:-16],
        lambda b: b.split(b"\n")[0] + b"\n",
    ])
    def test_corrupt(self, rng, mutate):
        with pytest.raises(SnapshotFormatError):
            decode_snapshot(mutate(encode_snapshot(_field(rng))))


class TestTables:
    def test_csv_roundtrip_exact_floats(self, tmp_path):
        rows = [[0.1, 1 / 3, 2], [1e-300, -0.0, 7]]
        write_csv(tmp_path / "t.csv", ["a", "b", "c"], rows)
        header, back = read_csv(tmp_path / "t.csv")
        assert header == ["a", "b", "c"]
        assert [float(x) for x in back[0][:2]] == [0.1, 1 / 3]
        assert float(back[1][0]) == 1e-300

    def test_csv_text_stable(self):
        assert csv_text(["x"], [[0.5]]) == "x\n0.5\n"

    def test_json_numpy(self):
        s = dump_json({"b": np.float64(1.5), "a": np.arange(2)})
        assert json.loads(s) == {"a": [0, 1], "b": 1.5}
        assert s.index('"a"') < s.index('"b"')

    def test_atomic_write_leaves_no_temp(self, tmp_path):
        write_csv(tmp_path / "x.csv", ["a"], [[1.0]])
        assert sorted(p.name for p in tmp_path.iterdir()) == ["x.csv"]
