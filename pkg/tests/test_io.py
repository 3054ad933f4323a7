import json

import numpy as np
import pytest

from meanfield.dynamics import (AttractionRepulsionKernel, GaussianKernel, ParticleState, SystemSpec,
                                Trajectory, simulate)
from meanfield.errors import FormatError
from meanfield.io import (config_hash, load_checkpoint, model_from_dict, model_to_dict, read_trajectory,
                          save_checkpoint, trajectory_bytes, trajectory_from_bytes, write_trajectory)
from meanfield.mvnn import MgMvnnModel, MvnnModel


def first_order_traj():
    spec = SystemSpec(order=1, d=2, drift_form="motsch_tadmor", kernel=GaussianKernel(0.5), sigma=0.1)
    x = np.random.default_rng(0).normal(size=(5, 2))
    return simulate(spec, ParticleState(x), 2, 0.01, seed=3)


def second_order_traj():
    spec = SystemSpec(order=2, d=2, drift_form="cucker_smale", kernel=AttractionRepulsionKernel())
    rng = np.random.default_rng(1)
    return simulate(spec, ParticleState(rng.normal(size=(4, 2)), rng.normal(size=(4, 2))), 3, 0.05)


def multigroup_traj():
    spec = SystemSpec(order=1, d=1, drift_form="multigroup", group_sizes=(3, 2),
                      influence=((1.0, 2.0), (0.0, 1.0)), radii=(1.0, 2.0))
    x = np.random.default_rng(2).normal(size=(5, 1))
    return simulate(spec, ParticleState(x, group_sizes=(3, 2)), 2, 0.01)


def assert_same_traj(a, b):
    assert a.positions.tobytes() == b.positions.tobytes()
    assert (a.velocities is None) == (b.velocities is None)
    if a.velocities is not None:
        assert a.velocities.tobytes() == b.velocities.tobytes()
    assert a.spec == b.spec and a.dt == b.dt and a.seed == b.seed and a.meta == b.meta


class TestTrajectoryFormat:
    @pytest.mark.parametrize("make", [first_order_traj, second_order_traj, multigroup_traj])
    def test_round_trip(self, make, tmp_path):
        traj = make()
        write_trajectory(tmp_path / "t.bin", traj)
        assert_same_traj(traj, read_trajectory(tmp_path / "t.bin"))

    def test_header_fields(self):
        buf = trajectory_bytes(first_order_traj())
        assert buf[:4] == b"MVNT"
        assert int.from_bytes(buf[4:8], "little") == 1

    def test_bad_magic(self):
        buf = bytearray(trajectory_bytes(first_order_traj()))
        buf[0:4] = b"XXXX"
        with pytest.raises(FormatError, match="magic"):
            trajectory_from_bytes(bytes(buf))

    def test_future_version(self):
        buf = bytearray(trajectory_bytes(first_order_traj()))
        buf[4:8] = (2).to_bytes(4, "little")
        with pytest.raises(FormatError, match="version"):
            trajectory_from_bytes(bytes(buf))

    def test_truncated(self):
        buf = trajectory_bytes(second_order_traj())
        with pytest.raises(FormatError, match="truncated"):
            trajectory_from_bytes(buf[:-8])

    def test_trailing(self):
        with pytest.raises(FormatError):
            trajectory_from_bytes(trajectory_bytes(first_order_traj()) + b"\0")

    def test_meta_preserved(self, tmp_path):
        traj = first_order_traj()
        traj.meta = {"config_hash": "ab" * 32, "learned": True}
        write_trajectory(tmp_path / "t.bin", traj)
        assert read_trajectory(tmp_path / "t.bin").meta == traj.meta

    def test_no_partial_file(self, tmp_path):
        write_trajectory(tmp_path / "t.bin", first_order_traj())
        assert [p.name for p in tmp_path.iterdir()] == ["t.bin"]


class TestCheckpoint:
    @pytest.mark.parametrize("model", [
        MvnnModel.create(2, k=3, emb_hidden=(4,), int_hidden=(5, 5), seed=1),
        MvnnModel.create(2, k=3, order=2, activation="relu", seed=2),
        MgMvnnModel.create(1, [2, 3, 1], emb_hidden=(4,), int_hidden=(4,), seed=3),
    ])
    def test_round_trip_bit_exact(self, model, tmp_path):
        save_checkpoint(tmp_path / "m.json", model, {"config_hash": "x"})
        loaded, meta = load_checkpoint(tmp_path / "m.json")
        assert meta == {"config_hash": "x"}
        assert type(loaded) is type(model)
        for a, b in zip(model.nets(), loaded.nets()):
            assert a.layer_dims == b.layer_dims and a.activation == b.activation
            for x, y in zip(a.arrays(), b.arrays()):
                assert x.tobytes() == y.tobytes()

    def test_document_fields(self):
        doc = model_to_dict(MvnnModel.create(1, k=2, seed=0))
        assert doc["format_version"] == 1 and doc["model_kind"] == "mvnn" and doc["k"] == 2

    def test_unknown_version(self):
        doc = model_to_dict(MvnnModel.create(1, k=2, seed=0))
        doc["format_version"] = 7
        with pytest.raises(FormatError):
            model_from_dict(doc)

    def test_not_json(self, tmp_path):
        (tmp_path / "m.json").write_text("{nope")
        with pytest.raises(FormatError):
            load_checkpoint(tmp_path / "m.json")

    def test_unknown_kind(self):
        doc = model_to_dict(MvnnModel.create(1, k=2, seed=0))
        doc["model_kind"] = "transformer"
        with pytest.raises(FormatError):
            model_from_dict(doc)


class TestConfigHash:
    def test_key_order_irrelevant(self):
        assert config_hash({"a": 1, "b": [1, 2]}) == config_hash({"b": [1, 2], "a": 1})

    def test_value_sensitive(self):
        assert config_hash({"a": 1.0}) != config_hash({"a": 1.0000001})

    def test_hex_digest(self):
        h = config_hash({})
        assert len(h) == 64 and h == "44136fa355b3678a1146ad16f7e8649e94fb4fc21fe77e8310c060f61caaff8a"
        assert json.dumps({}, sort_keys=True, separators=(",", ":")) == "{}"
