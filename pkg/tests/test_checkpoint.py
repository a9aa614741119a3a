import numpy as np
import pytest

from acevc.nn import Adam, Linear, Module, ParamGroup, Tensor
from acevc.nn.checkpoint import (ContainerKindError, ContainerVersionError,
                                 CorruptContainerError, FingerprintError,
                                 load_model_arrays, model_arrays,
                                 read_container, write_container)


class TinyModel(Module):
    def __init__(self, rng):
        super().__init__()
        self.backbone = Linear(3, 4, "backbone", rng)
        self.head = Linear(4, 2, "heads", rng)


def trained_model_and_opt(seed=0, steps=3):
    rng = np.random.default_rng(seed)
    model = TinyModel(rng)
    groups = [ParamGroup(name, members, 1e-3)
              for name, members in model.param_groups().items()]
    opt = Adam(groups)
    for _ in range(steps):
        model.zero_grad()
        out = model.head(model.backbone(Tensor(
            rng.normal(size=(5, 3)).astype(np.float32))))
        (out * out).mean().backward()
        opt.step()
    return model, opt


def test_round_trip_bit_exact(tmp_path):
    model, opt = trained_model_and_opt()
    path = tmp_path / "model.ckpt"
    write_container(path, "extractor", "cfg-text", model_arrays(model, opt))
    box = read_container(path, expect_kind="extractor")
    assert box.config_text == "cfg-text"

    rng = np.random.default_rng(99)
    clone = TinyModel(rng)
    clone_opt = Adam([ParamGroup(name, members, 1e-3)
                      for name, members in clone.param_groups().items()])
    load_model_arrays(clone, box.arrays, optimizer=clone_opt)
    for name, p in clone.named_parameters().items():
        np.testing.assert_array_equal(
            p.data, model.named_parameters()[name].data)
    assert clone_opt.step_count == opt.step_count
    for name in opt.m:  # optimizer moments too
        np.testing.assert_array_equal(clone_opt.m[name], opt.m[name])
        np.testing.assert_array_equal(clone_opt.v[name], opt.v[name])


def test_save_is_deterministic(tmp_path):
    model, opt = trained_model_and_opt()
    a, b = tmp_path / "a.ckpt", tmp_path / "b.ckpt"
    write_container(a, "extractor", "cfg", model_arrays(model, opt))
    write_container(b, "extractor", "cfg", model_arrays(model, opt))
    assert a.read_bytes() == b.read_bytes()


def test_truncated_file_fails_checksum(tmp_path):
    model, opt = trained_model_and_opt()
    path = tmp_path / "model.ckpt"
    write_container(path, "extractor", "cfg", model_arrays(model, opt))
    blob = path.read_bytes()
    path.write_bytes(blob[:-10])
    with pytest.raises(CorruptContainerError):
        read_container(path)


def test_flipped_byte_fails_checksum(tmp_path):
    model, opt = trained_model_and_opt()
    path = tmp_path / "model.ckpt"
    write_container(path, "extractor", "cfg", model_arrays(model, opt))
    blob = bytearray(path.read_bytes())
    blob[len(blob) // 2] ^= 0xFF
    path.write_bytes(bytes(blob))
    with pytest.raises(CorruptContainerError):
        read_container(path)


def test_wrong_kind_rejected(tmp_path):
    model, _ = trained_model_and_opt()
    path = tmp_path / "model.ckpt"
    write_container(path, "extractor", "cfg", model_arrays(model))
    with pytest.raises(ContainerKindError):
        read_container(path, expect_kind="synthesizer")


def test_wrong_version_rejected(tmp_path):
    model, _ = trained_model_and_opt()
    path = tmp_path / "model.ckpt"
    write_container(path, "extractor", "cfg", model_arrays(model))
    blob = bytearray(path.read_bytes())
    blob[6] = 9  # version field follows the 6 magic bytes
    # restore the trailing CRC over the altered body
    import struct
    import zlib
    body = bytes(blob[:-4])
    blob[-4:] = struct.pack("<I", zlib.crc32(body) & 0xFFFFFFFF)
    path.write_bytes(bytes(blob))
    with pytest.raises(ContainerVersionError):
        read_container(path)


def test_fingerprint_mismatch_rejected(tmp_path):
    model, _ = trained_model_and_opt()
    path = tmp_path / "model.ckpt"
    write_container(path, "extractor", "cfg-A", model_arrays(model))
    from acevc.nn.checkpoint import config_fingerprint
    with pytest.raises(FingerprintError):
        read_container(path,
                       expect_fingerprint=config_fingerprint("extractor", "cfg-B"))
