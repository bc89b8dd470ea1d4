import csv
import json

import pytest

from elfbuild import ET_DYN, build_elf
from fwforge import packer
from fwforge.cli import run
from fwforge.container import ChunkEntry
from fwforge.keystore import load_keystore_file, save_keystore


@pytest.fixture
def keys_file(tmp_path, store):
    p = tmp_path / "keys.tsv"
    p.write_text(save_keystore(store))
    return p


@pytest.fixture
def image(tmp_path, store):
    key = next(r for r in store if r.identifier == "RREK")
    blob = packer.pack_image(bytes(range(64)), "kernel", key, packer.load_test_signing_key(),
                             [ChunkEntry(b"HEAD", 0, 16), ChunkEntry(b"BODY", 16, 48)], 5)
    p = tmp_path / "kernel.fw"
    p.write_bytes(blob)
    return p


def json_out(capsys, argv, code=0):
    assert run(argv) == code
    return json.loads(capsys.readouterr().out)


def test_inspect_table(capsys, image):
    assert run(["inspect", str(image)]) == 0
    out = capsys.readouterr().out
    assert "magic" in out and "kernel" in out and "chunk[1]" in out


def test_inspect_json(capsys, image):
    d = json_out(capsys, ["inspect", str(image), "--json"])
    assert d["kind"] == "encrypted_image"
    assert d["header_size"] == 192 + 32
    assert [c["name"] for c in d["chunks"]] == ["HEAD", "BODY"]


def test_inspect_non_container_fails(capsys, tmp_path):
    f = tmp_path / "a.ini"
    f.write_text("[x]\n")
    assert run(["inspect", str(f)]) == 1
    assert "BadMagic" in capsys.readouterr().err


def test_decrypt_missing_file(capsys, keys_file, tmp_path):
    assert run(["decrypt", str(tmp_path / "absent.fw"), "--keys", str(keys_file)]) == 1
    err = capsys.readouterr().err
    assert "absent.fw" in err


def test_unknown_subcommand_is_usage_error(capsys):
    assert run(["bogus"]) == 2
    assert run([]) == 2


def test_jobs_must_be_positive(capsys, tmp_path, keys_file):
    assert run(["batch", str(tmp_path), "--keys", str(keys_file), "--out", str(tmp_path / "o"),
                "--jobs", "0"]) == 2


def test_decrypt_writes_payload_and_chunks(capsys, image, keys_file, tmp_path):
    d = json_out(capsys, ["decrypt", str(image), "--keys", str(keys_file), "--out", str(tmp_path / "o"), "--json"])
    assert d["status"] == "decrypted"
    assert (tmp_path / "o/kernel.fw.dec").read_bytes() == bytes(range(64))
    assert (tmp_path / "o/kernel.fw.chunk.HEAD").read_bytes() == bytes(range(16))
    assert len(d["written"]) == 3


def test_decrypt_keys_from_env(capsys, image, keys_file, monkeypatch):
    monkeypatch.setenv("FWFORGE_KEYS", str(keys_file))
    assert run(["decrypt", str(image)]) == 0
    assert "decrypted" in capsys.readouterr().out


def test_decrypt_without_keystore_is_usage_error(capsys, image, monkeypatch):
    monkeypatch.delenv("FWFORGE_KEYS", raising=False)
    assert run(["decrypt", str(image)]) == 2


def test_decrypt_unknown_key_exits_1(capsys, image, tmp_path):
    empty = tmp_path / "empty.tsv"
    empty.write_text("")
    assert run(["decrypt", str(image), "--keys", str(empty)]) == 1
    assert "no_key_for_identifier" in capsys.readouterr().out


def test_classify(capsys, image, tmp_path):
    f = tmp_path / "x.cfg"
    f.write_text("a=1")
    d = json_out(capsys, ["classify", str(image), str(f), "--json"])
    assert [r["kind"] for r in d] == ["encrypted_image", "not_a_container"]


def test_gen_corpus_then_batch(capsys, tmp_path):
    spec = tmp_path / "spec.json"
    spec.write_text(json.dumps({"n_encrypted_known": 12, "n_encrypted_unknown": 2, "n_plain": 3}))
    out = tmp_path / "gen"
    summary = json_out(capsys, ["gen-corpus", "--spec", str(spec), "--seed", "4", "--out", str(out), "--json"])
    assert summary["files"] == 17
    assert len(load_keystore_file(out / "keys.tsv")) > 0
    report = json_out(capsys, ["batch", str(out / "corpus"), "--keys", str(out / "keys.tsv"),
                               "--out", str(tmp_path / "dec"), "--json", "--jobs", "2"])
    assert report["decrypted"] == 12 and report["passthrough"] == 3
    assert report["success_ratio"] == "85.71%"
    assert run(["batch", str(out / "corpus"), "--keys", str(out / "keys.tsv"),
                "--out", str(tmp_path / "dec2")]) == 0
    assert "85.71%" in capsys.readouterr().out


def test_gen_corpus_requires_seed(capsys, tmp_path):
    spec = tmp_path / "spec.json"
    spec.write_text("{}")
    assert run(["gen-corpus", "--spec", str(spec), "--out", str(tmp_path / "g")]) == 2


def test_pack_roundtrip(capsys, tmp_path, keys_file, store):
    payload = tmp_path / "blob.bin"
    payload.write_bytes(b"hello firmware" * 7)
    label = next(r.version_label for r in store if r.identifier == "IAEK")
    fw = tmp_path / "blob.fw"
    d = json_out(capsys, ["pack", str(payload), "--use", label, "--keys", str(keys_file), "--sign", "test",
                          "--chunk", "AAAA:0:14", "-o", str(fw), "--json"])
    assert d["key_version"] == label
    r = json_out(capsys, ["decrypt", str(fw), "--keys", str(keys_file), "--json"])
    assert r["key_version"] == label and r["signature"] == "valid"


def test_pack_plain_and_errors(capsys, tmp_path, keys_file):
    payload = tmp_path / "c.ini"
    payload.write_text("x=1\n")
    assert run(["pack", str(payload), "--plain", "-o", str(tmp_path / "c.fw")]) == 0
    capsys.readouterr()
    d = json_out(capsys, ["classify", str(tmp_path / "c.fw"), "--json"])
    assert d[0]["kind"] == "signed_plain_file"
    assert run(["pack", str(payload), "--plain"]) == 2
    assert run(["pack", str(payload), "-o", str(tmp_path / "y")]) == 2
    assert run(["pack", str(payload), "--plain", "--chunk", "bad", "-o", str(tmp_path / "z")]) == 2
    assert run(["pack", str(payload), "--use", "NOPE", "--keys", str(keys_file), "-o", str(tmp_path / "w")]) == 1


def test_keys_validate_and_list(capsys, keys_file, tmp_path):
    d = json_out(capsys, ["keys", "validate", str(keys_file), "--json"])
    assert d["valid"] and "PRAK" in d["identifiers"]
    rows = json_out(capsys, ["keys", "list", str(keys_file), "--json"])
    assert {"identifier", "version_label", "role", "length"} <= set(rows[0])
    bad = tmp_path / "bad.tsv"
    bad.write_text("RREK\tx\tzz\n")
    assert run(["keys", "validate", str(bad)]) == 1
    assert "line 1" in capsys.readouterr().err


@pytest.fixture
def sysroot(tmp_path):
    root = tmp_path / "sys"
    (root / "lib").mkdir(parents=True)
    (root / "lib/liba.so").write_bytes(build_elf(["libb.so"], e_type=ET_DYN))
    (root / "lib/libb.so").write_bytes(build_elf(e_type=ET_DYN))
    (root / "bin").mkdir()
    (root / "bin/app").write_bytes(build_elf(["liba.so"]))
    (root / "bin/broken").write_bytes(build_elf(["liba.so", "libmagic.so"]))
    return root


def test_deps(capsys, sysroot):
    d = json_out(capsys, ["deps", str(sysroot / "bin/app"), "--sysroot", str(sysroot), "--json"])
    assert set(d["resolved"]) == {"liba.so", "libb.so"} and d["missing"] == []
    assert run(["deps", str(sysroot / "bin/broken"), "--sysroot", str(sysroot)]) == 1
    assert "libmagic.so" in capsys.readouterr().out


def test_rootfs(capsys, sysroot, tmp_path):
    out = tmp_path / "rootfs"
    d = json_out(capsys, ["rootfs", str(sysroot / "bin/app"), "--sysroot", str(sysroot),
                          "--out", str(out), "--apply", "--json"])
    assert d["applied"] and (out / "lib/libb.so").is_file() and (out / "bin/app").is_file()
    assert any("pre-5.0" in n for n in d["notes"])
    assert run(["rootfs", str(sysroot / "bin/broken"), "--sysroot", str(sysroot), "--out", str(out)]) == 1
    assert run(["rootfs", str(sysroot / "bin/broken"), "--sysroot", str(sysroot), "--out", str(out),
                "--allow-missing"]) == 0


def test_campaign(capsys, tmp_path):
    d = json_out(capsys, ["campaign", "--profile", "name=drone,exec_us=18700,battery_min=30",
                          "--profile", "board", "--target", "100000", "--json"])
    assert d["plans"][0]["achievable_execs"] == 96256 and not d["plans"][0]["feasible"]
    assert d["speedup"]["drone/embedded-board"] == pytest.approx(3.85, abs=0.01)
    csv_path = tmp_path / "t.csv"
    assert run(["campaign", "--profile", "drone", "--profile", "board", "--target", "10",
                "--csv", str(csv_path), "--cycles", "1", "10"]) == 0
    assert "3.85x" in capsys.readouterr().out
    rows = list(csv.DictReader(csv_path.open()))
    assert [r["cycles"] for r in rows] == ["1", "10"]
    assert run(["campaign", "--profile", "junk", "--target", "1"]) == 2


def test_fuzz_config(capsys, sysroot, tmp_path):
    seeds = tmp_path / "seeds"
    seeds.mkdir()
    d = json_out(capsys, ["fuzz-config", str(sysroot / "bin/app"), "--rootfs", str(sysroot),
                          "--corpus", str(seeds), "--profile", "drone", "--out", str(tmp_path / "f"), "--json"])
    assert d["timeout_us"] == "187000" and d["command"][0] == "afl-fuzz"
    assert (tmp_path / "f/fuzz.conf").is_file()
    assert run(["fuzz-config", str(tmp_path / "nope"), "--rootfs", str(sysroot), "--corpus", str(seeds)]) == 1
