import random

import pytest

from elfbuild import ET_DYN, build_elf, random_dag, reachable, write_library_graph
from fwforge.depres import PRE_LOLLIPOP_NOTE, find_library, resolve_closure, stage_rootfs
from fwforge.errors import MissingDependencies


def put(path, blob):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(blob)
    return path


def test_chain(tmp_path):
    sysroot = tmp_path / "sys"
    put(sysroot / "lib/libB.so", build_elf(e_type=ET_DYN, soname="libB.so"))
    put(sysroot / "lib/libA.so", build_elf(["libB.so"], e_type=ET_DYN, soname="libA.so"))
    root = put(tmp_path / "app", build_elf(["libA.so"]))
    c = resolve_closure(root, [sysroot])
    assert set(c.resolved) == {"libA.so", "libB.so"}
    assert c.missing == []
    assert (str(c.resolved["libA.so"]), "libB.so") in c.edges


def test_cycle_back_to_root_soname(tmp_path):
    sysroot = tmp_path / "sys"
    put(sysroot / "lib/libA.so", build_elf(["libroot.so"], e_type=ET_DYN, soname="libA.so"))
    root = put(sysroot / "lib/libroot.so", build_elf(["libA.so"], e_type=ET_DYN, soname="libroot.so"))
    c = resolve_closure(root, [sysroot])
    assert set(c.resolved) == {"libA.so"}
    assert c.missing == []


def test_missing_library(tmp_path):
    root = put(tmp_path / "app", build_elf(["libmagic.so", "libc.so"]))
    put(tmp_path / "sys/lib/libc.so", build_elf(e_type=ET_DYN))
    c = resolve_closure(root, [tmp_path / "sys"])
    assert c.missing == ["libmagic.so"]
    with pytest.raises(MissingDependencies) as info:
        stage_rootfs(c, c.summaries.values(), tmp_path / "rootfs")
    assert info.value.names == ["libmagic.so"]
    plan = stage_rootfs(c, c.summaries.values(), tmp_path / "rootfs", allow_missing=True)
    assert plan.missing == ["libmagic.so"]
    assert any("libmagic.so" in n for n in plan.notes)


def test_system_lib_layout_preserved(tmp_path):
    sysroot = tmp_path / "android"
    lib = put(sysroot / "system/lib/liblog.so", build_elf(e_type=ET_DYN))
    root = put(sysroot / "system/bin/cam", build_elf(["liblog.so"]))
    c = resolve_closure(root, [sysroot])
    plan = stage_rootfs(c, c.summaries.values(), tmp_path / "rootfs", apply=True)
    dest = tmp_path / "rootfs"
    assert (lib, dest / "system/lib/liblog.so") in plan.entries
    assert (root, dest / "system/bin/cam") in plan.entries
    assert (dest / "system/lib/liblog.so").read_bytes() == lib.read_bytes()
    assert plan.applied


def test_static_root_plan_is_only_root(tmp_path):
    root = put(tmp_path / "busybox", build_elf())
    c = resolve_closure(root, [tmp_path / "nowhere"])
    plan = stage_rootfs(c, c.summaries.values(), tmp_path / "r")
    assert plan.entries == [(root, tmp_path / "r" / "busybox")]


def test_pre_lollipop_note(tmp_path):
    exe = put(tmp_path / "old", build_elf())
    pie = put(tmp_path / "new", build_elf(e_type=ET_DYN, interp="/system/bin/linker"))
    c1 = resolve_closure(exe, [])
    c2 = resolve_closure(pie, [])
    assert PRE_LOLLIPOP_NOTE in stage_rootfs(c1, c1.summaries.values(), tmp_path / "a").notes
    assert stage_rootfs(c2, c2.summaries.values(), tmp_path / "b").notes == []
    assert "requires pre-5.0 runtime" in PRE_LOLLIPOP_NOTE


def test_non_pie_shared_root_gets_no_note(tmp_path):
    so = put(tmp_path / "libx.so", build_elf(e_type=ET_DYN, soname="libx.so"))
    c = resolve_closure(so, [])
    assert stage_rootfs(c, c.summaries.values(), tmp_path / "r").notes == []


def test_first_root_wins(tmp_path):
    a = put(tmp_path / "a/lib/libc.so", build_elf(e_type=ET_DYN))
    put(tmp_path / "b/lib/libc.so", build_elf(e_type=ET_DYN))
    root = put(tmp_path / "app", build_elf(["libc.so"]))
    c = resolve_closure(root, [tmp_path / "a", tmp_path / "b"])
    assert c.resolved["libc.so"] == a
    assert find_library("libc.so", [tmp_path / "b", tmp_path / "a"])[0] == tmp_path / "b/lib/libc.so"


def test_subdir_precedence(tmp_path):
    put(tmp_path / "s/usr/lib/libq.so", build_elf(e_type=ET_DYN))
    put(tmp_path / "s/lib/libq.so", build_elf(e_type=ET_DYN))
    assert find_library("libq.so", [tmp_path / "s"])[0] == tmp_path / "s/lib/libq.so"


def test_unparseable_library_counts_as_missing(tmp_path):
    put(tmp_path / "s/lib/libbad.so", b"not an elf at all")
    root = put(tmp_path / "app", build_elf(["libbad.so"]))
    c = resolve_closure(root, [tmp_path / "s"])
    assert c.missing == ["libbad.so"]
    assert c.warnings and "libbad.so" in c.warnings[0]


def test_render_tree(tmp_path):
    put(tmp_path / "s/lib/libB.so", build_elf(e_type=ET_DYN))
    put(tmp_path / "s/lib/libA.so", build_elf(["libB.so"], e_type=ET_DYN))
    root = put(tmp_path / "app", build_elf(["libA.so", "libB.so", "libnope.so"]))
    text = resolve_closure(root, [tmp_path / "s"]).render_tree()
    assert "libnope.so => not found" in text
    assert "(see above)" in text


def check_random_dag(tmp_path, seed):
    rng = random.Random(seed)
    names, graph, present = random_dag(rng, rng.randint(1, 32))
    order = sorted(present)
    rng.shuffle(order)
    sysroot = tmp_path / f"dag{seed}"
    write_library_graph(sysroot, graph, present, order)
    start = rng.sample(names, rng.randint(0, min(3, len(names))))
    root = put(sysroot / "bin/target", build_elf(start))
    c = resolve_closure(root, [sysroot])
    want_found, want_missing = reachable(graph, start, present)
    assert set(c.resolved) == want_found
    assert c.missing == sorted(want_missing)
    assert len(c.resolved) == len(set(c.resolved.values()))


@pytest.mark.parametrize("seed", range(25))
def test_random_dag_matches_oracle(tmp_path, seed):
    check_random_dag(tmp_path, seed)
