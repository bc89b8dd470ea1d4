"""Minimal ELF reader: ident, header, program headers, dynamic section.

Only what dependency resolution needs: machine, type, PIE-ness, NEEDED
entries, SONAME and the program interpreter. 32/64-bit, either byte order.
Every read is bounds-checked against the input buffer.
"""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass, field

from fwforge.errors import MalformedElf, NotElf

ELF_MAGIC = b"\x7fELF"

ET_REL, ET_EXEC, ET_DYN = 1, 2, 3
PT_LOAD, PT_DYNAMIC, PT_INTERP = 1, 2, 3
SHT_STRTAB, SHT_DYNAMIC = 3, 6
DT_NULL, DT_NEEDED, DT_STRTAB, DT_STRSZ, DT_SONAME = 0, 1, 5, 10, 14
DT_FLAGS_1 = 0x6FFFFFFB
DF_1_PIE = 0x08000000


class Machine(enum.Enum):
    ARM = 40
    AARCH64 = 183
    X86 = 3
    X86_64 = 62
    OTHER = -1

    @classmethod
    def from_code(cls, code: int) -> "Machine":
        try:
            return cls(code)
        except ValueError:
            return cls.OTHER


class ElfType(enum.Enum):
    EXECUTABLE = "executable"
    SHARED_OBJECT = "shared_object"
    RELOCATABLE = "relocatable"
    OTHER = "other"


_ELF_TYPES = {ET_EXEC: ElfType.EXECUTABLE, ET_DYN: ElfType.SHARED_OBJECT, ET_REL: ElfType.RELOCATABLE}


@dataclass(frozen=True)
class ElfSummary:
    path: str
    machine: Machine
    elf_type: ElfType
    is_pie: bool
    needed: tuple[str, ...] = ()
    interpreter: str | None = None
    soname: str | None = None
    machine_code: int = 0
    bits: int = 32
    big_endian: bool = False

    @property
    def machine_label(self) -> str:
        if self.machine is Machine.OTHER:
            return f"Other({self.machine_code})"
        return {Machine.AARCH64: "AArch64", Machine.X86_64: "X86_64"}.get(self.machine, self.machine.name)

    def to_dict(self) -> dict:
        return {
            "path": self.path,
            "machine": self.machine_label,
            "elf_type": self.elf_type.value,
            "is_pie": self.is_pie,
            "needed": list(self.needed),
            "interpreter": self.interpreter,
            "soname": self.soname,
            "bits": self.bits,
            "endian": "big" if self.big_endian else "little",
        }


@dataclass
class _Layout:
    end: str
    bits: int
    ehdr: struct.Struct = field(init=False)
    phdr: struct.Struct = field(init=False)
    shdr: struct.Struct = field(init=False)
    dyn: struct.Struct = field(init=False)

    def __post_init__(self):
        e = self.end
        if self.bits == 32:
            self.ehdr = struct.Struct(e + "HHIIIIIHHHHHH")
            self.phdr = struct.Struct(e + "IIIIIIII")
            self.shdr = struct.Struct(e + "IIIIIIIIII")
            self.dyn = struct.Struct(e + "iI")
        else:
            self.ehdr = struct.Struct(e + "HHIQQQIHHHHHH")
            self.phdr = struct.Struct(e + "IIQQQQQQ")
            self.shdr = struct.Struct(e + "IIQQQQIIQQ")
            self.dyn = struct.Struct(e + "qQ")

    def unpack_phdr(self, data, off):
        f = self.phdr.unpack_from(data, off)
        if self.bits == 32:
            p_type, p_offset, p_vaddr, _paddr, p_filesz, _memsz, _flags, _align = f
        else:
            p_type, _flags, p_offset, p_vaddr, _paddr, p_filesz, _memsz, _align = f
        return p_type, p_offset, p_vaddr, p_filesz


def _unpack(st: struct.Struct, data: bytes, off: int, what: str):
    if off < 0 or off + st.size > len(data):
        raise MalformedElf(f"{what} at offset {off} runs past end of file ({len(data)} bytes)")
    return st.unpack_from(data, off)


def _cstring(data: bytes, off: int, limit: int, what: str) -> str:
    if not 0 <= off < limit:
        raise MalformedElf(f"{what} string offset {off} out of range")
    nul = data.find(b"\x00", off, limit)
    if nul < 0:
        raise MalformedElf(f"unterminated {what} string at offset {off}")
    return data[off:nul].decode("utf-8", errors="replace")


def inspect_binary(data: bytes, path="") -> ElfSummary:
    data = bytes(data)
    if data[:4] != ELF_MAGIC:
        raise NotElf(f"{path or 'input'}: not an ELF file")
    if len(data) < 16:
        raise MalformedElf("truncated ELF ident")
    ei_class, ei_data = data[4], data[5]
    if ei_class not in (1, 2):
        raise MalformedElf(f"bad EI_CLASS {ei_class}")
    if ei_data not in (1, 2):
        raise MalformedElf(f"bad EI_DATA {ei_data}")
    lay = _Layout("<" if ei_data == 1 else ">", 32 if ei_class == 1 else 64)

    (e_type, e_machine, _ver, _entry, e_phoff, e_shoff, _flags, _ehsize,
     e_phentsize, e_phnum, e_shentsize, e_shnum, _shstrndx) = _unpack(lay.ehdr, data, 16, "ELF header")

    loads, dynamic, interp = [], None, None
    if e_phnum:
        if e_phentsize < lay.phdr.size:
            raise MalformedElf(f"e_phentsize {e_phentsize} smaller than {lay.phdr.size}")
        for i in range(e_phnum):
            _check_room(lay.phdr, data, e_phoff + i * e_phentsize, "program header")
            p_type, p_offset, p_vaddr, p_filesz = lay.unpack_phdr(data, e_phoff + i * e_phentsize)
            if p_type == PT_LOAD:
                loads.append((p_vaddr, p_offset, p_filesz))
            elif p_type == PT_DYNAMIC and dynamic is None:
                dynamic = (p_offset, p_filesz)
            elif p_type == PT_INTERP and interp is None:
                if p_offset + p_filesz > len(data) or p_filesz == 0:
                    raise MalformedElf("PT_INTERP outside file")
                interp = data[p_offset:p_offset + p_filesz].split(b"\x00", 1)[0].decode("utf-8", "replace")

    sections = _read_sections(lay, data, e_shoff, e_shentsize, e_shnum)
    dyn_link = None
    if dynamic is None:
        for sh in sections:
            if sh[0] == SHT_DYNAMIC:
                dynamic = (sh[2], sh[3])
                dyn_link = sh[4]
                break

    needed_off, soname_off, strtab_addr, strsz, flags_1 = [], None, None, None, 0
    if dynamic is not None:
        off, size = dynamic
        if off + size > len(data):
            raise MalformedElf("dynamic section outside file")
        for i in range(size // lay.dyn.size):
            tag, val = lay.dyn.unpack_from(data, off + i * lay.dyn.size)
            if tag == DT_NULL:
                break
            if tag == DT_NEEDED:
                needed_off.append(val)
            elif tag == DT_SONAME:
                soname_off = val
            elif tag == DT_STRTAB:
                strtab_addr = val
            elif tag == DT_STRSZ:
                strsz = val
            elif tag == DT_FLAGS_1:
                flags_1 = val

    needed, soname = [], None
    if needed_off or soname_off is not None:
        strtab = _locate_strtab(strtab_addr, loads, sections, dyn_link)
        if strtab is None:
            raise MalformedElf("cannot locate dynamic string table")
        limit = len(data) if strsz is None else min(len(data), strtab + strsz)
        for v in needed_off:
            name = _cstring(data, strtab + v, limit, "DT_NEEDED")
            if name not in needed:
                needed.append(name)
        if soname_off is not None:
            soname = _cstring(data, strtab + soname_off, limit, "DT_SONAME")

    elf_type = _ELF_TYPES.get(e_type, ElfType.OTHER)
    is_pie = elf_type is ElfType.SHARED_OBJECT and (interp is not None or bool(flags_1 & DF_1_PIE))
    return ElfSummary(
        path=str(path),
        machine=Machine.from_code(e_machine),
        elf_type=elf_type,
        is_pie=is_pie,
        needed=tuple(needed),
        interpreter=interp,
        soname=soname,
        machine_code=e_machine,
        bits=lay.bits,
        big_endian=lay.end == ">",
    )


def _check_room(st, data, off, what):
    if off < 0 or off + st.size > len(data):
        raise MalformedElf(f"{what} at offset {off} runs past end of file")


def _read_sections(lay, data, shoff, shentsize, shnum):
    """(type, addr, offset, size, link) per section; empty when absent or unreadable."""
    if not shoff or not shnum or shentsize < lay.shdr.size:
        return []
    if shoff + shnum * shentsize > len(data):
        return []
    out = []
    for i in range(shnum):
        f = lay.shdr.unpack_from(data, shoff + i * shentsize)
        _name, sh_type, _flags, sh_addr, sh_offset, sh_size, sh_link = f[:7]
        out.append((sh_type, sh_addr, sh_offset, sh_size, sh_link))
    return out


def _locate_strtab(addr, loads, sections, dyn_link):
    if addr is not None:
        for vaddr, offset, filesz in loads:
            if vaddr <= addr < vaddr + filesz:
                return offset + (addr - vaddr)
        for sh_type, sh_addr, sh_offset, _size, _link in sections:
            if sh_type == SHT_STRTAB and sh_addr == addr and addr:
                return sh_offset
    if dyn_link is not None and 0 <= dyn_link < len(sections):
        return sections[dyn_link][2]
    return None


def is_elf(data: bytes) -> bool:
    return bytes(data[:4]) == ELF_MAGIC
