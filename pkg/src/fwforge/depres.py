"""Transitive shared-library closure and emulation rootfs staging.

Resolution is plain file lookup by NEEDED name: RPATH/RUNPATH and symbol
versions are ignored. Search roots are tried in order and, inside each,
``lib``, ``usr/lib``, ``system/lib`` and the root itself; first hit wins.
"""

from __future__ import annotations

import logging
import shutil
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path

from fwforge.elf import ElfSummary, ElfType, inspect_binary
from fwforge.errors import ElfError, MissingDependencies, StagingError

log = logging.getLogger(__name__)

LIBRARY_SUBDIRS = ("lib", "usr/lib", "system/lib", "")

PRE_LOLLIPOP_NOTE = (
    "non-PIE executable: requires pre-5.0 runtime "
    "(Android 5.0 and later refuse to load non-PIE executables)"
)


@dataclass
class DependencyClosure:
    root: Path
    search_roots: tuple[Path, ...]
    resolved: dict[str, Path] = field(default_factory=dict)
    missing: list[str] = field(default_factory=list)
    edges: list[tuple[str, str]] = field(default_factory=list)
    # library name -> search root it was found under
    origin: dict[str, Path] = field(default_factory=dict)
    summaries: dict[str, ElfSummary] = field(default_factory=dict)
    warnings: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "root": str(self.root),
            "search_roots": [str(r) for r in self.search_roots],
            "resolved": {k: str(v) for k, v in self.resolved.items()},
            "missing": list(self.missing),
            "edges": [list(e) for e in self.edges],
            "warnings": list(self.warnings),
        }

    def render_tree(self) -> str:
        """Indented dependency tree, each library expanded once."""
        children: dict[str, list[str]] = {}
        for dep, name in self.edges:
            children.setdefault(dep, []).append(name)
        lines = [str(self.root)]
        expanded = set()

        def walk(path: str, depth: int):
            for name in children.get(path, []):
                where = self.resolved.get(name)
                label = f"{name} => {where}" if where else f"{name} => not found"
                again = where is not None and str(where) in expanded
                lines.append("    " * depth + label + (" (see above)" if again else ""))
                if where is not None and not again:
                    expanded.add(str(where))
                    walk(str(where), depth + 1)

        expanded.add(str(self.root))
        walk(str(self.root), 1)
        return "\n".join(lines)


def find_library(name: str, search_roots) -> tuple[Path, Path] | None:
    if "/" in name:
        # Path-like NEEDED entries are looked up relative to each root.
        rel = name.lstrip("/")
        for root in search_roots:
            cand = Path(root) / rel
            if cand.is_file():
                return cand, Path(root)
        return None
    for root in search_roots:
        for sub in LIBRARY_SUBDIRS:
            cand = Path(root) / sub / name if sub else Path(root) / name
            if cand.is_file():
                return cand, Path(root)
    return None


def resolve_closure(root, search_roots) -> DependencyClosure:
    root = Path(root)
    roots = tuple(Path(r) for r in search_roots)
    summary = inspect_binary(root.read_bytes(), root)
    closure = DependencyClosure(root=root, search_roots=roots)
    closure.summaries[str(root)] = summary

    # The root is never re-added as a library of itself.
    seen = {root.name}
    if summary.soname:
        seen.add(summary.soname)
    missing = set()
    queue = deque([(root, summary)])
    while queue:
        path, summ = queue.popleft()
        for name in summ.needed:
            closure.edges.append((str(path), name))
            if name in seen:
                continue
            seen.add(name)
            hit = find_library(name, roots)
            if hit is None:
                missing.add(name)
                continue
            lib_path, origin = hit
            try:
                lib_summary = inspect_binary(lib_path.read_bytes(), lib_path)
            except (ElfError, OSError) as exc:
                msg = f"{name}: found at {lib_path} but unreadable ({exc})"
                log.warning(msg)
                closure.warnings.append(msg)
                missing.add(name)
                continue
            closure.resolved[name] = lib_path
            closure.origin[name] = origin
            closure.summaries[str(lib_path)] = lib_summary
            queue.append((lib_path, lib_summary))
    closure.missing = sorted(missing)
    return closure


@dataclass
class StagingPlan:
    dest: Path
    entries: list[tuple[Path, Path]] = field(default_factory=list)
    notes: list[str] = field(default_factory=list)
    missing: list[str] = field(default_factory=list)
    applied: bool = False

    def to_dict(self) -> dict:
        return {
            "dest": str(self.dest),
            "entries": [{"source": str(s), "dest": str(d)} for s, d in self.entries],
            "notes": list(self.notes),
            "missing": list(self.missing),
            "applied": self.applied,
        }

    def apply(self) -> None:
        for src, dst in self.entries:
            try:
                dst.parent.mkdir(parents=True, exist_ok=True)
                shutil.copy2(src, dst)
            except OSError as exc:
                raise StagingError(f"copy {src} -> {dst} failed: {exc}") from exc
        self.applied = True


def _relative_to_any(path: Path, roots) -> Path | None:
    for r in roots:
        try:
            return path.relative_to(r)
        except ValueError:
            continue
    return None


def stage_rootfs(closure: DependencyClosure, summaries, dest, *, allow_missing=False,
                 apply=False) -> StagingPlan:
    """Plan (and optionally perform) copying root + libraries into ``dest``.

    Libraries keep their path relative to the search root they came from. The
    root binary keeps its relative path if it lives under a search root,
    otherwise it goes to the top of ``dest``.
    """
    if closure.missing and not allow_missing:
        raise MissingDependencies(closure.missing)
    dest = Path(dest)
    plan = StagingPlan(dest=dest, missing=list(closure.missing))

    root_rel = _relative_to_any(closure.root, closure.search_roots) or Path(closure.root.name)
    plan.entries.append((closure.root, dest / root_rel))
    for name, path in closure.resolved.items():
        plan.entries.append((path, dest / path.relative_to(closure.origin[name])))

    by_path = {s.path: s for s in summaries}
    root_summary = by_path.get(str(closure.root)) or closure.summaries.get(str(closure.root))
    if root_summary is not None and not root_summary.is_pie and root_summary.elf_type is ElfType.EXECUTABLE:
        plan.notes.append(PRE_LOLLIPOP_NOTE)
    if closure.missing:
        plan.notes.append("staged with unresolved libraries: " + ", ".join(closure.missing))

    if apply:
        plan.apply()
    return plan
