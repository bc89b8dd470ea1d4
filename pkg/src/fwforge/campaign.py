"""Fuzzing campaign economics across execution environments.

The battery model is linear: every test case costs the same share of the
budget, so the number of executions a budget buys is
``floor(budget_min * 60e6 / exec_time_us)``.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

from fwforge.errors import MissingPath

US_PER_S = 10**6
TIMEOUT_FACTOR = 10


@dataclass(frozen=True)
class ExecutionProfile:
    name: str
    exec_time_us: float
    power_budget_min: float | None = None
    memory_mb: int | None = None

    def __post_init__(self):
        if not self.exec_time_us > 0:
            raise ValueError(f"exec_time_us must be positive, got {self.exec_time_us}")
        if self.power_budget_min is not None and not self.power_budget_min > 0:
            raise ValueError(f"power_budget_min must be positive, got {self.power_budget_min}")
        if self.memory_mb is not None and not self.memory_mb > 0:
            raise ValueError(f"memory_mb must be positive, got {self.memory_mb}")

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "exec_time_us": self.exec_time_us,
            "power_budget_min": self.power_budget_min,
            "memory_mb": self.memory_mb,
        }


# Per-test-case times measured on the drone itself and on a BeagleBone-class board.
DRONE_BODY = ExecutionProfile("drone-body", 18_700)
EMBEDDED_BOARD = ExecutionProfile("embedded-board", 4_856)
PRESETS = {p.name: p for p in (DRONE_BODY, EMBEDDED_BOARD)}
PRESETS["drone"] = DRONE_BODY
PRESETS["board"] = EMBEDDED_BOARD

_PROFILE_KEYS = {
    "name": "name",
    "exec_us": "exec_time_us",
    "exec_time_us": "exec_time_us",
    "battery_min": "power_budget_min",
    "power_budget_min": "power_budget_min",
    "memory_mb": "memory_mb",
    "mem_mb": "memory_mb",
}


def parse_profile(text: str) -> ExecutionProfile:
    """Parse ``name=drone,exec_us=18700,battery_min=30`` or a preset name.

    A preset name may be combined with overrides: ``drone,battery_min=30``.
    """
    fields: dict = {}
    base = None
    for part in filter(None, (p.strip() for p in text.split(","))):
        if "=" not in part:
            if part not in PRESETS:
                raise ValueError(f"unknown profile preset {part!r}; known: {sorted(PRESETS)}")
            base = PRESETS[part]
            continue
        key, _, value = part.partition("=")
        key = key.strip()
        if key not in _PROFILE_KEYS:
            raise ValueError(f"unknown profile key {key!r}")
        fields[_PROFILE_KEYS[key]] = value.strip()
    if "name" in fields and "exec_time_us" not in fields and fields["name"] in PRESETS:
        base = base or PRESETS[fields["name"]]
    merged = base.to_dict() if base else {}
    for k, v in fields.items():
        if k == "name":
            merged[k] = v
        elif k == "memory_mb":
            merged[k] = int(v)
        else:
            merged[k] = float(v)
    if "exec_time_us" not in merged:
        raise ValueError(f"profile {text!r} lacks exec_us")
    merged.setdefault("name", "custom")
    return ExecutionProfile(**merged)


def speedup(a: ExecutionProfile, b: ExecutionProfile) -> float:
    """How many times faster ``b`` runs one test case than ``a``."""
    return a.exec_time_us / b.exec_time_us


@dataclass(frozen=True)
class CampaignPlan:
    profile: ExecutionProfile
    target_execs: int
    achievable_execs: int | None  # None: no power budget
    wall_time_s: float
    feasible: bool

    def to_dict(self) -> dict:
        return {
            "profile": self.profile.to_dict(),
            "target_execs": self.target_execs,
            "achievable_execs": self.achievable_execs,
            "wall_time_s": self.wall_time_s,
            "feasible": self.feasible,
        }


def achievable_execs(p: ExecutionProfile) -> int | None:
    if p.power_budget_min is None:
        return None
    budget_us = Fraction(p.power_budget_min) * 60 * US_PER_S
    return math.floor(budget_us / Fraction(p.exec_time_us))


def plan_campaign(p: ExecutionProfile, target_execs: int) -> CampaignPlan:
    if target_execs < 0:
        raise ValueError("target_execs must be >= 0")
    cap = achievable_execs(p)
    runs = target_execs if cap is None else min(target_execs, cap)
    wall = float(Fraction(runs) * Fraction(p.exec_time_us) / US_PER_S)
    return CampaignPlan(p, target_execs, cap, wall, cap is None or cap >= target_execs)


def cycle_timeline(profiles, cycles) -> list[dict]:
    """Wall time in seconds to run each cycle count under each profile."""
    rows = []
    for n in cycles:
        row = {"cycles": n}
        for p in profiles:
            row[p.name] = float(Fraction(n) * Fraction(p.exec_time_us) / US_PER_S)
        rows.append(row)
    return rows


def timeline_csv(profiles, cycles) -> str:
    rows = cycle_timeline(profiles, cycles)
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=["cycles", *[p.name for p in profiles]], lineterminator="\n")
    writer.writeheader()
    writer.writerows(rows)
    return buf.getvalue()


def emit_fuzz_config(target_binary, rootfs, corpus_dir, profile: ExecutionProfile,
                     findings_dir="findings") -> str:
    """``key=value`` run configuration for an external AFL-style fuzzer.

    ``command`` is a JSON argv list so no shell quoting is involved; the
    target path is given relative to the rootfs when it lives inside it.
    """
    target, root, corpus = Path(target_binary), Path(rootfs), Path(corpus_dir)
    for label, p in (("target", target), ("rootfs", root), ("corpus", corpus)):
        if not p.exists():
            raise MissingPath(f"{label} path does not exist: {p}")
    timeout_us = math.ceil(Fraction(profile.exec_time_us) * TIMEOUT_FACTOR)
    timeout_ms = math.ceil(Fraction(timeout_us, 1000))
    try:
        in_root = "/" + target.resolve().relative_to(root.resolve()).as_posix()
    except ValueError:
        in_root = "/" + target.name
    argv = ["afl-fuzz", "-i", str(corpus), "-o", str(findings_dir), "-t", str(timeout_ms)]
    if profile.memory_mb is not None:
        argv += ["-m", str(profile.memory_mb)]
    argv += ["--", "chroot", str(root), in_root, "@@"]
    lines = [
        f"target={target}",
        f"target_in_rootfs={in_root}",
        f"rootfs={root}",
        f"corpus={corpus}",
        f"findings={findings_dir}",
        f"profile={profile.name}",
        f"exec_time_us={_num(profile.exec_time_us)}",
        f"timeout_us={timeout_us}",
        f"timeout_ms={timeout_ms}",
    ]
    if profile.memory_mb is not None:
        lines.append(f"memory_mb={profile.memory_mb}")
    lines.append("command=" + json.dumps(argv))
    return "\n".join(lines) + "\n"


def _num(x: float) -> str:
    return str(int(x)) if float(x).is_integer() else repr(float(x))
