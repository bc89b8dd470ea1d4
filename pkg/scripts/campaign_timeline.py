"""Wall-clock time per fuzzing cycle count for the drone and the board profiles.

Writes a CSV and prints the battery-bounded plan for a 30 minute flight.
"""

import argparse
from pathlib import Path

from fwforge.campaign import DRONE_BODY, EMBEDDED_BOARD, ExecutionProfile, plan_campaign, speedup, timeline_csv


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--csv", type=Path, default=Path("timeline.csv"))
    ap.add_argument("--battery-min", type=float, default=30)
    ap.add_argument("--max-exp", type=int, default=7, help="cycles up to 10**max_exp")
    args = ap.parse_args()

    profiles = [DRONE_BODY, EMBEDDED_BOARD]
    cycles = [10**k for k in range(args.max_exp + 1)]
    args.csv.write_text(timeline_csv(profiles, cycles))
    print(f"wrote {args.csv}")
    print(f"speedup board vs drone: {speedup(DRONE_BODY, EMBEDDED_BOARD):.3f}x")

    flight = ExecutionProfile("drone-flight", DRONE_BODY.exec_time_us, power_budget_min=args.battery_min)
    for target in cycles:
        p = plan_campaign(flight, target)
        state = "ok" if p.feasible else f"capped at {p.achievable_execs}"
        print(f"{target:>10} cycles on battery: {p.wall_time_s:10.1f}s  {state}")


if __name__ == "__main__":
    main()
