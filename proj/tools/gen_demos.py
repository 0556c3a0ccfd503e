#!/usr/bin/env python3
"""Writes the bundled demo tracks in data/demos.

Each track is one gait cycle of knee and ankle positions relative to the
pelvis, y up, in the source's own units (pixels for the video-like sources).
Joint-angle curves are periodic sums of bumps; the left leg runs half a cycle
behind the right.
"""
import math
import pathlib
import random

OUT = pathlib.Path(__file__).resolve().parent.parent / "data" / "demos"


def bump(phase, center, width):
    d = (phase - center + 0.5) % 1.0 - 0.5
    return math.exp(-0.5 * (d / width) ** 2)


def make(name, note, half_step, px_per_m, thigh, shank, hip_mean, hip_amp, knee_base,
         knee_stance, knee_swing, jitter, seed):
    rng = random.Random(seed)
    n = 2 * half_step
    rows = []
    for f in range(n):
        parts = {}
        for side, shift in (("r", 0.0), ("l", 0.5)):
            ph = (f / n + shift) % 1.0
            hip = hip_mean + hip_amp * math.cos(2 * math.pi * ph)
            flex = knee_base + knee_stance * bump(ph, 0.15, 0.08) + knee_swing * bump(ph, 0.68, 0.12)
            kx, ky = thigh * math.sin(hip), -thigh * math.cos(hip)
            sh = hip - flex
            ax, ay = kx + shank * math.sin(sh), ky - shank * math.cos(sh)
            parts[side + "_knee"] = (kx, ky)
            parts[side + "_foot"] = (ax, ay)
        for part in ("r_knee", "l_knee", "r_foot", "l_foot"):
            x, y = parts[part]
            x = round(x * px_per_m + rng.uniform(-jitter, jitter), 1)
            y = round(y * px_per_m + rng.uniform(-jitter, jitter), 1)
            rows.append(f"{f},{part},{x},{y}")
    text = [f"# {name}: {note}",
            f"# frames_per_half_step={half_step}",
            f"# cadence: one frame per 0.03 s control step, {2 * half_step} frames per gait cycle",
            "# units: pixels, pelvis-relative, y up",
            "frame,part,x,y"] + rows
    (OUT / f"{name}.csv").write_text("\n".join(text) + "\n")


OUT.mkdir(parents=True, exist_ok=True)
make("human", "jogging gait, manually keyed joint centres with about 2 px of placement noise",
     half_step=12, px_per_m=240, thigh=0.45, shank=0.45, hip_mean=0.12, hip_amp=0.38,
     knee_base=0.25, knee_stance=0.35, knee_swing=1.05, jitter=2.0, seed=11)
make("cartoon", "exaggerated cartoon run, long shins and high knee lift",
     half_step=8, px_per_m=300, thigh=0.36, shank=0.56, hip_mean=0.25, hip_amp=0.7,
     knee_base=0.1, knee_stance=0.15, knee_swing=1.9, jitter=0.0, seed=12)
make("game", "stiff video-game walk cycle with little knee bend",
     half_step=16, px_per_m=64, thigh=0.5, shank=0.42, hip_mean=0.0, hip_amp=0.3,
     knee_base=0.05, knee_stance=0.05, knee_swing=0.45, jitter=0.5, seed=13)
