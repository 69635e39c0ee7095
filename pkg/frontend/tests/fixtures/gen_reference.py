"""Dump curve reference values from the Python implementation.

Run from the repo root:  python3 frontend/tests/fixtures/gen_reference.py
Writes curve_reference.json next to this file; the frontend test suite
checks the TypeScript port against it (fractions to 1e-12, pixels exactly).
"""

import json
from pathlib import Path

from pse_lab.curves import ALL_CURVES, CurveSpec, pixel_position, progress_fraction

N_FRACTIONS = 65
PIXEL_CASES_S = [0.0, 0.4, 1.0, 1.7, 2.049, 2.5, 3.3, 4.0, 4.6, 4.999, 5.0]


def main() -> None:
    rows = []
    for cid in ALL_CURVES:
        spec = CurveSpec(id=cid)
        fractions = []
        for i in range(N_FRACTIONS):
            u = i / (N_FRACTIONS - 1)
            fractions.append([u, progress_fraction(spec, u)])
        pixels = [[t, pixel_position(spec, t)] for t in PIXEL_CASES_S]
        rows.append({
            "curve": cid.value,
            "duration_s": spec.duration_s,
            "track_px": spec.track_px,
            "fractions": fractions,
            "pixels": pixels,
        })
    out = Path(__file__).with_name("curve_reference.json")
    out.write_text(json.dumps(rows, indent=1))
    print(f"wrote {out}")


if __name__ == "__main__":
    main()
