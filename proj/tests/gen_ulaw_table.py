#!/usr/bin/env python3
"""Regenerates ulaw_table.inc: G.711 mu-law codes for a 256-point grid over
the int16 range, from a plain segment-table encoder written independently of
the C++ one (sign-magnitude input, bias 0x84, clip 32635)."""

SEG_END = [0xFF, 0x1FF, 0x3FF, 0x7FF, 0xFFF, 0x1FFF, 0x3FFF, 0x7FFF]


def encode(x):
    sign = 0x80 if x < 0 else 0x00
    mag = -x if x < 0 else x
    mag = min(mag, 32635) + 0x84
    seg = next(i for i, e in enumerate(SEG_END) if mag <= e)
    mant = (mag >> (seg + 3)) & 0x0F
    return (sign | (seg << 4) | mant) ^ 0xFF


def main():
    grid = [round(-32768 + k * 65535 / 255) for k in range(256)]
    rows = []
    for i in range(0, 256, 8):
        rows.append("    " + " ".join(f"{{{g}, 0x{encode(g):02X}}}," for g in grid[i:i + 8]))
    print("\n".join(rows))


if __name__ == "__main__":
    main()
