"""Familywise thresholds for the three worked analyses (ball of top LKC 2571)."""

import argparse

from rftstat import StatDescriptor, ball_region, threshold


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--lkc3", type=float, default=2571.0)
    ap.add_argument("--alpha", type=float, default=0.05)
    a = ap.parse_args()
    ball = ball_region(3, a.lkc3)
    print("region LKCs:", ", ".join(f"{x:.2f}" for x in ball.lkc))
    rows = [
        ("Hotelling d=3 nu=34", threshold(StatDescriptor("hotelling", d=3, nu=34), ball, a.alpha)),
        ("Roy d=3 eta=3 nu=28", threshold(StatDescriptor("roy", d=3, eta=3, nu=28), ball, a.alpha)),
    ]
    for n in (31, 34, 36):
        st = StatDescriptor("maxcorr", d=3, eta=3, n=n)
        rows.append((f"max corr, fixed reference, n={n}", threshold(st, ball, a.alpha)))
        rows.append((f"max corr, both regions halved, n={n}", threshold(st, ball, a.alpha, ball, True)))
    for name, t in rows:
        print(f"{name:40s} {t:.4f}")


if __name__ == "__main__":
    main()
