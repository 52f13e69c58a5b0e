"""Anatomy of a piecewise-linear penalization.

Interpolating u^2 on {-1, -0.5, 0, 0.5, 1} produces four chords with slopes
{-1.5, -0.5, 0.5, 1.5}.  This script walks through the objects the synthesis
relies on: values and extensions, subdifferentials, the convex conjugate,
the |u|-barriers and the interpolation error bound.
"""

import numpy as np

from multilevel_control import (
    Partition,
    barrier_constants,
    build_penalization,
    conjugate,
    interp_error_bound,
    quadratic_profile,
    slopes,
    subdifferential,
)

part = Partition(np.array([-1.0, -0.5, 0.0, 0.5, 1.0]))
pen = build_penalization(quadratic_profile(), part)

print("values at the interpolation points:", pen.value(part.points))
print("value at 0.25 (chord midpoint):    ", pen.value(0.25))
print("value at 2.0 (chord extension):    ", pen.value(2.0))
print("chord slopes (= control levels):   ", slopes(pen))

print("\nsubdifferentials:")
for u in (0.25, 0.0, 0.5):
    iv = subdifferential(pen, u)
    print(f"  at {u:+.2f}: [{iv.lower:+.2f}, {iv.upper:+.2f}]")
iv = subdifferential(pen, 1.0, clamped=True)
print(f"  at +1.00 (clamped to the interpolation interval): [{iv.lower}, {iv.upper}]")

conj = conjugate(pen)
print(f"\nconjugate: finite on [{conj.domain[0]}, {conj.domain[1]}]")
for v in (-1.5, -0.5, 0.0, 0.5, 1.0, 1.5):
    print(f"  conj({v:+.2f}) = {conj.value(v):+.4f}")
back = conjugate(conj)
uu = np.linspace(-2, 2, 9)
print("biconjugation max error:", np.max(np.abs(back.value(uu) - pen.value(uu))))

a1, a2 = barrier_constants(pen, (-1.0, 1.0))
print(f"\nbarriers on [-1, 1]: {a1} * |u| <= pen(u) <= {a2} * |u|")

seg_bounds, global_bound = interp_error_bound(quadratic_profile(), part)
uu = np.linspace(-1, 1, 2001)
measured = np.max(np.abs(pen.value(uu) - uu**2))
print(f"interpolation error: measured {measured:.4f}, bound {global_bound:.4f}")
