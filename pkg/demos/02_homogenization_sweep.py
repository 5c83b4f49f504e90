"""
Oscillating coefficients and their homogenized limit
====================================================

Solve -(a(x/eps) y')' = 1 on (0, 1) for shrinking eps and compare with the
constant-coefficient problem for the effective tensor.
"""
from gclab.core import ControlSpace, Microstructure
from gclab.hconv import epsilon_sweep, weak_rhs_test

sp = ControlSpace.isotropic({"soft": 1.0, "stiff": 4.0}, 1)
bar = Microstructure.laminate(sp, ["soft", "stiff"], 0.5, 8)

# 2.5 is the plain average of the phases; it is the wrong limit
rep = epsilon_sweep(bar, [1 / 8, 1 / 16, 1 / 32], 1.0, resolution=1024, comparator=[[2.5]])
print("effective coefficient", rep.effective.entries[0, 0])
for row, c in zip(rep.rows, rep.comparator_errors):
    print(f"eps = 1/{round(1 / row.eps):<3d} relative L2 error {row.l2_error:.4f}   plain average {c:.4f}")

# a zero-mean oscillation added to the source hardly changes the picture
weak = weak_rhs_test(bar, [1 / 16, 1 / 32], 1.0, resolution=1024)
print("error ratios with an oscillating source", [round(r, 4) for r in weak.ratios])
