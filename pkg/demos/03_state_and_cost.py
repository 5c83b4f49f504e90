"""
Semilinear state equation and the cost of a control
====================================================
"""
import numpy as np

from gclab.core import ControlField, ControlSpace, Partition
from gclab.nonlinearity import make_nonlinearity
from gclab.state import evaluate_cost, solve_state

# -y'' = 1 with zero boundary values: the integral of y is 1/12
sp = ControlSpace.isotropic({"unit": 1.0}, 1)
nl = make_nonlinearity(sp, source=1.0)
c = ControlField.constant(Partition((1.0,), 0), sp, "unit")
for n in (64, 256, 1024):
    J = evaluate_cost(solve_state(c, nl, resolution=n), c, nl)
    print(f"M={n:5d}  J - 1/12 = {J - 1 / 12:.2e}")

# a cubic damping term on a two-phase bar; Newton residuals shrink fast
sp2 = ControlSpace.isotropic({"soft": 1.0, "stiff": 4.0}, 1, values=[0, 1])
nl2 = make_nonlinearity(sp2, "cubic-decreasing", source=3.0, control=-1.0, decay=2.0)
c2 = ControlField(Partition((1.0,), 2), sp2, labels=[0, 1, 1, 0])
y = solve_state(c2, nl2, resolution=128)
print("Newton residuals", [f"{r:.1e}" for r in y.residuals])
print("max |y| =", round(y.max_norm(), 6), " J =", round(evaluate_cost(y, c2, nl2), 8))
print("started elsewhere, same state:",
      np.abs(solve_state(c2, nl2, resolution=128, y0=0.5).nodal - y.nodal).max() < 1e-8)
