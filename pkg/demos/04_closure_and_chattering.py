"""
Why classical optimal controls may not exist
============================================

With a tracking cost the best piecewise-constant control keeps improving as
the partition is refined, and a relaxed (mixed) control does better still.
"""
from gclab.cesari import hull_equivalence_test
from gclab.config import validate_config
from gclab.core import ControlSpace
from gclab.nonlinearity import tabulated_nonlinearity
from gclab.optimize import Instance, refinement_study, relaxed_optimum

cfg = validate_config("chattering_1d")
op = cfg.section("optimize")
inst = Instance(cfg.space, cfg.nonlinearity(), cfg.lengths, op["resolution"])
study = refinement_study(inst, [0, 1, 2, 3], op["budget"])
for r in study:
    print(f"level {r.level}: J = {r.J:.6e}")
rel = relaxed_optimum(inst, study[-1].descent.control, op["pair"])
print(f"relaxed laminate: J = {rel.J:.6e}")

# when A does not depend on the control, slab mixtures fill the convex hull of (f, f0)
sp = ControlSpace.isotropic({"a": 2.0, "b": 2.0, "c": 2.0}, 1)
nl = tabulated_nonlinearity(sp, [1.0, -0.5, 0.2], [0.3, 0.1, -0.4])
rep = hull_equivalence_test([0.5], 0.0, sp, nl, steps=32)
print(f"hull vs slab mixtures: Hausdorff {rep.hausdorff:.1e} over {rep.n_samples} mixtures")
