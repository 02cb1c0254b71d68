"""
Contrast transfer function versus Newton
========================================

For a weak object the first Newton step from zero solves a Tikhonov
regularized CTF problem, so a direct CTF inversion and one Newton step
should look alike.  For a stronger object the CTF linearization breaks down
while further Newton steps keep improving the projections.
"""

import numpy as np

from pctomo.baseline import ctf_invert
from pctomo.forward import intensity, make_model
from pctomo.grids import GridSpec
from pctomo.regularization import Constraint
from pctomo.simulate import PhantomSpec, add_gaussian_noise, equispaced_angles, phantom_ellipsoids
from pctomo.solver import SolverConfig, StopRule, run

grid = GridSpec.toy2d(48)
angles = equispaced_angles(96)
nf = 0.01
model = make_model(grid, angles, "nearfield", nf)
P = model.projector


def rho_proj(p, ref):
    return np.linalg.norm(p - ref) / np.linalg.norm(ref)


# %%
# Sweep the object strength; the CTF cutoff and the Newton stop are both
# chosen against the truth, which is the most generous setting for each
for mag in (0.1, 1.0, np.pi):
    truth = phantom_ellipsoids(grid, PhantomSpec(seed=2, target_magnitude=mag)).data
    proj = P.apply(truth).real
    data = add_gaussian_noise(intensity(model, truth), 0.01, seed=3).data

    ctf = min(rho_proj(ctf_invert(data, nf, cutoff=c, pad=model.pad), proj) for c in np.logspace(-3, 0, 13))

    cfg = SolverConfig(max_newton=20, stop=StopRule.best(truth, patience=3), constraint=Constraint.pure_phase())
    res = run(model, data, cfg)
    newton = rho_proj(P.apply(res.volume).real, proj)
    print(f"|N| = {mag:5.3f}:  CTF rho_proj {ctf:.3f}   Newton rho_proj {newton:.3f}  (k={res.index})")
