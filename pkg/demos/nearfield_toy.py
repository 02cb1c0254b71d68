"""
Near-field tomography on a single slice
=======================================

A random ellipsoid slice is propagated to holograms at Fresnel number 0.01,
corrupted with 3% Gaussian noise and reconstructed with the regularized
Newton solver.  The per-iteration error shows the semi-convergence that the
stop rules have to deal with.
"""

import numpy as np

from pctomo.forward import intensity, make_model
from pctomo.grids import GridSpec, emit_grayscale
from pctomo.regularization import Constraint
from pctomo.simulate import PhantomSpec, add_gaussian_noise, equispaced_angles, phantom_ellipsoids
from pctomo.solver import SolverConfig, StopRule, run

# %%
# Setup: my = 1 turns the volume into a 2D slice
grid = GridSpec.toy2d(64)
angles = equispaced_angles(128)
model = make_model(grid, angles, "nearfield", nf=0.01)
truth = phantom_ellipsoids(grid, PhantomSpec(seed=4, target_magnitude=np.pi)).data

data = add_gaussian_noise(intensity(model, truth), 0.03, seed=1)
print("hologram stack", data.data.shape, "noise norm %.3g" % data.err_norm)

# %%
# Run to a fixed number of steps, logging the error against the truth
cfg = SolverConfig(
    max_newton=20,
    stop=StopRule.fixed(20),
    constraint=Constraint.pure_phase(),
    alpha_ref=truth,
    monitor=truth,
)
res = run(model, data.data, cfg)

for k, (rho, res_k, it) in enumerate(zip(res.history.rho, res.history.residual, res.history.cg_iters)):
    flag = "  <- discrepancy" if res_k <= data.err_norm and k and res.history.residual[k - 1] > data.err_norm else ""
    print(f"k={k:2d}  rho={rho:.3f}  residual/noise={res_k / data.err_norm:6.2f}  cg={it}{flag}")

k_best = int(np.argmin(res.history.rho))
print("best iterate", k_best, "rho %.3f" % res.history.rho[k_best])

# %%
# Slices for a quick look
emit_grayscale("nearfield_truth.pgm", truth[0].real)
emit_grayscale("nearfield_recon.pgm", res.volume[0].real)
