"""Huge forcing just outside a box barely reaches its middle.

The quadratic absorption caps the solution near the forcing, and the
interior sup decays like the inverse square distance, whatever the height.
"""
from roughsbm.environment import zero_environment
from roughsbm.estimates import box_sup_profile, interior_solve
from roughsbm.grid import GridSpec
from roughsbm.mollifier import build_kit

grid = GridSpec(24.0, 256)
env = zero_environment(grid, build_kit(grid))
for m in (1e2, 1e4):
    u = interior_solve(env, kappa=200.0, n=8, m=m, T=2.0, dt=4e-3, laplacian="lattice")
    prof = box_sup_profile(u, 8)
    print(f"m = {m:g}: " + "  ".join(f"l={l}: {prof(l):.2e} (l^2 * sup = {l * l * prof(l):.3f})"
                                     for l in (1, 2, 4)))
