"""The optimality story end to end on a built-in problem.

Enumerate piecewise-constant controls to find the oracle optimum, solve
the first (and second) adjoint along the optimal path, then scan the
pointwise optimality value over the whole test lattice: at an optimum
it must be nonnegative up to the discretization tolerance. The
variation ladder ties the spike-variation expansions to their predicted
orders.
"""

from fermisde.catalog import build
from fermisde.control import (
    brute_force_optimum,
    first_adjoint,
    mp_scan,
    second_adjoint_deterministic,
    solve_state,
    variation_ladder,
)
from fermisde.ito import AdaptedProcess

GRID7 = [-0.9, -0.6, -0.3, 0.0, 0.3, 0.6, 0.9]

print("== oracle optimum on control_in_noise, n = 24 ==")
problem, grid = build("control_in_noise", n_steps=24)
u_opt, j_opt = brute_force_optimum(problem, grid, 3, GRID7)
weights = sorted({u_opt[k].vacuum().real for k in range(grid.n_steps)})
print("optimal block weights:", weights, " cost:", j_opt)

xbar = solve_state(problem, u_opt)
adjoints = first_adjoint(problem, xbar, u_opt)
P = second_adjoint_deterministic(problem, xbar, u_opt, adjoints)
print("second adjoint at t=0: alpha =", P.P[0].alpha.real,
      " beta =", P.P[0].beta.real)

tol = max(1e-6, grid.dt)
scan = mp_scan(problem, xbar, u_opt, adjoints, P=P, tol=tol)
print(f"lattice scan: {len(scan.entries)} entries, min = {scan.minimum:.4g} "
      f">= {-tol:.4g} -> {'optimal' if scan.passed else 'NOT optimal'}")

print("\n== the same scan rejects a non-optimal control ==")
bad = AdaptedProcess.constant_scalar(grid, 0.9)
xbad = solve_state(problem, bad)
adj_bad = first_adjoint(problem, xbad, bad)
P_bad = second_adjoint_deterministic(problem, xbad, bad, adj_bad)
scan_bad = mp_scan(problem, xbad, bad, adj_bad, P=P_bad, tol=tol)
print(f"min = {scan_bad.minimum:.4g} at {scan_bad.argmin} "
      f"-> {'optimal' if scan_bad.passed else 'NOT optimal'}")

print("\n== variation ladder on lq_scalar, n = 64 ==")
lq, lq_grid = build("lq_scalar", n_steps=64, x0_scale=1.0)
lad = variation_ladder(
    lq,
    AdaptedProcess.constant_scalar(lq_grid, 0.3),
    AdaptedProcess.constant_scalar(lq_grid, -0.9),
    [0.25, 0.125, 0.0625, 0.03125],
)
print("slopes (targets 1, 1, 2, 2, 2 as lower bounds):")
for name in ("xi_sq", "y_sq", "z_sq", "eta_sq", "zeta_sq"):
    slope = lad["slopes"][name]
    mark = "vacuous" if lad["vacuous"][name] else f"{slope:.3f}"
    print(f"  {name:8s} {mark}")
print("ladder verdict:", "pass" if lad["pass"] else "FAIL")
