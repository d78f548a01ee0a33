"""Van der Pol with an impact on x = 1.

The oscillator ``x'' - mu (1 - x^2) x' + x = 0`` is stopped every time it
crosses ``x = 1`` moving left, and its velocity is scaled by -1.5.  The
impacts settle onto a hybrid limit cycle; this script finds it, itemizes
the factors of the return-map derivative and checks them against finite
differences.
"""

# %%
# Simulate from (1, 3) and watch the impact values settle.
import numpy as np

from hybrid_cycles import HybridOptions, derivative_planar, find_fixed_point, hybrid_flow
from hybrid_cycles.models import VdpHybridParams, make_vdp_hybrid

opts = HybridOptions().with_tolerance(1e-10)
sys = make_vdp_hybrid()
traj = hybrid_flow(sys, [1.0, 3.0], 1e4, opts, stop_after=100, record=False)
for k in (0, 1, 2, 5, 10, 99):
    ev = traj.impacts[k]
    print(f"impact {k:3d}: t = {ev.t:8.4f}  y- = {ev.x_minus[1]: .8f}  y+ = {ev.x_plus[1]: .8f}")

# %%
# Solve for the fixed point of the return map directly, in the chart
# coordinate ``y`` along the section.
chart = sys.extras["chart"]
y_star = find_fixed_point(sys, chart, -1.0, opts)
print(f"fixed point y- = {y_star:.10f}")

# %%
# The derivative is a product of four factors: the reset slope, the
# speed ratio at the two ends of the flow arc, the ratio of crossing
# sines and the exponential of the divergence integral.
rep = derivative_planar(sys, chart, y_star, opts)
print(f"reset derivative  {rep.reset_derivative:.6f}")
print(f"speed ratio       {rep.speed_ratio:.6f}")
print(f"sine ratio        {rep.sine_ratio:.6f}")
print(f"divergence factor {rep.divergence_factor:.6f}")
print(f"|P'| = {rep.product:.6f}  finite difference {rep.fd_check:.6f}  ({rep.verdict})")

# %%
# A linear reset ``(1, y) -> (1, m (y - A) + B)`` pinned at the same
# impact values keeps the orbit and changes only the reset slope, so
# |P'| grows linearly with |m| and the orbit loses stability near
# |m| = 1 / 0.2225.
for m in (1.0, 2.0, 4.0, 4.4, 4.6):
    lin = make_vdp_hybrid(VdpHybridParams(m=-m))
    r = derivative_planar(lin, chart, y_star, opts, with_fd=False)
    print(f"m = -{m:<4}  |P'| = {r.product:.4f}  |P'|/|m| = {r.product / m:.5f}  {r.verdict}")

# %%
# Past the threshold the fixed point repels, and the simulated impacts
# drift to a new attractor.  For m = +4.6 it is a two-impact cycle.
lin = make_vdp_hybrid(VdpHybridParams(m=4.6))
tail = hybrid_flow(lin, [1.0, 3.0], 1e6, opts, stop_after=400, record=False).impacts[-4:]
print("last post-impact y values:", np.round([ev.x_plus[1] for ev in tail], 4))
