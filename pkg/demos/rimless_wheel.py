"""A rimless wheel rolling down a slope.

Between impacts the stance leg is an inverted pendulum; at each impact
the next leg lands and angular velocity is multiplied by cos(2 delta).
Walking is a hybrid limit cycle balancing the energy gained per step
against the energy lost at impact.
"""

# %%
import math

from hybrid_cycles import HybridOptions, derivative_planar, find_fixed_point, impact_sequence
from hybrid_cycles.models import (
    RimlessWheelParams,
    energy_gain,
    energy_loss,
    existence_inequality,
    make_rimless_wheel,
    rimless_step_oracle,
)
from hybrid_cycles.sweep import Axis, SweepSpec, run_sweep

opts = HybridOptions().with_tolerance(1e-11)
p = RimlessWheelParams(delta=math.pi / 10, alpha=math.pi / 30, zeta=9.8)
lhs, rhs, holds = existence_inequality(p)
print(f"existence condition: {lhs:.6f} > {rhs:.6f} -> {holds}")

# %%
# Simulate a few steps from a gentle push.
sys = make_rimless_wheel(p)
for k, ev in enumerate(impact_sequence(sys, sys.extras["x0"], 12, opts, horizon=100.0)):
    print(f"step {k:2d}: t = {ev.t:7.4f}  pre-impact rate {ev.x_minus[1]: .8f}")

# %%
# The step map also follows from energy conservation between impacts.
for v in (-1.0, -1.5, -2.5):
    print(f"from {v}: next pre-impact rate {rimless_step_oracle(p, v):.10f}")

# %%
# At the gait the energy books balance, and the return-map derivative is
# exactly the impact loss factor cos^2(2 delta) since the swing conserves
# energy and the field is divergence free.
chart = sys.extras["chart"]
v_star = find_fixed_point(sys, chart, -1.5, opts, horizon=50.0)
rep = derivative_planar(sys, chart, v_star, opts, horizon=50.0)
print(f"gait rate {v_star:.10f}: gain {energy_gain(p):.7f}, loss {energy_loss(p, v_star):.7f}")
print(f"|P'| = {rep.product:.7f}, cos^2(2 delta) = {math.cos(2 * p.delta) ** 2:.7f}, FD {abs(rep.fd_check):.7f}")

# %%
# Sweep slope and leg spacing.  The condition holds in a band above the
# diagonal delta = alpha; print a coarse character map of it.
spec = SweepSpec(
    Axis("alpha", 0.0, math.pi / 8, 16, open_lo=True),
    Axis("delta", "alpha", math.pi / 4, 24, open_lo=True, open_hi=True),
)
cells = run_sweep(spec)
for i in range(16):
    row = cells[24 * i : 24 * (i + 1)]
    print(f"alpha {row[0].alpha:.3f} | " + "".join("#" if c.holds else "." for c in row))
print(f"{sum(c.holds for c in cells)} of {len(cells)} cells admit a gait")
