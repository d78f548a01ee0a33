"""A hybrid system whose return map is known in closed form.

``r' = 1 - r, theta' = 1`` with impact on the ray ``theta = alpha`` and
reset ``(r, alpha) -> (beta r, gamma)``.  One return takes time
``alpha - gamma`` and the return map is affine, so every number the
numerical pipeline produces can be checked exactly.
"""

# %%
import math

import numpy as np

from hybrid_cycles import HybridOptions, derivative_planar, determinant_test, find_fixed_point
from hybrid_cycles.models import PolarParams, make_polar, make_polar_3d

opts = HybridOptions().with_tolerance(1e-12)
p = PolarParams(alpha=math.pi, beta=2.0, gamma=0.0)
print(f"slope beta e^(gamma - alpha) = {p.contraction:.8f}")
print(f"closed-form fixed radius     = {p.fixed_radius:.10f} (post-reset {p.beta * p.fixed_radius:.4f})")

# %%
# The same system in the Cartesian plane and in (r, theta) coordinates.
# The individual factors are coordinate dependent, the product is not.
for coords in ("cartesian", "polar"):
    sys = make_polar(p, coords)
    chart = sys.extras["chart"]
    r = find_fixed_point(sys, chart, 0.5, opts)
    rep = derivative_planar(sys, chart, r, opts)
    print(
        f"{coords:9s}: r* = {r:.10f}, factors ({rep.reset_derivative:.4f}, {rep.speed_ratio:.4f}, "
        f"{rep.sine_ratio:.4f}, {rep.divergence_factor:.4f}), |P'| = {rep.product:.8f}, FD {rep.fd_check:.8f}"
    )

# %%
# In polar coordinates the divergence is -1 everywhere, so the divergence
# factor is exp(-(alpha - gamma)) and the speed and sine ratios cancel.
rep = derivative_planar(make_polar(p, "polar"), make_polar(p, "polar").extras["chart"], p.fixed_radius, opts)
print(f"speed * sine = {rep.speed_ratio * rep.sine_ratio:.12f}, exp(-T) = {math.exp(-math.pi):.8f}")

# %%
# Extruding by a decoupled ``z' = -z`` gives a three-dimensional system.
# The determinant of the 2x2 return-map derivative is bounded by the
# product of the same kind of factors: here beta e^(-2T).
sys3 = make_polar_3d(p)
x = np.array([p.fixed_radius * math.cos(p.alpha), p.fixed_radius * math.sin(p.alpha), 0.0])
value, verdict, details = determinant_test(sys3, x, p.alpha - p.gamma, opts)
print(f"|det P'| = {value:.8f}, beta e^(-2T) = {p.beta * math.exp(-2 * math.pi):.8f} -> {verdict}")
