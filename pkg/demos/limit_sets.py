"""Limit sets: interval maps, finite impact sets, 1-D hybrid systems and counterexamples.

On a one-dimensional section with an injective return map only two
long-run behaviours are possible: a fixed point or a two-cycle.  With a
finite set of impact points every orbit is eventually periodic.  The
counterexamples show what breaks when the hypotheses fail.
"""

# %%
import math

from hybrid_cycles import (
    DiscreteMap,
    HybridOptions,
    check_hypotheses,
    classify_interval_map,
    detect_cycle_finite,
    hybrid_1d_run,
    omega_estimate,
)
from hybrid_cycles.models import make_annulus, make_logistic_line, make_vdp_hybrid

opts = HybridOptions().with_tolerance(1e-10)
for name, P, dom, x0 in [
    ("x/2 + 1", lambda x: x / 2 + 1, (0, 4), 0.0),
    ("-x", lambda x: -x, (-1, 1), 0.7),
    ("4x(1-x)", lambda x: 4 * x * (1 - x), (0, 1), 0.3),
]:
    res = classify_interval_map(DiscreteMap(P, dom), x0)
    print(f"P(x) = {name:8s}: {res.label:15s} orbit {[round(v, 6) for v in res.orbit]}, "
          f"injective {res.diagnostics['injective']}")

# %%
# Cycle detection on a finite set is exact.
res = detect_cycle_finite({1: 2, 2: 3, 3: 2}.__getitem__, 1)
print(f"1->2->3->2: {res.label}, cycle {res.orbit}, transient {res.transient_length}")

# %%
# One-dimensional hybrid systems.  Each run reports the legs of the cycle
# and the lower bound on inter-impact times.
res = hybrid_1d_run(lambda x: 2.0 - x, 0.0, {1.0: 0.0}, (0.0, 1.5), impact_points=[1.0], fixed_points=[2.0], opts=opts)
d = res.diagnostics
print(f"x' = 2 - x, S = {{1}}: period {d['period']:.10f} (ln 2 = {math.log(2):.10f}), "
      f"min gap {d['min_inter_impact_time']:.4f} >= eta/xi = {d['gap_lower_bound']:.4f}")
res = hybrid_1d_run(lambda x: 1.0, 0.0, {1.0: 1.5, 2.0: 0.0}, (0.0, 2.0), impact_points=[1.0, 2.0], opts=opts)
print(f"x' = 1, S = {{1, 2}}: {res.label}, impact map {res.diagnostics['impact_map']}")

# %%
# Omega-limit estimate of the Van der Pol hybrid orbit.
est = omega_estimate(make_vdp_hybrid(), [1.0, 3.0], 30.0, 30.0, opts)
print(f"Van der Pol: {est.cycle.label} at y- = {est.cycle.orbit[0]:.6f}, period {est.period_time:.6f}")

# %%
# Counterexamples.  A closed section (the annulus) lets crossings fill
# the circle with no periodic orbit; a non-injective reset (the logistic
# line) breaks the monotonicity the interval-map argument needs.
annulus = make_annulus()
est = omega_estimate(annulus, [1.5, 0.0], 10.0, 2000.0, opts)
print(f"annulus: {est.cycle.label}, dense crossings {est.dense}, "
      f"closed-chart check {check_hypotheses(annulus, annulus.extras['chart'])['C.4'].status}")
logistic = make_logistic_line()
c2 = check_hypotheses(logistic, logistic.extras["chart"])["C.2"]
print(f"logistic line: monotonicity check {c2.status} near s = {c2.witness:.3f}")
