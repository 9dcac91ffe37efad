"""Shape a field for a two-level system so its dipole radiates near w = 3.

The driving field may only use frequencies close to w = 1, and the goal is
to maximize the dipole spectrum around w = 3. Run with ``python3 demos/two_level_harmonics.py``.
"""

import numpy as np

from hgoct import RelaxationConfig, build, cosine_inverse, optimize, propagate_forward, target_spectrum


def band_energy(omega, spectrum, lo, hi):
    band = (omega >= lo) & (omega <= hi)
    return float(np.sum(spectrum[band] ** 2))


problem = build("tls")
omega = problem.fgrid.nodes
print(f"T = {problem.tgrid.T}, {problem.tgrid.n} time nodes, K_init = {problem.K_init}, tau = {problem.tau}")

# Keep an eye on the objective as the iterations go by.
def show(record):
    if record.index % 5 == 0:
        print(f"  iter {record.index:3d}  J = {record.j_total:.6f}  K = {record.K:.3g}  metric = {record.metric:.3g}")

initial = problem.initial_field
result = optimize(problem, RelaxationConfig.for_problem(problem, max_iterations=200), observer=show)
print(f"stopped: {result.termination} after {result.iterations} iterations")

# Where does the optimized field put its energy?
peak = omega[np.argmax(np.abs(result.field_spectrum))]
print(f"field spectrum peaks at w = {peak:.3f}")

# Compare the emitted dipole spectrum before and after.
signal0 = cosine_inverse(initial, problem.tgrid)
before = target_spectrum(propagate_forward(problem.model, signal0, problem.psi0, problem.tgrid),
                         problem.weights)
after = target_spectrum(result.trajectory, problem.weights)
for lo, hi in [(0.5, 1.5), (2.5, 3.5)]:
    print(f"dipole energy in [{lo}, {hi}]: {band_energy(omega, before, lo, hi):.4g} -> "
          f"{band_energy(omega, after, lo, hi):.4g}")
