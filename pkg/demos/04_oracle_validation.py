"""Trajectory engine versus the dense Lindblad master equation.

For a small cluster the full density-matrix evolution is tractable; the
trajectory average must agree with it within the Monte Carlo error.  The
comparison below reports the trace distance at each sample time against
three times the bootstrap statistical scale.
"""

import numpy as np

import rydtraj as rt
from rydtraj.mcwf import RunOptions
from rydtraj.oracle import compare_with_trajectories

params = rt.PhysicalParams(1.0, 0.12, 0.25, 1.0)
# four atoms on a 2x2 plaquette, nearest-neighbor shift 6
pos = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
geometry = rt.lattice.geometry_from_positions(pos)
delta = rt.interaction_matrix(geometry, rt.PhysicalParams(1.0, 0.12, 0.25, 6.0))

times = np.linspace(0.2, 4.0, 16)
report = compare_with_trajectories(
    delta, params, times, n_traj=800, master_seed=11,
    options=RunOptions(scheme="ifrk4"),
)

print(" t      trace distance   3 x stat. scale")
for t, d, e in zip(report.sample_times, report.trace_distances, report.stat_errors):
    print(f"{t:5.2f}   {d:14.4f}   {3 * e:15.4f}")
print(f"max <n_R> deviation: {report.max_observable_dev:.4f}")
print("PASS" if report.passed else "FAIL")
