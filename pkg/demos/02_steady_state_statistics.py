"""Steady-state excitation statistics of a blockaded disk.

Without coherence relaxation the blockaded ensemble saturates at
<n_R> = 1/2 with Q = -1/2 (an equal mixture of zero and one excitation).
Coherence relaxation populates the non-symmetric single-excitation states
too; the ground state then keeps only a fraction approaching 1/(N+1), so
<n_R> approaches N/(N+1) and the counting statistics become strongly
sub-Poissonian.
"""

import numpy as np

import rydtraj as rt
from rydtraj.hilbert import PruneRule
from rydtraj.mcwf import RunOptions
from rydtraj.observables import ExcitationDistribution, mandel_q, poisson_pmf

N_ATOMS = 16

for gamma_z in (0.0, 0.3):
    params = rt.PhysicalParams(1.0, 0.075, gamma_z, 15e9 / 85e3)
    w = rt.excitation_linewidth(params)
    diameter = 0.7 * rt.blockade_distance(params)
    spacing = rt.spacing_for_target_n(diameter, N_ATOMS, "plaquette")
    geometry = rt.build_disk_lattice(spacing, diameter, "plaquette")
    delta = rt.interaction_matrix(geometry, params)
    basis = rt.build_basis(N_ATOMS, 4, prune=PruneRule(delta.delta, 400 * w))
    h = rt.build_effective_hamiltonian(basis, delta, params)

    times = np.linspace(0.0, 120.0, 241)
    acc = rt.run_ensemble(
        h, params, times, 150, master_seed=7,
        options=RunOptions(scheme="ifrk4", tail_from=60.0),
    )
    tails = acc.tail_n_means()
    pr = acc.tail_pr_mean()
    q = mandel_q(ExcitationDistribution(pr))
    print(f"gamma_z = {gamma_z}:")
    print(f"  <n_R> = {tails.mean():.3f} +- {tails.std() / np.sqrt(len(tails)):.3f}")
    print(f"  Q     = {q:.3f}")
    print(f"  p_R   = {np.array2string(pr, precision=4)}")
    print(f"  Poisson with the same mean: "
          f"{np.array2string(poisson_pmf(float(tails.mean()), len(pr) - 1), precision=4)}")
