"""modwell: quantum and classical dynamics of a spin-F atom in a
magneto-optical double-well lattice.

Recoil units throughout: lengths in 1/k, energies in E_R, time in
hbar/E_R (the recoil frequency is E_R/h = 2 kHz).
"""

__version__ = "0.1.0"

from .errors import (CalibrationError, ConfigurationError, DomainError,
                     IllPosedError, IntegrationError, ModwellError,
                     NumericalError, ResolutionError, StepSizeError,
                     TuningError)
from .model import (ENERGY_UNIT_PER_SECOND, TIME_UNIT_SECONDS,
                    AdiabaticSpectrum, DoubleWell, LatticeParams,
                    SpinMatrices, adiabatic_spectrum, band_potential,
                    build_spin_matrices, classical_potential, default_params,
                    effective_field, fictitious_field, field_magnitude, force,
                    gauge_correction, lowest_band_well, pendulum_coefficients,
                    potential_matrix, precession_field, scalar_potential,
                    zeta_grid)
from .classical import (ClassicalState, FrequencyPair, LyapunovResult,
                        lyapunov_batch,
                        PendulumActionAngle, ResonanceHit, SectionPoint,
                        Trajectory, adiabatic_frequencies, alpha_surface,
                        break_time, energy, flow, integrate,
                        island_center_candidates, lyapunov,
                        pendulum_action_angle, poincare_section,
                        resonance_scan, section_arrays)
from .quantum import (BandPopulations, EnergyLevels, KineticDensity,
                      Propagator, SpinorWavefunction, band_populations,
                      bo_levels, evolve, find_cat_time, first_zero_crossing,
                      full_hamiltonian_levels, fz_series, initial_state,
                      kinetic_energy_density, momentum_grid,
                      observable_series, observables, fgh_levels_1d)
from .phasespace import (CoherentLabel, Ensemble, MagnetizationComparison,
                         ReferenceFrame, alpha_from_phase_point,
                         classical_q_values, compare_magnetization,
                         default_frame, fibonacci_sphere, mean_fz_classical,
                         metropolis_sample, motional_coherent,
                         phase_point_from_alpha, propagate_ensemble,
                         q_position_marginal, q_value, q_values,
                         reduced_position_density, spin_coherent)
from .reconstruct import (NoiseFloor, ProbeSet, PseudoDensity, build_probes,
                          calibrate_noise_floor, coherent_product_state,
                          fock_coherent, reconstruct_deconvolution,
                          reconstruct_pseudo_density)
