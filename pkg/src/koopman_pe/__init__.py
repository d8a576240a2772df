"""Persistency-of-excitation diagnostics for Koopman (eDMD) models."""
from .dictionary import Dictionary, hermite_dictionary, lift, monomial_dictionary, state_dictionary
from .doe import Region, design_pe_ics, sample_region
from .edmd import KoopmanModel, fit_edmd, fit_trajectories, predict
from .evaluation import ExperimentConfig, fig_preset, rank_error_correlation, run_basin_experiment
from .ode_sim import RepressilatorParams, SimConfig, Trajectory, repressilator_field, simulate
from .pe_analysis import PECertificate, PEConfig, analyze, autocovariance, pe_certificate, power_spectrum

__version__ = "0.1.0"
