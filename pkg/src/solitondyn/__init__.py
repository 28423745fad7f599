"""Soliton dynamics for Hartree and Gross-Pitaevskii equations in slowly varying potentials."""
