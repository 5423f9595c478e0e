"""Populations, assignment mechanisms, oracles and the Monte Carlo runner"""
from simulation.assignment import cluster_randomization, complete_randomization
from simulation.populations import (
    PotentialPopulation,
    gen_cluster_scenario,
    gen_scenario,
    gen_treatment_dependent,
    reveal,
    with_constant_effect,
)

__all__ = [
    "PotentialPopulation",
    "cluster_randomization",
    "complete_randomization",
    "gen_cluster_scenario",
    "gen_scenario",
    "gen_treatment_dependent",
    "reveal",
    "with_constant_effect",
]
