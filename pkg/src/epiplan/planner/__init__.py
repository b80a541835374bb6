"""Centralized allocation: GA over next-pointer chromosomes plus an exhaustive oracle."""

from .chromosome import Chromosome, InvalidRoutesError, MalformedChromosomeError, decode, encode, random_chromosome
from .fitness import (
    BILEVEL,
    MINMAX,
    REWARD,
    Evaluator,
    FitnessReport,
    RewardParams,
    evaluate,
    interaction_penalty,
    interaction_reward,
    potential_reward,
    reward_params_for,
    robot_penalty,
    robot_reward,
)
from .operators import erx_crossover, greedy_refine, mutate, two_opt
from .oracle import InstanceTooLargeError, brute_force_mtsp
from .solver import GaParams, Plan, solve

__all__ = [
    "BILEVEL", "MINMAX", "REWARD", "Chromosome", "Evaluator", "FitnessReport", "GaParams",
    "InstanceTooLargeError", "InvalidRoutesError", "MalformedChromosomeError", "Plan", "RewardParams",
    "brute_force_mtsp", "decode", "encode", "erx_crossover", "evaluate", "greedy_refine",
    "interaction_penalty", "interaction_reward", "mutate", "potential_reward", "random_chromosome",
    "reward_params_for", "robot_penalty", "robot_reward", "solve", "two_opt",
]
