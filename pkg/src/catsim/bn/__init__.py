"""Discrete Bayesian-network student models."""

from .catalog import CATALOG, build_catalog, default_skill_map, planted_network
from .document import NetworkSpec, network_from_dict, network_to_dict
from .engine import BnModel, SkillJoint, entropy, predict_answers_bn, select_question_entropy
from .inference import exact_joint, exact_marginals, probability_of_evidence
from .learning import EmFit, em_learn, initial_network, log_likelihood
from .network import (
    BnNetwork,
    BnNode,
    BnStructure,
    NoisyOrCPD,
    TableCPD,
    expand_noisy_or,
    free_parameter_count,
    noisy_or_probability,
    parameter_counts,
    sample_network,
)

__all__ = [
    "CATALOG",
    "BnModel",
    "BnNetwork",
    "BnNode",
    "BnStructure",
    "EmFit",
    "NetworkSpec",
    "NoisyOrCPD",
    "SkillJoint",
    "TableCPD",
    "build_catalog",
    "default_skill_map",
    "em_learn",
    "entropy",
    "exact_joint",
    "exact_marginals",
    "expand_noisy_or",
    "free_parameter_count",
    "initial_network",
    "log_likelihood",
    "network_from_dict",
    "network_to_dict",
    "noisy_or_probability",
    "parameter_counts",
    "planted_network",
    "predict_answers_bn",
    "probability_of_evidence",
    "sample_network",
    "select_question_entropy",
]
