"""rmrlab: simulate, verify and adversarially schedule abortable leader election.

The package splits along the natural seams of the problem:

``model``
    the deterministic execution semantics: segmented registers, schedules
    with abort tokens, remote-memory-reference accounting over a combined
    cache/segment locality rule, and the knowledge / hidden / safe predicates;
``subjects``
    register-only abortable leader-election algorithms (plus deliberately
    broken ones) implementing the model's program interface;
``objects``
    abortable test-and-set, name consensus and compare-and-swap over a small
    typed cache-coherent runtime;
``explorer``
    bounded-exhaustive and sampled checkers: outcome vectors, bivalency,
    both-lose search, leader-election safety, bounded abort, deadlock
    freedom, and linearizability of CAS histories;
``adversary``
    the round construction that forces every surviving process to pay one
    remote reference per round while the configuration stays safe;
``cli``
    the ``rmrlab`` command.
"""

from .explorer import ExplorationBudget, Verdict
from .model import LOSE, WIN, AlgorithmSpec, Configuration, RegisterId, RegisterValue, Simulator
from .subjects import REGISTRY, make_subject

__all__ = [
    "AlgorithmSpec",
    "Configuration",
    "ExplorationBudget",
    "LOSE",
    "REGISTRY",
    "RegisterId",
    "RegisterValue",
    "Simulator",
    "Verdict",
    "WIN",
    "make_subject",
]
