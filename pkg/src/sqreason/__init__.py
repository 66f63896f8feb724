"""Reasoning toolkit for description logics with number restrictions on
transitive roles (SQ), plus nominals (SOQ) or controlled inverses (SIQ-).

Decides satisfiability and (finite) query entailment at desk scale via
canonical tree decompositions, tree automata, and a colored-blocking
finite-model construction, all cross-checkable against brute-force oracles.
"""

__version__ = "0.1.0"
