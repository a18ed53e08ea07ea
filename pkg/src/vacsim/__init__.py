"""Vaccine-allocation toolkit: epidemic projection, policy learning, audit.

The feed-forward flow: fit per-region compartmental parameters, train an RL
agent on the distribution environment, replay it into a logged dataset, train
the contextual bandit on that log, and emit normalized day-wise distribution
sets across bucket sizes. A baseline comparison quantifies averted cases and
a Bayesian-network audit checks the allocation's causal footprint.
"""

__version__ = "0.1.0"
