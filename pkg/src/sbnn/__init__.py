"""Low-rank factorized variational Bayesian neural networks.

The package trains networks whose weight matrices carry variational
posteriors over low-rank factors (W = A B^T), and ships an executable
bounds lab for the closed-form theory (tail energies, induced covariance,
PAC-Bayes and Gaussian-complexity bounds) plus a CLI harness for the
desk-scale experiments.
"""

__version__ = "0.1.0"
