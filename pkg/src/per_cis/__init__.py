"""Proxy-based robustness under distribution shift.

Modules:

* :mod:`per_cis.graph`: distribution shift diagrams, d-separation, vertex classes
* :mod:`per_cis.dropout_scm`: dropout structural causal models, exact enumeration, sampling
* :mod:`per_cis.info`: entropies, mutual information, closed forms and bound checks
* :mod:`per_cis.bootstrap`: dependence graph given Y and seed-based proxy labelling
* :mod:`per_cis.cis`: causal information splitting via per-stratum auxiliary models
* :mod:`per_cis.learn`: L1 logistic regression and metrics
* :mod:`per_cis.bench`: synthetic and tabular benchmarks
"""
from .dataset import NULL, Dataset
from .dropout_scm import DropoutScm, JointTable, enumerate_joint, sample
from .graph import Dag, DistributionShiftDiagram, VertexRole, d_separated

__all__ = ["NULL", "Dataset", "Dag", "DistributionShiftDiagram", "DropoutScm", "JointTable", "VertexRole",
           "d_separated", "enumerate_joint", "sample"]
__version__ = "0.1.0"
