"""Desk-scale calculus of ultradifferentiable weights and jet extension.

Subpackages:

- ``seqcore``    weight sequences and their decay/counting functions
- ``fncore``     weight functions, conjugates, integral transforms, matrices
- ``conditions`` finite-range decision procedures with witness constants
- ``jets``       jets on finite compact sets, Taylor fields, certificates
- ``geometry``   dyadic cube covers of the complement of a compact set
- ``pou``        certified bump functions and partitions of unity
- ``extend``     the degree-scheduled extension operator and its verifier
- ``cli``        command-line driver, config schema, report/CSV emission
"""

from . import conditions, errors, extend, fncore, geometry, jets, pou, seqcore
from .conditions import ChainCertificate, Verdict
from .fncore import WeightFunction, WeightMatrix
from .jets import CompactSet, Ultrajet
from .seqcore import SequenceView, WeightSequence

__all__ = [
    "ChainCertificate", "CompactSet", "SequenceView", "Ultrajet", "Verdict",
    "WeightFunction", "WeightMatrix", "WeightSequence",
    "conditions", "errors", "extend", "fncore", "geometry", "jets", "pou",
    "seqcore",
]
__version__ = "0.1.0"
