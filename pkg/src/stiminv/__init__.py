"""Pseudoinverse estimation for many-to-one stimulus-response mappings.

Given a fixed dataset of (parameter, response) pairs generated by a
many-to-one forward mapping, the package estimates a pseudoinverse: a map
from responses back to a restricted parameter domain on which the forward
mapping is invertible.  Four estimators are provided:

* weighted regression with jointly learned sample weights (``pathfinder``)
* naive inversion through an estimated forward model (``baselines.ni``)
* mixture density network conditional mode (``baselines.mdn``)
* masked autoregressive flow with gradient-ascent mode search
  (``baselines.maf``)

plus dataset generators, response-based splitting, NMAE scoring against
the forward-model oracle, a multi-trial benchmark harness, and a CLI.
"""

__version__ = "0.1.0"
