"""coordsim: strong-coordination coding toolkit for two-node networks.

Submodules:

* :mod:`coordsim.probability` -- exact pmf algebra and information measures
* :mod:`coordsim.region`      -- coordination rate-region membership and search
* :mod:`coordsim.polar`       -- GF(2) polar transform and successive cancellation
* :mod:`coordsim.construction`-- polarized entropy profiles and index sets
* :mod:`coordsim.codec`       -- block-Markov encoder/decoder with chaining
* :mod:`coordsim.binning`     -- exact small-blocklength binning oracles
* :mod:`coordsim.bundled`     -- bundled example models
* :mod:`coordsim.cli`         -- the ``coordsim`` command line front end
"""

__version__ = "0.1.0"
