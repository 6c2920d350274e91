"""Achievable rate-distortion regions for L-channel multiple descriptions.

Evaluates the single-shared-message (VKG) and combinatorial-message-sharing
(CMS) inner bounds for finite-alphabet sources, and reproduces numerical
separations between them for the binary symmetric source.
"""

__version__ = "0.1.0"
