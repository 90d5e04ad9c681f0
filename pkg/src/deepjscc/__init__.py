"""Deep joint source-channel coding for wireless image transmission.

A convolutional encoder/decoder pair is trained end-to-end through a
differentiable noisy-channel layer (AWGN or slow Rayleigh fading) and
benchmarked against separation-based digital baselines: a capacity-based
upper bound and a practical LDPC + QAM chain.
"""

__version__ = "0.1.0"
