"""Dual-embedding GAN speech domain adaptation.

Converts clean source-domain spectrograms into simulated target-domain
spectrograms carrying specified noise and channel characteristics, then
adapts a downstream enhancement model on the simulated pairs.
"""

__version__ = "0.1.0"
