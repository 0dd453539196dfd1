"""Dual-modal graph embedding toolkit for recommendation.

Static mode builds a frequency-weighted item graph and embeds weighted
random walks; dynamic mode keeps per-edge timestamps and embeds
time-respecting walks, with attribute-based vectors for items that have no
interactions. Both feed an attention-pooled ranker evaluated by AUC/GAUC.
"""

__version__ = "0.1.0"
