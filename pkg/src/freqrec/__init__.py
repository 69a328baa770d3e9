"""freqrec: a desk-scale laboratory for frequency-aware sequential
recommendation.

Pipeline: interaction logs -> leave-one-out splits -> item co-occurrence
graph -> pretrained ID embeddings -> optional graph low-pass purification
-> frozen causal Transformer with optional per-layer temporal frequency
modulation -> ranking evaluation, plus a layer-wise spectral analyzer that
measures how much low-graph-frequency energy survives each layer.
"""

__version__ = "0.1.0"
