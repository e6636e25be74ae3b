"""Patent image classification toolkit.

Trains an MLP head on frozen-encoder image embeddings, organizes the two
label spaces (10 image types; hierarchical view perspectives with C2/C4/C7
granularities), and produces macro-accuracy / confusion-matrix reports.
"""

__version__ = "0.1.0"
