"""Frozen-encoder feature export for the patent classification pipeline.

Runs pretrained image encoders in inference mode over the images listed in
a manifest CSV and writes their pooled features to a PEMB v1 file, ready
for MLP-head training downstream. Encoder weights are never updated.
"""

__version__ = "0.1.0"
