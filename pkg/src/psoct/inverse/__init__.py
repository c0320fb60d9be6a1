"""k-space reconstruction of the orthotropic susceptibility."""
