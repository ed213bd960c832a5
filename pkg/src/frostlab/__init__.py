"""frostlab: exact dyadic-measure toolkit — regular decompositions,
Lipschitz-function covers, multiscale non-concentration certificates,
robust entropy bounds, projection/distance experiments, and plate pruning."""

__version__ = "0.1.0"
