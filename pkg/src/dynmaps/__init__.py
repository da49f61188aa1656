"""Maps of dynamics (CLiFF, time-conditioned CLiFF, STeF) and map-guided
long-term pedestrian trajectory prediction."""

__version__ = "0.1.0"
