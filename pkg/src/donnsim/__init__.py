"""VO2 differential oscillatory neural network simulator."""
