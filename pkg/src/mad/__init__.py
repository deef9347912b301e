"""Microservice anomaly detector.

Checks whether splitting a monolith's entities across microservices lets
previously serializable functionality interleavings produce non-serializable
behavior, by enumerating dependency cycles with an SMT solver and classifying
each as a concrete isolation anomaly.
"""

__version__ = "0.1.0"
