# Bell-basis hashing QKD simulation lab
__version__ = "1.0.0"
__author__ = "Quantum Key Distribution Lab"
