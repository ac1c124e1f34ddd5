"""Link-level simulator for RIS-aided covert communication.

A transmitter reaches a receiver and an eavesdropper through a reconfigurable
intelligent surface. Both ends run a small CNN signal/noise detector; the
transmitter adds channel-compensated adversarial perturbations to hide from the
eavesdropper and picks the RIS codeword that best separates the two detectors.
"""

from riscovert.signals import ComplexFrame, NoiseModel, dbm_to_watts, watts_to_dbm

__version__ = "0.1.0"

__all__ = ["ComplexFrame", "NoiseModel", "dbm_to_watts", "watts_to_dbm", "__version__"]
