"""Lane-keeping laboratory.

A self-contained desk-scale pipeline: a simulated two-lane course seen
through an emulated event camera, driven by four interchangeable
controllers (deep Q-network, Q-policy transferred to a spiking network,
a directly reward-trained spiking network, and a static Braitenberg
baseline), with lap-metric tooling to compare them.
"""

__version__ = "0.1.0"
