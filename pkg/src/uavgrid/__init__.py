"""uavgrid: gridworld UAV coverage / data-harvesting simulation and learning.

A reproducible single-UAV gridworld with no-fly zones, radio-blocking
buildings, a camera coverage mission and a TDMA data-harvesting mission,
plus a from-scratch double deep Q-learner with pluggable recurrent cores
(none / LSTM / Bi-LSTM / GRU / Bi-GRU) and attention pooling.
"""

__version__ = "0.1.0"
