"""Physical and numerical defaults shared by the library and the command line.

Every value here is echoed into run manifests, so a manifest never depends
on the defaults of the version that produced it.
"""

# grid and time step
DX = 0.05
CFL = 0.2                 # dt = CFL * dx^2
WINDOW_LEFT = 60.0
WINDOW_RIGHT = 120.0
# the right half-width used for long front runs (leading edge spreads like sqrt(t))
WINDOW_RIGHT_LONG = 300.0

# initial data
STEEPENING = 2.0          # compression factor of smoothed step data
SCALED_WAVE_GAMMA = 1.2

# front tracking
TRACE_EVERY = 100         # steps between front samples
TAIL_GAMMA = 0.3
FIT_WINDOW = (250.0, 2000.0)
SG_WINDOW = 21            # samples in the local quadratic fit of dm/dt
