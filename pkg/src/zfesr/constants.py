"""Physical constants and literature parameter values.

Unit conventions used throughout the package: ordinary frequencies in MHz
(never angular, except where a constant is explicitly marked angular),
times in microseconds, magnetic fields in gauss, distances in nanometers.
Factors of 2*pi enter only inside time propagators and explicitly angular
constants.
"""

import math

# NV center ground-state parameters.
NV_ZERO_FIELD_SPLITTING_MHZ = 2870.0
NV_GYROMAGNETIC_MHZ_PER_G = -2.803  # ordinary frequency per gauss, signed

# Bohr magneton as an ordinary frequency per gauss (mu_B / h).
BOHR_MHZ_PER_G = 1.3996245
FREE_ELECTRON_G = 2.0023

# Electron-electron dipolar coupling constant, angular convention:
# C0 = 2*pi * 52 MHz nm^3.  Divide by 2*pi for ordinary-frequency couplings.
DIPOLAR_C0_ANGULAR_MHZ_NM3 = 2.0 * math.pi * 52.0

# 15N P1 center hyperfine principal values (literature).
P1_15N_A_PERP_MHZ = 114.0
P1_15N_A_ZZ_MHZ = 159.9

# Nitroxide radical hyperfine principal values (axial, 14N nucleus).
NITROXIDE_A_MHZ = (23.2, 23.2, 144.4)

# Orientation-averaged squared dipolar coefficients per resonance peak class,
# as used by the detection-area signal budget.  The left and right peaks of
# the axial S=1/2, I=1/2 pattern carry 5/4, the middle peak 3/4.
ETA_SQ_LEFT_RIGHT = 5.0 / 4.0
ETA_SQ_MIDDLE = 3.0 / 4.0
