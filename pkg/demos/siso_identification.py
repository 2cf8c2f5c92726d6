"""Surge identification of a dry cylinder, start to finish.

Designs a 40-line multisine, simulates the load cell with noise chosen for a
0.5 kg mass RMSE, and identifies the frequency-dependent mass.
"""

import math

import numpy as np

from hexid import excitation as E
from hexid import plant as P
from hexid import sysid as S

MASS = 16.67

design = E.design_multisine(seed=2024)
print(f"{len(design.harmonics)} lines, {design.frequencies[0]:.2f}-{design.frequencies[-1]:.2f} Hz, "
      f"session {E.session_duration(design):.0f} s")

sigma = S.noise_for_mass_rmse(design, 0.5)
cell = P.LoadCellModel(noise_std=sigma)
model = P.dry_cylinder(MASS)
records = [P.simulate_experiment(E.build_trajectory(design, e), model, cell, seed=e)
           for e in range(design.n_experiments)]

frm, mats = S.identify(records, design)
m = mats.M_total[:, 0, 0]
print(f"load-cell noise {sigma:.2f} N")
print(f"mass: mean {m.mean():.3f} kg, median {np.median(m):.3f} kg, "
      f"rmse {math.sqrt(np.mean((m - MASS) ** 2)):.3f} kg")
for f, mi, si in list(zip(design.frequencies, m, mats.M_std[:, 0, 0]))[::8]:
    print(f"  {f:5.2f} Hz  {mi:7.3f} +- {si:.3f} kg")
