"""Two instrument faults and how the pipeline exposes them.

A gauge fault that shrinks the lateral forces shows up as a uniform mass
bias and is undone by rescaling. A trigger delay leaves the magnitude alone
and is read off the phase slope.
"""

from hexid import excitation as E
from hexid import plant as P
from hexid import sysid as S

MASS = 16.67
model = P.dry_cylinder(MASS)


def run(design, cell):
    return [P.simulate_experiment(E.build_trajectory(design, e), model, cell)
            for e in range(design.n_experiments)]


d = E.design_multisine(dofs=(0, 1), amplitude=0.005, optimize=False, seed=2024)
recs = run(d, P.LoadCellModel(gauge_fault=(1 / 1.15, 0.0)))
_, raw = S.identify(recs, d)
_, fixed = S.identify(recs, d, rescale=1.15)
for i, name in enumerate("XY"):
    print(f"{name}{name}: faulty {raw.M_total[:, i, i].mean():.3f} kg, "
          f"rescaled {fixed.M_total[:, i, i].mean():.3f} kg")

d = E.design_multisine(optimize=False, seed=2024)
frm, _ = S.identify(run(d, P.LoadCellModel(trigger_delay=0.0411)), d)
tau, clean = S.estimate_delay(frm)
print(f"trigger delay {1e3 * tau:.2f} ms, quadratic trend flag {clean.trend_flag}")
