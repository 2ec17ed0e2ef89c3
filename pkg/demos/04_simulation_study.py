"""Rejection-rate curves: data-driven pairing vs random pairing vs the envelope.

Reproduces a desk-scale version of the simulation exercise: the data-driven
policy re-picks the pairing in every draw from the estimated pair statistics
and should track the top of the band formed by all 720 fixed pairings, while
a random pairing sits in the middle.  Raise REPS for tighter curves.
"""


from crscombine import DgpSpec, rejection_curve

REPS = 400
BETAS = [-3.0, -1.5, 0.0, 1.5, 3.0]
spec = DgpSpec(variant="dgp2", h=4)

data_curve = rejection_curve(spec, BETAS, "crs_data", reps=REPS, alpha=0.05, seed=21)
rand_curve = rejection_curve(spec, BETAS, "crs_random", reps=REPS, alpha=0.05, seed=21)
envelope = rejection_curve(spec, BETAS, "all_omegas", reps=150, alpha=0.05, seed=21)
lo, hi = envelope.envelope()

print(f"design dgp2, h = 4, alpha = 0.05, {REPS} replications")
print(f"{'beta':>6} {'data-driven':>12} {'random':>8} {'band low':>9} {'band high':>10}")
for i, beta in enumerate(BETAS):
    print(f"{beta:6.1f} {data_curve.points[i].reject_rate:12.3f} "
          f"{rand_curve.points[i].reject_rate:8.3f} {lo[i]:9.3f} {hi[i]:10.3f}")

print("\nAt beta = 0 every policy stays near the attainable size 2/64 = 0.031;")
print("away from zero the data-driven pairing pushes toward the upper band edge.")
