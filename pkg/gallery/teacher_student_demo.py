"""Distance from a student to its teacher as curves and points grow.

The teacher is a fixed functional MLP. Students with the same
architecture learn from ``n`` curves each observed at ``m`` random noisy
points; their test error is measured with exact integrals, so it shrinks
only if the fitted weights approach the teacher's.
"""

from fmlp.experiments import teacher_student_trial

sizes = [(50, 20), (200, 80), (800, 320)]
print("seed  " + "  ".join(f"n={n},m={m}".rjust(13) for n, m in sizes))
for seed in range(3):
    mses = [teacher_student_trial(n, m, seed) for n, m in sizes]
    print(f"{seed:4d}  " + "  ".join(f"{v:13.2e}" for v in mses))
