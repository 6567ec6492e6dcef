"""
Where the detectors see the attack
==================================

Sweeps the attacker's offset against model error and against noise power on
the coarse 11x11 grids, and prints the TP/FN maps.
"""

from covert_mitm import alpha_grid, noise_grid, run_grid


def show(rows, spec, label):
    print(f"\n{label} ({spec.axis2} across, gamma_ref down)")
    print("         " + " ".join(f"{v:8.3g}" for v in spec.axis2_values))
    for g in spec.gamma_refs:
        cells = [r for r in rows if r.gamma_ref == g]
        print(f"{g:+8.2f} " + " ".join(f"{r.result.label_pasad + '/' + r.result.label_cusum:>8}"
                                       for r in cells))


# Each cell reads PASAD/CUSUM. The gamma_ref = 0 row and the alpha = 1 column
# stay silent: nothing is injected, or everything injected is cancelled.
spec = alpha_grid(coarse=True)
rows, _ = run_grid(spec)
show(rows, spec, "model error grid")

# Detectors are recalibrated at every noise level, so louder noise buys the
# attacker a higher threshold.
spec = noise_grid(coarse=True)
rows, _ = run_grid(spec)
show(rows, spec, "noise grid")
tp = {name: sum(getattr(r.result, f"label_{name}") == "TP" for r in rows) for name in ("pasad", "cusum")}
print("\ntrue positives:", tp)
